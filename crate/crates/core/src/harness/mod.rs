//! Scenario files, the end-to-end pipeline, reports, plot data and sweeps.

mod export;
mod scenario_file;
mod sweep;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{export_plot_data, ComparisonRow, ExportPaths, GroundTruthRow, SourceRow};
pub use scenario_file::{ArraySpec, PipelineSpec, ScenarioFile, ScenarioSpec, BUNDLED_SCENARIO};
pub use sweep::{sweep, write_sweep_csv, SweepParameter, SweepRow};

use crate::edm::ThresholdPolicy;
use crate::forward::{
    simulate_echoes_with, EchoSet, GroundTruth, SimulationError, SimulationOptions, SourceKind, TrueSource,
};
use crate::geometry::{unapply_lineage, Defect, LayerStack, Point2D};
use crate::labeling::{label_echoes, Labeling, LabelingError};
use crate::reconstruction::{
    evaluate, localize_source, reconstruct_defects, DefectEstimate, LocalizationError, Metrics, SourceEstimate,
};

pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const ECHOES_FILE: &str = "echoes.json";
pub const LABELS_FILE: &str = "labels.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Schema,
    Simulate,
    Calibrate,
    Label,
    Localize,
    Reconstruct,
    Evaluate,
    Export,
    Sweep,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Schema => "schema",
            Stage::Simulate => "simulate",
            Stage::Calibrate => "calibrate",
            Stage::Label => "label",
            Stage::Localize => "localize",
            Stage::Reconstruct => "reconstruct",
            Stage::Evaluate => "evaluate",
            Stage::Export => "export",
            Stage::Sweep => "sweep",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ErrorKind {
    Schema(String),
    BudgetExceeded(String),
    DegenerateGeometry(String),
    Io(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage}: {}", self.message())]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: ErrorKind,
}

impl PipelineError {
    pub fn schema(msg: impl Into<String>) -> Self {
        Self {
            stage: Stage::Schema,
            kind: ErrorKind::Schema(msg.into()),
        }
    }

    pub fn io(stage: Stage, msg: impl Into<String>) -> Self {
        Self {
            stage,
            kind: ErrorKind::Io(msg.into()),
        }
    }

    pub fn message(&self) -> &str {
        match &self.kind {
            ErrorKind::Schema(m)
            | ErrorKind::BudgetExceeded(m)
            | ErrorKind::DegenerateGeometry(m)
            | ErrorKind::Io(m)
            | ErrorKind::Failed(m) => m,
        }
    }

    /// 2 schema, 3 budget exceeded, 4 degenerate geometry, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Schema(_) => 2,
            ErrorKind::BudgetExceeded(_) => 3,
            ErrorKind::DegenerateGeometry(_) => 4,
            ErrorKind::Io(_) | ErrorKind::Failed(_) => 1,
        }
    }

    pub(crate) fn from_labeling(stage: Stage, e: LabelingError) -> Self {
        let msg = e.to_string();
        let kind = match e {
            LabelingError::BudgetExceeded { .. } | LabelingError::GraphBudgetExceeded { .. } => {
                ErrorKind::BudgetExceeded(msg)
            }
            LabelingError::TooFewReceivers(_) | LabelingError::ReceiverMismatch { .. } => ErrorKind::Schema(msg),
            LabelingError::BadRange { .. } | LabelingError::Edm(_) => ErrorKind::Failed(msg),
        };
        Self { stage, kind }
    }

    fn from_simulation(e: SimulationError) -> Self {
        let msg = e.to_string();
        let kind = match e {
            SimulationError::AmbiguousSources { .. } => ErrorKind::DegenerateGeometry(msg),
            SimulationError::Geometry(_) => ErrorKind::Schema(msg),
            _ => ErrorKind::Failed(msg),
        };
        Self {
            stage: Stage::Simulate,
            kind,
        }
    }

    fn from_localization(source: usize, e: LocalizationError) -> Self {
        let msg = format!("source {source}: {e}");
        let kind = match e {
            LocalizationError::DegenerateGeometry(_) | LocalizationError::TooFewReceivers(_) => {
                ErrorKind::DegenerateGeometry(msg)
            }
            _ => ErrorKind::Failed(msg),
        };
        Self {
            stage: Stage::Localize,
            kind,
        }
    }
}

/// Rank-test threshold for a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ThresholdChoice {
    /// Whatever the scenario file asks for.
    #[default]
    FromFile,
    Relative(f64),
    Calibrate,
}

/// Overrides applied on top of a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub budget: Option<u64>,
    pub threshold: ThresholdChoice,
}

impl RunOptions {
    pub fn seed(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::default()
        }
    }

    pub fn apply(&self, file: &ScenarioFile) -> ScenarioFile {
        let mut f = file.clone();
        if let Some(seed) = self.seed {
            f.seed = seed;
        }
        if let Some(budget) = self.budget {
            f.pipeline.budget = budget;
        }
        match self.threshold {
            ThresholdChoice::FromFile => {}
            ThresholdChoice::Relative(tau) => {
                f.pipeline.tau_rel = Some(tau);
                f.pipeline.calibrate = false;
            }
            ThresholdChoice::Calibrate => f.pipeline.calibrate = true,
        }
        f
    }
}

/// Persisted output of the simulate stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub seed: u64,
    pub echoes: EchoSet,
    pub truth: GroundTruth,
}

/// Persisted output of the label stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutput {
    pub threshold: ThresholdPolicy,
    pub labeling: Labeling,
}

/// Wall-clock seconds per stage. Kept out of the report document so that
/// reports of identical runs compare equal byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub simulate: f64,
    pub calibrate: f64,
    pub label: f64,
    pub localize: f64,
    pub reconstruct: f64,
    pub evaluate: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.simulate + self.calibrate + self.label + self.localize + self.reconstruct + self.evaluate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSize {
    pub nodes: usize,
    pub edges: usize,
}

/// A localized source with its reconstruction label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub position: Point2D,
    pub residual: f64,
    pub ranges: Vec<f64>,
    /// Echo index at each receiver.
    pub echo_indices: Vec<usize>,
    /// Rank-test score `λ5 / λ1` of the combination.
    pub score: f64,
    pub kind: SourceKind,
    /// Index into `defects`.
    pub defect: usize,
    pub lineage: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub defects: Vec<Defect>,
    pub sources: Vec<TrueSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub receivers: Vec<Point2D>,
    pub layers: LayerStack,
    pub noise_sigma: f64,
    pub max_mirror_order: usize,
    pub threshold: ThresholdPolicy,
    pub echo_counts: Vec<usize>,
    pub feasible_count: usize,
    pub conflict_graph: GraphSize,
    pub mis_cardinality: usize,
    pub explored: u64,
    pub sources: Vec<SourceRecord>,
    pub vicinity_radius: f64,
    pub defects: Vec<DefectEstimate>,
    pub match_radius: f64,
    pub metrics: Metrics,
    pub truth: Truth,
    #[serde(skip)]
    pub timings: Timings,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Parses a report and checks it with [`RunReport::verify`].
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let report: RunReport =
            serde_json::from_str(text).map_err(|e| PipelineError::schema(format!("report: {e}")))?;
        report
            .verify()
            .map_err(|e| PipelineError::schema(format!("report: {e}")))?;
        Ok(report)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::io(Stage::Export, format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Writes `report.json` and `timings.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf, PipelineError> {
        let dir = dir.as_ref();
        let path = dir.join(REPORT_FILE);
        write_file(&path, &self.to_json(), Stage::Evaluate)?;
        let timings = serde_json::to_string_pretty(&self.timings).expect("timings serialize") + "\n";
        write_file(&dir.join(TIMINGS_FILE), &timings, Stage::Evaluate)?;
        Ok(path)
    }

    /// Recomputes every derived field from the persisted source and defect
    /// lists and reports the first disagreement.
    pub fn verify(&self) -> Result<(), String> {
        if self.mis_cardinality != self.sources.len() {
            return Err(format!(
                "mis_cardinality {} but {} sources",
                self.mis_cardinality,
                self.sources.len()
            ));
        }
        if self.echo_counts.len() != self.receivers.len() {
            return Err("echo_counts does not match the receiver count".into());
        }
        let mut owner = vec![None; self.sources.len()];
        for (d, defect) in self.defects.iter().enumerate() {
            for (k, c) in defect.contributors.iter().enumerate() {
                let Some(source) = self.sources.get(c.source) else {
                    return Err(format!("defect {d} refers to missing source {}", c.source));
                };
                if owner[c.source].replace(d).is_some() {
                    return Err(format!("source {} belongs to two defects", c.source));
                }
                if (k == 0) != c.lineage.is_empty() {
                    return Err(format!("defect {d}: only the first contributor has an empty lineage"));
                }
                if unapply_lineage(source.position, &c.lineage, &self.layers) != c.folded {
                    return Err(format!("defect {d}: folded position of source {} is stale", c.source));
                }
                let kind = if k == 0 { SourceKind::Defect } else { SourceKind::Image };
                if source.defect != d || source.lineage != c.lineage || source.kind != kind {
                    return Err(format!("source {} label disagrees with defect {d}", c.source));
                }
            }
            if defect.contributors.is_empty() || defect.mean_of_contributors() != defect.position {
                return Err(format!("defect {d} position is not the mean of its contributors"));
            }
        }
        if let Some(s) = owner.iter().position(Option::is_none) {
            return Err(format!("source {s} belongs to no defect"));
        }
        if self.match_radius.is_nan() || self.match_radius <= 0.0 {
            return Err("match_radius must be positive".into());
        }
        let metrics = evaluate(&self.defects, &self.truth.defects, self.match_radius);
        if metrics != self.metrics {
            return Err("metrics do not match the defect lists".into());
        }
        Ok(())
    }
}

pub(crate) fn write_file(path: &Path, contents: &str, stage: Stage) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|e| PipelineError::io(stage, format!("{}: {e}", path.display())))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path, stage: Stage) -> Result<T, PipelineError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| PipelineError::io(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::schema(format!("{}: {e}", path.display())))
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifacts serialize") + "\n"
}

pub fn simulate_stage(file: &ScenarioFile, seed: u64) -> Result<SimulationOutput, PipelineError> {
    let scenario = file.to_scenario()?;
    let options = SimulationOptions {
        ambiguity_check: file.pipeline.ambiguity_check,
        ..SimulationOptions::default()
    };
    let (echoes, truth) = simulate_echoes_with(&scenario, seed, &options).map_err(PipelineError::from_simulation)?;
    Ok(SimulationOutput { seed, echoes, truth })
}

pub fn label_stage(
    file: &ScenarioFile,
    echoes: &EchoSet,
    threshold: &ThresholdPolicy,
) -> Result<Labeling, PipelineError> {
    label_echoes(echoes, &file.receivers(), threshold, &file.prune_config())
        .map_err(|e| PipelineError::from_labeling(Stage::Label, e))
}

/// Localizes every labeled source, in parallel.
pub fn localize_stage(receivers: &[Point2D], labeling: &Labeling) -> Result<Vec<SourceEstimate>, PipelineError> {
    labeling
        .sources
        .par_iter()
        .enumerate()
        .map(|(i, s)| localize_source(receivers, &s.ranges).map_err(|e| PipelineError::from_localization(i, e)))
        .collect()
}

/// Reconstruction and evaluation on top of the earlier stages' output.
pub fn reconstruct_stage(
    file: &ScenarioFile,
    simulation: &SimulationOutput,
    labels: &LabelOutput,
    estimates: &[SourceEstimate],
    timings: &mut Timings,
) -> Result<RunReport, PipelineError> {
    let scenario = file.to_scenario()?;
    if estimates.len() != labels.labeling.sources.len() {
        return Err(PipelineError {
            stage: Stage::Reconstruct,
            kind: ErrorKind::Failed("estimate and label counts differ".into()),
        });
    }
    let clock = Instant::now();
    let defects = reconstruct_defects(
        estimates,
        &scenario.layers,
        file.vicinity_radius(),
        scenario.max_mirror_order,
    );
    let mut sources: Vec<SourceRecord> = estimates
        .iter()
        .zip(&labels.labeling.sources)
        .map(|(e, l)| SourceRecord {
            position: e.position,
            residual: e.residual,
            ranges: e.ranges.clone(),
            echo_indices: l.indices.clone(),
            score: l.score,
            kind: SourceKind::Image,
            defect: usize::MAX,
            lineage: Vec::new(),
        })
        .collect();
    for (d, defect) in defects.iter().enumerate() {
        for (k, c) in defect.contributors.iter().enumerate() {
            let s = &mut sources[c.source];
            s.defect = d;
            s.lineage = c.lineage.clone();
            s.kind = if k == 0 { SourceKind::Defect } else { SourceKind::Image };
        }
    }
    timings.reconstruct = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let metrics = evaluate(&defects, &scenario.defects, file.pipeline.match_radius);
    timings.evaluate = clock.elapsed().as_secs_f64();

    let labeling = &labels.labeling;
    Ok(RunReport {
        name: file.name.clone(),
        seed: simulation.seed,
        receivers: scenario.receivers.clone(),
        layers: scenario.layers.clone(),
        noise_sigma: scenario.noise_sigma,
        max_mirror_order: scenario.max_mirror_order,
        threshold: labels.threshold,
        echo_counts: simulation.echoes.echo_counts(),
        feasible_count: labeling.feasible_count,
        conflict_graph: GraphSize {
            nodes: labeling.graph_nodes,
            edges: labeling.graph_edges,
        },
        mis_cardinality: labeling.cardinality(),
        explored: labeling.explored,
        sources,
        vicinity_radius: file.vicinity_radius(),
        defects,
        match_radius: file.pipeline.match_radius,
        metrics,
        truth: Truth {
            defects: scenario.defects.clone(),
            sources: simulation.truth.sources.clone(),
        },
        timings: *timings,
    })
}

/// Simulate, label, localize, reconstruct and evaluate.
pub fn run_pipeline(file: &ScenarioFile, options: &RunOptions) -> Result<RunReport, PipelineError> {
    let file = options.apply(file);
    let mut timings = Timings::default();

    let clock = Instant::now();
    let simulation = simulate_stage(&file, file.seed)?;
    timings.simulate = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let threshold = file.threshold_policy()?;
    timings.calibrate = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let labeling = label_stage(&file, &simulation.echoes, &threshold)?;
    timings.label = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let estimates = localize_stage(&file.receivers(), &labeling)?;
    timings.localize = clock.elapsed().as_secs_f64();

    let labels = LabelOutput { threshold, labeling };
    reconstruct_stage(&file, &simulation, &labels, &estimates, &mut timings)
}

/// Step-by-step runner that persists each stage's output in a directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| PipelineError::io(Stage::Schema, format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn simulate(&self, file: &ScenarioFile, options: &RunOptions) -> Result<SimulationOutput, PipelineError> {
        let file = options.apply(file);
        let out = simulate_stage(&file, file.seed)?;
        write_file(&self.dir.join(ECHOES_FILE), &to_json(&out), Stage::Simulate)?;
        Ok(out)
    }

    /// Labels the echoes saved by [`Workspace::simulate`].
    pub fn label(&self, file: &ScenarioFile, options: &RunOptions) -> Result<LabelOutput, PipelineError> {
        let file = options.apply(file);
        let simulation: SimulationOutput = read_json(&self.dir.join(ECHOES_FILE), Stage::Label)?;
        let threshold = file.threshold_policy()?;
        let labeling = label_stage(&file, &simulation.echoes, &threshold)?;
        let out = LabelOutput { threshold, labeling };
        write_file(&self.dir.join(LABELS_FILE), &to_json(&out), Stage::Label)?;
        Ok(out)
    }

    /// Localizes and reconstructs from the saved echoes and labels.
    pub fn reconstruct(&self, file: &ScenarioFile, options: &RunOptions) -> Result<RunReport, PipelineError> {
        let file = options.apply(file);
        let simulation: SimulationOutput = read_json(&self.dir.join(ECHOES_FILE), Stage::Reconstruct)?;
        let labels: LabelOutput = read_json(&self.dir.join(LABELS_FILE), Stage::Reconstruct)?;
        let mut timings = Timings::default();
        let clock = Instant::now();
        let estimates = localize_stage(&file.receivers(), &labels.labeling)?;
        timings.localize = clock.elapsed().as_secs_f64();
        let report = reconstruct_stage(&file, &simulation, &labels, &estimates, &mut timings)?;
        report.save(&self.dir)?;
        Ok(report)
    }

    pub fn run(&self, file: &ScenarioFile, options: &RunOptions) -> Result<RunReport, PipelineError> {
        let report = run_pipeline(file, options)?;
        report.save(&self.dir)?;
        Ok(report)
    }

    pub fn export(&self) -> Result<ExportPaths, PipelineError> {
        let report = RunReport::load(self.dir.join(REPORT_FILE))?;
        export_plot_data(&report, &self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke() -> ScenarioFile {
        ScenarioFile::from_toml_str(include_str!("../../scenarios/noisy_smoke.toml")).unwrap()
    }

    #[test]
    fn report_round_trips_and_verifies() {
        let report = run_pipeline(&smoke(), &RunOptions::default()).unwrap();
        assert_eq!(report.metrics.recall, 1.0);
        let back = RunReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back.to_json(), report.to_json());
    }

    #[test]
    fn tampered_report_is_rejected() {
        let report = run_pipeline(&smoke(), &RunOptions::default()).unwrap();
        let mut bad = report.clone();
        bad.defects[0].position.x += 1e-6;
        assert!(bad.verify().is_err());
        let mut bad = report.clone();
        bad.metrics.recall = 0.5;
        assert!(bad.verify().is_err());
        let mut bad = report;
        bad.sources[0].position.y -= 1e-6;
        assert!(bad.verify().is_err());
    }

    #[test]
    fn empty_scenario_follows_conventions() {
        let file = ScenarioFile::from_toml_str(include_str!("../../scenarios/empty.toml")).unwrap();
        let report = run_pipeline(&file, &RunOptions::default()).unwrap();
        assert!(report.sources.is_empty() && report.defects.is_empty());
        assert_eq!((report.metrics.precision, report.metrics.recall), (1.0, 1.0));
        assert_eq!(report.metrics.rmse, None);
    }

    #[test]
    fn budget_error_has_stage_and_code() {
        let options = RunOptions {
            budget: Some(10),
            ..RunOptions::default()
        };
        let err = run_pipeline(&smoke(), &options).unwrap_err();
        assert_eq!(err.stage, Stage::Label);
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().starts_with("label: "), "{err}");
    }

    #[test]
    fn ambiguous_sources_are_degenerate() {
        let mut file = smoke();
        file.scenario.defects[1].position = Point2D::new(-0.002, -0.00151);
        let err = run_pipeline(&file, &RunOptions::default()).unwrap_err();
        assert_eq!((err.stage, err.exit_code()), (Stage::Simulate, 4));
    }
}
