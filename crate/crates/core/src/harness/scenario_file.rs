//! TOML scenario files.
//!
//! ```toml
//! name = "example"
//! seed = 1
//!
//! [scenario]
//! speed = 1.5e8            # m/s
//! noise_sigma = 0.0        # m
//! max_mirror_order = 2
//! layers = [-0.004, -0.008]
//!
//! [scenario.array]         # or: receivers = [[x, 0.0], ...]
//! count = 8
//! pitch = 0.003
//!
//! [[scenario.defects]]
//! id = "d1"
//! position = [0.001, -0.002]
//!
//! [pipeline]
//! match_radius = 5e-4
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};
use crate::edm::ThresholdPolicy;
use crate::geometry::{Defect, LayerStack, Point2D, Scenario};
use crate::labeling::{calibrate_tau, Calibration, PruneConfig, DEFAULT_BUDGET};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub pipeline: PipelineSpec,
}

fn default_name() -> String {
    "scenario".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub speed: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_order")]
    pub max_mirror_order: usize,
    #[serde(default)]
    pub clutter: bool,
    #[serde(default)]
    pub emitter: Point2D,
    pub layers: LayerStack,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receivers: Option<Vec<Point2D>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub array: Option<ArraySpec>,
    #[serde(default)]
    pub defects: Vec<Defect>,
}

fn default_order() -> usize {
    2
}

/// Uniform linear array on `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub count: usize,
    pub pitch: f64,
    #[serde(default)]
    pub center_x: f64,
}

impl ArraySpec {
    pub fn positions(&self) -> Vec<Point2D> {
        let mid = (self.count as f64 - 1.0) / 2.0;
        (0..self.count)
            .map(|i| Point2D::new(self.center_x + (i as f64 - mid) * self.pitch, 0.0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    /// Fixed relative threshold. Without it the threshold is 1e-8 for
    /// noiseless scenarios and calibrated otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_rel: Option<f64>,
    /// Calibrate even if `tau_rel` is set.
    #[serde(default)]
    pub calibrate: bool,
    #[serde(default = "default_calibration_trials")]
    pub calibration_trials: usize,
    #[serde(default = "default_calibration_quantile")]
    pub calibration_quantile: f64,
    #[serde(default = "default_calibration_seed")]
    pub calibration_seed: u64,
    /// Triangle-bound slack in noise sigmas.
    #[serde(default = "default_slack_factor")]
    pub slack_factor: f64,
    #[serde(default = "default_match_radius")]
    pub match_radius: f64,
    /// Image-source vicinity radius in noise sigmas.
    #[serde(default = "default_vicinity_factor")]
    pub vicinity_factor: f64,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default = "default_true")]
    pub ambiguity_check: bool,
    #[serde(default = "default_true")]
    pub parallel: bool,
}

fn default_calibration_trials() -> usize {
    Calibration::default().trials
}
fn default_calibration_quantile() -> f64 {
    Calibration::default().quantile
}
fn default_calibration_seed() -> u64 {
    Calibration::default().seed
}
fn default_slack_factor() -> f64 {
    5.0
}
fn default_match_radius() -> f64 {
    1e-3
}
fn default_vicinity_factor() -> f64 {
    1.0
}
fn default_budget() -> u64 {
    DEFAULT_BUDGET
}
fn default_true() -> bool {
    true
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            tau_rel: None,
            calibrate: false,
            calibration_trials: default_calibration_trials(),
            calibration_quantile: default_calibration_quantile(),
            calibration_seed: default_calibration_seed(),
            slack_factor: default_slack_factor(),
            match_radius: default_match_radius(),
            vicinity_factor: default_vicinity_factor(),
            budget: default_budget(),
            ambiguity_check: true,
            parallel: true,
        }
    }
}

/// The example scenario shipped with the crate: two layers with six defects
/// each, an eight-element array and no noise.
pub const BUNDLED_SCENARIO: &str = include_str!("../../scenarios/paper_scenario.toml");

impl ScenarioFile {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| PipelineError::schema(e.to_string()))?;
        file.check()?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::io(Stage::Schema, format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e.kind {
            super::ErrorKind::Schema(msg) => PipelineError::schema(format!("{}: {msg}", path.display())),
            _ => e,
        })
    }

    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_SCENARIO).expect("bundled scenario is valid")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario files serialize")
    }

    fn check(&self) -> Result<(), PipelineError> {
        let s = &self.scenario;
        match (&s.receivers, &s.array) {
            (Some(_), Some(_)) => {
                return Err(PipelineError::schema(
                    "scenario: give either `receivers` or `array`, not both",
                ))
            }
            (None, None) => return Err(PipelineError::schema("scenario: missing `receivers` or `array`")),
            _ => {}
        }
        if let Some(a) = &s.array {
            if !(a.pitch > 0.0 && a.pitch.is_finite()) {
                return Err(PipelineError::schema("scenario.array.pitch must be positive"));
            }
        }
        let p = &self.pipeline;
        if p.match_radius.is_nan() || p.match_radius <= 0.0 {
            return Err(PipelineError::schema("pipeline.match_radius must be positive"));
        }
        if let Some(tau) = p.tau_rel {
            if !(tau >= 0.0 && tau.is_finite()) {
                return Err(PipelineError::schema("pipeline.tau_rel must be finite and >= 0"));
            }
        }
        if !(p.vicinity_factor >= 0.0 && p.vicinity_factor.is_finite()) {
            return Err(PipelineError::schema(
                "pipeline.vicinity_factor must be finite and >= 0",
            ));
        }
        if p.slack_factor.is_nan() || p.slack_factor < 0.0 {
            return Err(PipelineError::schema("pipeline.slack_factor must be >= 0"));
        }
        if !(p.calibration_quantile > 0.0 && p.calibration_quantile <= 1.0) {
            return Err(PipelineError::schema(
                "pipeline.calibration_quantile must lie in (0, 1]",
            ));
        }
        self.to_scenario()?;
        Ok(())
    }

    pub fn receivers(&self) -> Vec<Point2D> {
        match (&self.scenario.receivers, &self.scenario.array) {
            (Some(r), _) => r.clone(),
            (None, Some(a)) => a.positions(),
            (None, None) => Vec::new(),
        }
    }

    /// The validated in-memory scenario.
    pub fn to_scenario(&self) -> Result<Scenario, PipelineError> {
        let s = &self.scenario;
        let scenario = Scenario {
            receivers: self.receivers(),
            emitter: s.emitter,
            layers: s.layers.clone(),
            defects: s.defects.clone(),
            noise_sigma: s.noise_sigma,
            speed: s.speed,
            max_mirror_order: s.max_mirror_order,
            clutter: s.clutter,
        };
        scenario
            .validate()
            .map_err(|e| PipelineError::schema(format!("scenario: {e}")))?;
        Ok(scenario)
    }

    pub fn prune_config(&self) -> PruneConfig {
        PruneConfig {
            slack: self.pipeline.slack_factor * self.scenario.noise_sigma,
            budget: self.pipeline.budget,
            parallel: self.pipeline.parallel,
            ..PruneConfig::default()
        }
    }

    /// Radius around mirrored defect positions searched for image sources.
    pub fn vicinity_radius(&self) -> f64 {
        self.pipeline.vicinity_factor * self.scenario.noise_sigma
    }

    pub fn calibration(&self) -> Calibration {
        Calibration {
            trials: self.pipeline.calibration_trials,
            quantile: self.pipeline.calibration_quantile,
            seed: self.pipeline.calibration_seed,
        }
    }

    /// Rank-test policy this file asks for.
    pub fn threshold_policy(&self) -> Result<ThresholdPolicy, PipelineError> {
        let p = &self.pipeline;
        let sigma = self.scenario.noise_sigma;
        match p.tau_rel {
            Some(tau) if !p.calibrate => Ok(ThresholdPolicy::relative(tau)),
            _ => {
                let tau = calibrate_tau(&self.receivers(), &self.scenario.layers, sigma, &self.calibration())
                    .map_err(|e| PipelineError::from_labeling(Stage::Calibrate, e))?;
                Ok(ThresholdPolicy::relative(tau))
            }
        }
    }

    /// Same file with a different array size. Needs an `array` section.
    pub fn with_receiver_count(&self, count: usize) -> Result<Self, PipelineError> {
        let mut out = self.clone();
        match &mut out.scenario.array {
            Some(a) => a.count = count,
            None => {
                return Err(PipelineError::schema(
                    "changing the receiver count needs a `scenario.array` section",
                ))
            }
        }
        out.check()?;
        Ok(out)
    }

    pub fn with_noise(&self, sigma: f64) -> Result<Self, PipelineError> {
        let mut out = self.clone();
        out.scenario.noise_sigma = sigma;
        out.check()?;
        Ok(out)
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self, PipelineError> {
        let mut out = self.clone();
        out.pipeline.tau_rel = Some(tau);
        out.pipeline.calibrate = false;
        out.check()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ErrorKind;

    const MINIMAL: &str = r#"
[scenario]
speed = 3e8
layers = [-1.0]
receivers = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]

[[scenario.defects]]
id = "a"
position = [1.0, -0.5]
"#;

    #[test]
    fn minimal_file_uses_defaults() {
        let f = ScenarioFile::from_toml_str(MINIMAL).unwrap();
        assert_eq!(f.seed, 0);
        assert_eq!(f.scenario.max_mirror_order, 2);
        assert_eq!(f.pipeline.budget, DEFAULT_BUDGET);
        assert_eq!(f.receivers().len(), 4);
        assert_eq!(f.threshold_policy().unwrap(), ThresholdPolicy::relative(1e-8));
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let text = MINIMAL.replace("speed = 3e8", "speed = 3e8\nspeeed = 1");
        let err = ScenarioFile::from_toml_str(&text).unwrap_err();
        let ErrorKind::Schema(msg) = &err.kind else {
            panic!("{err:?}")
        };
        assert!(msg.contains("speeed"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_geometry_is_a_schema_error() {
        let text = MINIMAL.replace("position = [1.0, -0.5]", "position = [1.0, -1.5]");
        assert_eq!(ScenarioFile::from_toml_str(&text).unwrap_err().exit_code(), 2);
        let text = MINIMAL.replace("layers = [-1.0]", "layers = [-1.0, -0.5]");
        assert_eq!(ScenarioFile::from_toml_str(&text).unwrap_err().exit_code(), 2);
        let text = MINIMAL.replace("receivers = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]", "");
        assert_eq!(ScenarioFile::from_toml_str(&text).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn array_positions_are_centered() {
        let a = ArraySpec {
            count: 4,
            pitch: 2.0,
            center_x: 1.0,
        };
        let xs: Vec<f64> = a.positions().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![-2.0, 0.0, 2.0, 4.0]);
    }

    #[test]
    fn bundled_file_round_trips() {
        let f = ScenarioFile::bundled();
        assert_eq!(f.scenario.defects.len(), 12);
        assert_eq!(f.scenario.layers.len(), 2);
        let back = ScenarioFile::from_toml_str(&f.to_toml_string()).unwrap();
        assert_eq!(back, f);
        assert!(f.with_receiver_count(4).is_ok());
        assert!(f.with_receiver_count(3).is_err());
        let explicit = ScenarioFile::from_toml_str(MINIMAL).unwrap();
        assert!(explicit.with_receiver_count(6).is_err());
    }
}
