use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_pipeline, PipelineError, RunOptions, ScenarioFile, Stage, ThresholdChoice};
use crate::edm::ThresholdPolicy;
use crate::reconstruction::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    NoiseSigma,
    ReceiverCount,
    TauRel,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NoiseSigma => "noise_sigma",
            Self::ReceiverCount => "receiver_count",
            Self::TauRel => "tau_rel",
        })
    }
}

impl FromStr for SweepParameter {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noise_sigma" => Ok(Self::NoiseSigma),
            "receiver_count" => Ok(Self::ReceiverCount),
            "tau_rel" => Ok(Self::TauRel),
            other => Err(PipelineError::schema(format!(
                "unknown sweep parameter `{other}` (expected noise_sigma, receiver_count or tau_rel)"
            ))),
        }
    }
}

/// Aggregates over the trials of one parameter value. Quantiles use the
/// nearest-rank rule; RMSE columns cover the trials with at least one match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    pub trials: usize,
    pub recall_mean: f64,
    pub recall_p10: f64,
    pub precision_mean: f64,
    pub precision_p10: f64,
    pub rmse_trials: usize,
    pub rmse_mean: Option<f64>,
    pub rmse_median: Option<f64>,
    pub rmse_p90: Option<f64>,
    pub cardinality_mean: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs
}

fn aggregate(parameter: SweepParameter, value: f64, trials: &[(Metrics, usize)]) -> SweepRow {
    let recall = sorted(trials.iter().map(|t| t.0.recall).collect());
    let precision = sorted(trials.iter().map(|t| t.0.precision).collect());
    let rmse = sorted(trials.iter().filter_map(|t| t.0.rmse).collect());
    let cardinality: Vec<f64> = trials.iter().map(|t| t.1 as f64).collect();
    let has_rmse = !rmse.is_empty();
    SweepRow {
        parameter,
        value,
        trials: trials.len(),
        recall_mean: mean(&recall),
        recall_p10: quantile(&recall, 0.1),
        precision_mean: mean(&precision),
        precision_p10: quantile(&precision, 0.1),
        rmse_trials: rmse.len(),
        rmse_mean: has_rmse.then(|| mean(&rmse)),
        rmse_median: has_rmse.then(|| quantile(&rmse, 0.5)),
        rmse_p90: has_rmse.then(|| quantile(&rmse, 0.9)),
        cardinality_mean: mean(&cardinality),
    }
}

fn variant(file: &ScenarioFile, parameter: SweepParameter, value: f64) -> Result<ScenarioFile, PipelineError> {
    match parameter {
        SweepParameter::NoiseSigma => file.with_noise(value),
        SweepParameter::TauRel => file.with_tau(value),
        SweepParameter::ReceiverCount => {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(PipelineError::schema(format!(
                    "receiver count must be a whole number, got {value}"
                )));
            }
            file.with_receiver_count(value as usize)
        }
    }
}

/// Runs `trials` seeds (`file.seed`, `file.seed + 1`, ...) for each value.
/// Trials run in parallel; results are reduced in seed order and the first
/// failing trial in that order is reported.
pub fn sweep(
    file: &ScenarioFile,
    parameter: SweepParameter,
    values: &[f64],
    trials: usize,
) -> Result<Vec<SweepRow>, PipelineError> {
    if trials == 0 {
        return Err(PipelineError::schema("trials must be at least 1"));
    }
    let mut jobs = Vec::with_capacity(values.len());
    for &value in values {
        let f = variant(file, parameter, value)?;
        let tau = match f.threshold_policy()? {
            ThresholdPolicy::Relative { tau } => tau,
            ThresholdPolicy::Absolute { .. } => unreachable!("scenario files use relative thresholds"),
        };
        jobs.push((value, f, tau));
    }
    let runs: Vec<Result<(Metrics, usize), PipelineError>> = jobs
        .par_iter()
        .flat_map_iter(|(_, f, tau)| (0..trials as u64).map(move |t| (f, *tau, f.seed.wrapping_add(t))))
        .map(|(f, tau, seed)| {
            let options = RunOptions {
                seed: Some(seed),
                budget: None,
                threshold: ThresholdChoice::Relative(tau),
            };
            run_pipeline(f, &options).map(|r| (r.metrics, r.mis_cardinality))
        })
        .collect();
    let mut runs = runs.into_iter();
    let mut rows = Vec::with_capacity(values.len());
    for (value, _, _) in &jobs {
        let chunk = runs.by_ref().take(trials).collect::<Result<Vec<_>, _>>()?;
        rows.push(aggregate(parameter, *value, &chunk));
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let io = |e: csv::Error| PipelineError::io(Stage::Sweep, format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| PipelineError::io(Stage::Sweep, format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(quantile(&xs, 0.1), 1.0);
        assert_eq!(quantile(&xs, 0.5), 5.0);
        assert_eq!(quantile(&xs, 0.9), 9.0);
        assert_eq!(quantile(&[3.0], 0.1), 3.0);
    }

    #[test]
    fn parameter_names_round_trip() {
        for p in [
            SweepParameter::NoiseSigma,
            SweepParameter::ReceiverCount,
            SweepParameter::TauRel,
        ] {
            assert_eq!(p.to_string().parse::<SweepParameter>().unwrap(), p);
        }
        assert_eq!("sigma".parse::<SweepParameter>().unwrap_err().exit_code(), 2);
    }
}
