//! CSV plot data.
//!
//! * `ground_truth.csv`: `kind,parent,lineage,x,y`, one row per true source.
//! * `sources.csv`: `index,kind,defect,lineage,x,y,residual`, one row per
//!   estimated source.
//! * `comparison.csv`: `truth_id,truth_x,truth_y,estimate,estimate_x,estimate_y,contributors,error`,
//!   one row per true defect (estimate columns empty when unmatched), then one
//!   row per unmatched estimate (truth columns empty).
//!
//! Lineages are boundary indices joined by `-`; empty for defects.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, RunReport, Stage};
use crate::forward::SourceKind;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const SOURCES_FILE: &str = "sources.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub kind: SourceKind,
    pub parent: String,
    pub lineage: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRow {
    pub index: usize,
    pub kind: SourceKind,
    pub defect: usize,
    pub lineage: String,
    pub x: f64,
    pub y: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub truth_id: Option<String>,
    pub truth_x: Option<f64>,
    pub truth_y: Option<f64>,
    pub estimate: Option<usize>,
    pub estimate_x: Option<f64>,
    pub estimate_y: Option<f64>,
    pub contributors: Option<usize>,
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportPaths {
    pub ground_truth: PathBuf,
    pub sources: PathBuf,
    pub comparison: PathBuf,
}

fn lineage_label(lineage: &[usize]) -> String {
    lineage.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

pub fn ground_truth_rows(report: &RunReport) -> Vec<GroundTruthRow> {
    report
        .truth
        .sources
        .iter()
        .map(|s| GroundTruthRow {
            kind: s.kind,
            parent: s.parent.clone(),
            lineage: lineage_label(&s.lineage),
            x: s.position.x,
            y: s.position.y,
        })
        .collect()
}

pub fn source_rows(report: &RunReport) -> Vec<SourceRow> {
    report
        .sources
        .iter()
        .enumerate()
        .map(|(index, s)| SourceRow {
            index,
            kind: s.kind,
            defect: s.defect,
            lineage: lineage_label(&s.lineage),
            x: s.position.x,
            y: s.position.y,
            residual: s.residual,
        })
        .collect()
}

pub fn comparison_rows(report: &RunReport) -> Vec<ComparisonRow> {
    let mut matched = vec![false; report.defects.len()];
    let mut rows: Vec<ComparisonRow> = report
        .truth
        .defects
        .iter()
        .enumerate()
        .map(|(t, truth)| {
            let pair = report.metrics.matches.iter().find(|m| m.truth == t);
            let mut row = ComparisonRow {
                truth_id: Some(truth.id.clone()),
                truth_x: Some(truth.position.x),
                truth_y: Some(truth.position.y),
                estimate: None,
                estimate_x: None,
                estimate_y: None,
                contributors: None,
                error: None,
            };
            if let Some(m) = pair {
                let est = &report.defects[m.estimate];
                matched[m.estimate] = true;
                row.estimate = Some(m.estimate);
                row.estimate_x = Some(est.position.x);
                row.estimate_y = Some(est.position.y);
                row.contributors = Some(est.count());
                row.error = Some(m.error);
            }
            row
        })
        .collect();
    for (e, est) in report.defects.iter().enumerate() {
        if !matched[e] {
            rows.push(ComparisonRow {
                truth_id: None,
                truth_x: None,
                truth_y: None,
                estimate: Some(e),
                estimate_x: Some(est.position.x),
                estimate_y: Some(est.position.y),
                contributors: Some(est.count()),
                error: None,
            });
        }
    }
    rows
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), PipelineError> {
    let io = |e: csv::Error| PipelineError::io(Stage::Export, format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| PipelineError::io(Stage::Export, format!("{}: {e}", path.display())))
}

/// Writes the three plot tables into `dir`.
pub fn export_plot_data(report: &RunReport, dir: impl AsRef<Path>) -> Result<ExportPaths, PipelineError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(Stage::Export, format!("{}: {e}", dir.display())))?;
    let paths = ExportPaths {
        ground_truth: dir.join(GROUND_TRUTH_FILE),
        sources: dir.join(SOURCES_FILE),
        comparison: dir.join(COMPARISON_FILE),
    };
    write_csv(
        &paths.ground_truth,
        &ground_truth_rows(report),
        &["kind", "parent", "lineage", "x", "y"],
    )?;
    write_csv(
        &paths.sources,
        &source_rows(report),
        &["index", "kind", "defect", "lineage", "x", "y", "residual"],
    )?;
    write_csv(
        &paths.comparison,
        &comparison_rows(report),
        &[
            "truth_id",
            "truth_x",
            "truth_y",
            "estimate",
            "estimate_x",
            "estimate_y",
            "contributors",
            "error",
        ],
    )?;
    Ok(paths)
}
