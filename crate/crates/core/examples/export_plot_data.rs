//! Run the pipeline once and write the three plot tables.
//!
//! `cargo run --release --example export_plot_data [dir]`

use echolabel::harness::{export_plot_data, run_pipeline, RunOptions, ScenarioFile};

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "plot_data".into());
    let report = run_pipeline(&ScenarioFile::bundled(), &RunOptions::default()).expect("pipeline");
    let paths = export_plot_data(&report, &dir).expect("writable directory");
    for p in [&paths.ground_truth, &paths.sources, &paths.comparison] {
        let rows = std::fs::read_to_string(p).expect("just written").lines().count() - 1;
        println!("{} ({rows} rows)", p.display());
    }
}
