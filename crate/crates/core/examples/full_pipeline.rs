//! Runs the bundled two-layer scenario for several array sizes.
//!
//! `cargo run --release --example full_pipeline [sigma]`

use echolabel::harness::{run_pipeline, RunOptions, ScenarioFile};

fn main() {
    let sigma: f64 = std::env::args()
        .nth(1)
        .map_or(0.0, |s| s.parse().expect("sigma in meters"));
    let base = ScenarioFile::bundled().with_noise(sigma).expect("valid noise");
    for count in [4, 6, 8] {
        let file = base.with_receiver_count(count).expect("array section");
        match run_pipeline(&file, &RunOptions::default()) {
            Ok(r) => {
                let m = &r.metrics;
                println!(
                    "N={count}: {} sources, {} defects, feasible {}, explored {}, recall {:.3}, precision {:.3}, rmse {:?}, {:.2}s",
                    r.mis_cardinality,
                    r.defects.len(),
                    r.feasible_count,
                    r.explored,
                    m.recall,
                    m.precision,
                    m.rmse,
                    r.timings.total()
                );
            }
            Err(e) => println!("N={count}: {e}"),
        }
    }
}
