//! Monte Carlo sweep of the noise level on the bundled scenario.
//!
//! `cargo run --release --example noise_sweep [trials]`

use echolabel::harness::{sweep, ScenarioFile, SweepParameter};

fn main() {
    let trials: usize = std::env::args().nth(1).map_or(10, |s| s.parse().expect("trial count"));
    let file = ScenarioFile::bundled();
    let values = [0.0, 2e-6, 4e-6, 8e-6];
    let rows = sweep(&file, SweepParameter::NoiseSigma, &values, trials).expect("sweep");
    println!("sigma      recall  p10    precision  rmse");
    for r in rows {
        println!(
            "{:<9.1e}  {:.3}   {:.3}  {:.3}      {}",
            r.value,
            r.recall_mean,
            r.recall_p10,
            r.precision_mean,
            r.rmse_mean.map_or("-".to_string(), |v| format!("{v:.3e}"))
        );
    }
}
