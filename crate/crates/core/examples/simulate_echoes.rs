//! Forward model: unlabeled, shuffled ranges at each receiver.
//!
//! `cargo run --example simulate_echoes [sigma]`

use echolabel::forward::{simulate_echoes, SourceKind};
use echolabel::harness::ScenarioFile;

fn main() {
    let sigma: f64 = std::env::args()
        .nth(1)
        .map_or(0.0, |s| s.parse().expect("sigma in meters"));
    let file = ScenarioFile::bundled()
        .with_receiver_count(4)
        .and_then(|f| f.with_noise(sigma))
        .expect("bundled scenario");
    let scenario = file.to_scenario().expect("valid scenario");
    let (echoes, truth) = simulate_echoes(&scenario, file.seed).expect("simulation");

    let images = truth.sources.iter().filter(|s| s.kind == SourceKind::Image).count();
    println!(
        "{} sources ({} defects, {images} images)",
        truth.sources.len(),
        scenario.defects.len()
    );
    for (i, ranges) in echoes.per_receiver_ranges.iter().enumerate() {
        let first: Vec<String> = ranges.iter().take(5).map(|r| format!("{r:.6}")).collect();
        println!("receiver {i}: {} echoes, first {}", ranges.len(), first.join(" "));
    }
    let echo_of_first = truth.echo_indices_of(0);
    println!(
        "echo indices of source 0 ({}): {:?}",
        truth.sources[0].parent, echo_of_first
    );
}
