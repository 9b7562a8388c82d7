//! Fold image sources back onto their defects and score the result.
//!
//! `cargo run --release --example reconstruct_defects [sigma] [vicinity_factor]`
//!
//! The search radius around each mirror position is `vicinity_factor * sigma`.

use echolabel::harness::{label_stage, localize_stage, simulate_stage, ScenarioFile};
use echolabel::reconstruction::{evaluate, reconstruct_defects};

fn main() {
    let sigma: f64 = std::env::args()
        .nth(1)
        .map_or(8e-6, |s| s.parse().expect("sigma in meters"));
    let factor: f64 = std::env::args()
        .nth(2)
        .map_or(1.0, |s| s.parse().expect("vicinity factor"));
    let mut file = ScenarioFile::bundled().with_noise(sigma).expect("noise");
    file.pipeline.vicinity_factor = factor;
    let sim = simulate_stage(&file, file.seed).expect("simulation");
    let policy = file.threshold_policy().expect("threshold");
    let labeling = label_stage(&file, &sim.echoes, &policy).expect("labeling");
    let sources = localize_stage(&file.receivers(), &labeling).expect("localization");

    let scenario = file.to_scenario().expect("valid scenario");
    let defects = reconstruct_defects(
        &sources,
        &scenario.layers,
        file.vicinity_radius(),
        scenario.max_mirror_order,
    );
    println!("{} sources folded into {} defects", sources.len(), defects.len());
    for d in &defects {
        let lineages: Vec<String> = d.contributors.iter().map(|c| format!("{:?}", c.lineage)).collect();
        println!(
            "  ({:.6}, {:.6}) from {}",
            d.position.x,
            d.position.y,
            lineages.join(" ")
        );
    }
    let m = evaluate(&defects, &scenario.defects, file.pipeline.match_radius);
    println!("recall {:.3} precision {:.3} rmse {:?}", m.recall, m.precision, m.rmse);
}
