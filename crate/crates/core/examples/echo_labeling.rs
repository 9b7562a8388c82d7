//! Enumerate feasible echo combinations, build the conflict graph and pick
//! its maximum independent set.
//!
//! `cargo run --release --example echo_labeling [receivers]`

use echolabel::edm::build_edm;
use echolabel::forward::simulate_echoes;
use echolabel::harness::ScenarioFile;
use echolabel::labeling::{build_conflict_graph, enumerate_feasible, select_combinations};

fn main() {
    let count: usize = std::env::args()
        .nth(1)
        .map_or(6, |s| s.parse().expect("receiver count"));
    let file = ScenarioFile::bundled()
        .with_receiver_count(count)
        .expect("array section");
    let scenario = file.to_scenario().expect("valid scenario");
    let (echoes, truth) = simulate_echoes(&scenario, file.seed).expect("simulation");
    let policy = file.threshold_policy().expect("threshold");
    let prune = file.prune_config();

    let edm = build_edm(&scenario.receivers).expect("receivers");
    let enumeration = enumerate_feasible(&echoes, &edm, &policy, &prune).expect("within budget");
    println!(
        "{} receivers, {} echoes each: {} feasible combinations after {} search nodes",
        count,
        echoes.per_receiver_ranges[0].len(),
        enumeration.combinations.len(),
        enumeration.explored
    );
    let graph = build_conflict_graph(enumeration.combinations);
    println!(
        "conflict graph: {} nodes, {} edges",
        graph.node_count(),
        graph.edge_count()
    );
    let chosen = select_combinations(&graph, prune.budget).expect("within budget");

    let correct = chosen
        .iter()
        .filter(|&&n| (0..truth.sources.len()).any(|s| truth.echo_indices_of(s) == graph.combinations[n].indices))
        .count();
    println!(
        "selected {} combinations, {correct} of them true; {} true sources",
        chosen.len(),
        truth.sources.len()
    );
}
