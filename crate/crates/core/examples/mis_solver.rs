//! Maximum independent set on a small conflict-style graph.
//!
//! `cargo run --example mis_solver`

use echolabel::mis::{maximum_independent_set, Graph};

fn main() {
    // A 6-cycle with one chord: {0, 2, 4} and {1, 3, 5} tie on cardinality;
    // scores decide.
    let graph = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]);
    for scores in [[0.1, 0.0, 0.1, 0.0, 0.1, 0.0], [0.0, 0.1, 0.0, 0.1, 0.0, 0.1]] {
        let set = maximum_independent_set(&graph, &scores, 1_000).expect("within budget");
        println!("scores {scores:?} -> {:?} ({} search nodes)", set.nodes, set.explored);
    }
}
