//! Rank test on an augmented distance matrix: correct ranges pass, swapped
//! ranges fail.
//!
//! `cargo run --example edm_rank_test`

use echolabel::edm::{augment, build_edm, rank_test, singular_values, ThresholdPolicy};
use echolabel::geometry::{squared_distance, Point2D};

fn main() {
    let receivers: Vec<Point2D> = [
        (-0.0045, 0.0),
        (-0.0015, 0.0),
        (0.0015, 0.0),
        (0.0045, 0.0),
        (0.0075, 0.0),
    ]
    .into_iter()
    .map(|(x, y)| Point2D::new(x, y))
    .collect();
    let edm = build_edm(&receivers).expect("finite points");
    let source = Point2D::new(0.0007, -0.0031);
    let mut d: Vec<f64> = receivers.iter().map(|r| squared_distance(r, &source)).collect();
    let policy = ThresholdPolicy::default();

    let exact = augment(&edm, &d).expect("matching sizes");
    let svd = singular_values(exact.matrix()).expect("square");
    let s: Vec<String> = svd.singular_values.iter().map(|v| format!("{v:.3e}")).collect();
    println!("singular values: {}", s.join(" "));
    println!("correct ranges: {:?}", rank_test(&exact, &policy));

    d.swap(0, 3);
    let swapped = augment(&edm, &d).expect("matching sizes");
    println!("two ranges swapped: {:?}", rank_test(&swapped, &policy));
}
