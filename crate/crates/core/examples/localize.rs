//! Gauss-Newton multilateration from noisy ranges, with the GDOP of the
//! array at the source.
//!
//! `cargo run --example localize [sigma]`

use echolabel::geometry::Point2D;
use echolabel::reconstruction::{gdop, linearized_position, localize_source};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    let sigma: f64 = std::env::args()
        .nth(1)
        .map_or(8e-6, |s| s.parse().expect("sigma in meters"));
    let receivers: Vec<Point2D> = (0..8).map(|i| Point2D::new(-0.0105 + 0.003 * i as f64, 0.0)).collect();
    let truth = Point2D::new(0.00147, -0.00308);
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ranges: Vec<f64> = receivers
        .iter()
        .map(|r| r.distance(&truth) + noise.sample(&mut rng))
        .collect();

    let start = linearized_position(&receivers, &ranges).expect("non-degenerate");
    let est = localize_source(&receivers, &ranges).expect("converged");
    println!("truth       ({:.7}, {:.7})", truth.x, truth.y);
    println!(
        "linearized  ({:.7}, {:.7})  error {:.3e}",
        start.x,
        start.y,
        start.distance(&truth)
    );
    println!(
        "refined     ({:.7}, {:.7})  error {:.3e}",
        est.position.x,
        est.position.y,
        est.position.distance(&truth)
    );
    println!("rms misfit {:.3e}, gdop {:.2}", est.residual, gdop(&receivers, truth));
}
