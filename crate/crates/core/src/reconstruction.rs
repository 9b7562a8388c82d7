//! Source localization from labeled ranges and folding of image sources back
//! onto the defects that produced them.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{mirror_images, unapply_lineage, Defect, LayerStack, Point2D};

/// Gauss–Newton stops once a step is shorter than this (meters).
pub const STEP_TOLERANCE: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 50;
/// Smallest vicinity radius used when folding image sources.
pub const MIN_VICINITY: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizationError {
    #[error("need at least 3 receivers, got {0}")]
    TooFewReceivers(usize),
    #[error("{ranges} ranges for {receivers} receivers")]
    LengthMismatch { receivers: usize, ranges: usize },
    #[error("range {0} is not a positive finite number")]
    BadRange(usize),
    #[error("receiver geometry is degenerate: {0}")]
    DegenerateGeometry(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEstimate {
    pub position: Point2D,
    /// RMS range misfit at `position`, meters.
    pub residual: f64,
    pub ranges: Vec<f64>,
}

/// `‖x − p_i‖ − r_i` for every receiver.
pub fn range_residuals(receivers: &[Point2D], ranges: &[f64], x: Point2D) -> Vec<f64> {
    receivers.iter().zip(ranges).map(|(p, r)| x.distance(p) - r).collect()
}

/// Jacobian of [`range_residuals`] with respect to `(x, y)`; one row per
/// receiver. Rows are unit vectors from the receiver towards `x`.
pub fn residual_jacobian(receivers: &[Point2D], x: Point2D) -> Vec<[f64; 2]> {
    receivers
        .iter()
        .map(|p| {
            let d = x.distance(p);
            if d == 0.0 {
                [0.0, 0.0]
            } else {
                [(x.x - p.x) / d, (x.y - p.y) / d]
            }
        })
        .collect()
}

fn objective(receivers: &[Point2D], ranges: &[f64], x: Point2D) -> f64 {
    range_residuals(receivers, ranges, x).iter().map(|f| f * f).sum()
}

fn rms(receivers: &[Point2D], ranges: &[f64], x: Point2D) -> f64 {
    (objective(receivers, ranges, x) / receivers.len() as f64).sqrt()
}

/// Geometric dilution of precision at `x`: `sqrt(trace((JᵀJ)⁻¹))`.
/// Infinite when the geometry cannot fix both coordinates.
pub fn gdop(receivers: &[Point2D], x: Point2D) -> f64 {
    let jtj = normal_matrix(&residual_jacobian(receivers, x));
    match jtj.try_inverse() {
        Some(inv) => inv.trace().sqrt(),
        None => f64::INFINITY,
    }
}

fn normal_matrix(jac: &[[f64; 2]]) -> Matrix2<f64> {
    jac.iter().fold(Matrix2::zeros(), |acc, row| {
        let v = Vector2::new(row[0], row[1]);
        acc + v * v.transpose()
    })
}

enum ArrayShape {
    General,
    /// All receivers on the horizontal line `y = y0`.
    Horizontal(f64),
}

fn array_shape(receivers: &[Point2D]) -> Result<ArrayShape, LocalizationError> {
    let n = receivers.len() as f64;
    let cx = receivers.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = receivers.iter().map(|p| p.y).sum::<f64>() / n;
    let mut cov = Matrix2::zeros();
    for p in receivers {
        let v = Vector2::new(p.x - cx, p.y - cy);
        cov += v * v.transpose();
    }
    let eig = cov.symmetric_eigenvalues();
    let (small, large) = (eig.min(), eig.max());
    if large <= 0.0 {
        return Err(LocalizationError::DegenerateGeometry("receivers coincide"));
    }
    if small > 1e-20 * large {
        return Ok(ArrayShape::General);
    }
    if receivers.iter().all(|p| p.y == receivers[0].y) {
        Ok(ArrayShape::Horizontal(receivers[0].y))
    } else {
        Err(LocalizationError::DegenerateGeometry("receivers are collinear"))
    }
}

fn least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>, LocalizationError> {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax {
        return Err(LocalizationError::DegenerateGeometry("rank-deficient normal equations"));
    }
    svd.solve(&b, 0.0)
        .map_err(|_| LocalizationError::DegenerateGeometry("least-squares solve failed"))
}

/// Closed-form start point from the squared-range equations
/// `r_i² = ‖p_i‖² − 2 p_iᵀx + ‖x‖²`, linear in `(x, ‖x‖²)`.
fn linearized_start(receivers: &[Point2D], ranges: &[f64], shape: &ArrayShape) -> Result<Point2D, LocalizationError> {
    let n = receivers.len();
    match *shape {
        ArrayShape::General => {
            let a = DMatrix::from_fn(n, 3, |i, j| match j {
                0 => -2.0 * receivers[i].x,
                1 => -2.0 * receivers[i].y,
                _ => 1.0,
            });
            let b = DVector::from_fn(n, |i, _| {
                ranges[i] * ranges[i] - receivers[i].x.powi(2) - receivers[i].y.powi(2)
            });
            let sol = least_squares(a, b)?;
            Ok(Point2D::new(sol[0], sol[1]))
        }
        ArrayShape::Horizontal(y0) => {
            // only the along-array coordinate and the depth² are observable;
            // the source is taken on the material side, below the array
            let a = DMatrix::from_fn(n, 2, |i, j| if j == 0 { -2.0 * receivers[i].x } else { 1.0 });
            let b = DVector::from_fn(n, |i, _| ranges[i] * ranges[i] - receivers[i].x.powi(2));
            let sol = least_squares(a, b)?;
            let x = sol[0];
            let depth_sq = (sol[1] - x * x).max(0.0);
            Ok(Point2D::new(x, y0 - depth_sq.sqrt()))
        }
    }
}

fn gauss_newton(receivers: &[Point2D], ranges: &[f64], start: Point2D) -> Point2D {
    let mut x = start;
    let mut cost = objective(receivers, ranges, x);
    for _ in 0..MAX_ITERATIONS {
        let f = range_residuals(receivers, ranges, x);
        let jac = residual_jacobian(receivers, x);
        let jtj = normal_matrix(&jac);
        let jtf = jac.iter().zip(&f).fold(Vector2::zeros(), |acc, (row, fi)| {
            acc + Vector2::new(row[0], row[1]) * *fi
        });
        let Some(inv) = jtj.try_inverse() else { break };
        let step = -(inv * jtf);
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        // halve until the cost does not increase
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = Point2D::new(x.x + scale * step.x, x.y + scale * step.y);
            let c = objective(receivers, ranges, trial);
            if c <= cost {
                accepted = Some((trial, c));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, c)) = accepted else { break };
        let moved = scale * step.norm();
        x = next;
        cost = c;
        if moved < STEP_TOLERANCE {
            break;
        }
    }
    x
}

/// Least-squares source position from ranges to known receivers.
///
/// Minimizes `Σ (‖x − p_i‖ − r_i)²` by Gauss–Newton, started from the
/// linearized squared-range solution. Receivers on one horizontal line are
/// accepted: the solution is then placed below the line.
pub fn localize_source(receivers: &[Point2D], ranges: &[f64]) -> Result<SourceEstimate, LocalizationError> {
    if receivers.len() < 3 {
        return Err(LocalizationError::TooFewReceivers(receivers.len()));
    }
    if ranges.len() != receivers.len() {
        return Err(LocalizationError::LengthMismatch {
            receivers: receivers.len(),
            ranges: ranges.len(),
        });
    }
    if let Some(i) = ranges.iter().position(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(LocalizationError::BadRange(i));
    }
    let shape = array_shape(receivers)?;
    let start = linearized_start(receivers, ranges, &shape)?;
    let position = gauss_newton(receivers, ranges, start);
    Ok(SourceEstimate {
        position,
        residual: rms(receivers, ranges, position),
        ranges: ranges.to_vec(),
    })
}

/// Linearized start point only, for diagnostics.
pub fn linearized_position(receivers: &[Point2D], ranges: &[f64]) -> Result<Point2D, LocalizationError> {
    let shape = array_shape(receivers)?;
    linearized_start(receivers, ranges, &shape)
}

/// One source folded into a defect estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contributor {
    /// Index into the source list given to [`reconstruct_defects`].
    pub source: usize,
    /// Mirrors that map the defect onto this source (empty for the defect).
    pub lineage: Vec<usize>,
    /// Source position with the lineage undone.
    pub folded: Point2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectEstimate {
    pub position: Point2D,
    /// The defect source first, then its image sources.
    pub contributors: Vec<Contributor>,
}

impl DefectEstimate {
    pub fn count(&self) -> usize {
        self.contributors.len()
    }

    pub fn mean_of_contributors(&self) -> Point2D {
        mean(self.contributors.iter().map(|c| c.folded))
    }
}

fn mean(points: impl Iterator<Item = Point2D>) -> Point2D {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        sx += p.x;
        sy += p.y;
        n += 1;
    }
    Point2D::new(sx / n as f64, sy / n as f64)
}

/// Groups sources into defects, topmost first.
///
/// The highest unlabeled source becomes a defect; for each of its mirror
/// positions (up to `max_mirror_order` mirrors) the closest unlabeled source
/// within `max(sigma, MIN_VICINITY)` is taken as its image. The defect
/// estimate is the mean of the defect source and its images mapped back
/// through their mirrors. Repeats until every source is labeled.
pub fn reconstruct_defects(
    sources: &[SourceEstimate],
    layers: &LayerStack,
    sigma: f64,
    max_mirror_order: usize,
) -> Vec<DefectEstimate> {
    let radius = sigma.max(MIN_VICINITY);
    let mut order: Vec<usize> = (0..sources.len()).collect();
    order.sort_by(|&a, &b| sources[b].position.y.total_cmp(&sources[a].position.y).then(a.cmp(&b)));
    let mut labeled = vec![false; sources.len()];
    let mut defects = Vec::new();

    for &top in &order {
        if labeled[top] {
            continue;
        }
        labeled[top] = true;
        let origin = sources[top].position;
        let mut contributors = vec![Contributor {
            source: top,
            lineage: Vec::new(),
            folded: origin,
        }];
        for (mirror, lineage) in mirror_images(origin, layers, max_mirror_order) {
            let closest = order
                .iter()
                .filter(|&&s| !labeled[s])
                .map(|&s| (s, sources[s].position.distance(&mirror)))
                .filter(|&(_, d)| d <= radius)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((s, _)) = closest {
                labeled[s] = true;
                contributors.push(Contributor {
                    source: s,
                    folded: unapply_lineage(sources[s].position, &lineage, layers),
                    lineage,
                });
            }
        }
        let position = mean(contributors.iter().map(|c| c.folded));
        defects.push(DefectEstimate { position, contributors });
    }
    defects
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub truth: usize,
    pub estimate: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Matched estimates over all estimates; 1 when there are no estimates.
    pub precision: f64,
    /// Matched truths over all truths; 1 when there is nothing to find.
    pub recall: f64,
    /// Root mean square error over matched pairs; `None` without matches.
    pub rmse: Option<f64>,
    pub matches: Vec<MatchedPair>,
    pub estimate_count: usize,
    pub truth_count: usize,
}

/// Greedy nearest-pair matching of `estimates` to `truth` within
/// `match_radius`.
///
/// # Panics
///
/// If `match_radius` is not positive.
pub fn evaluate_points(estimates: &[Point2D], truth: &[Point2D], match_radius: f64) -> Metrics {
    assert!(match_radius > 0.0, "match radius must be positive");
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (t, tp) in truth.iter().enumerate() {
        for (e, ep) in estimates.iter().enumerate() {
            let d = tp.distance(ep);
            if d <= match_radius {
                pairs.push((d, t, e));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut truth_used = vec![false; truth.len()];
    let mut est_used = vec![false; estimates.len()];
    let mut matches = Vec::new();
    for (error, t, e) in pairs {
        if truth_used[t] || est_used[e] {
            continue;
        }
        truth_used[t] = true;
        est_used[e] = true;
        matches.push(MatchedPair {
            truth: t,
            estimate: e,
            error,
        });
    }
    matches.sort_by_key(|m| m.truth);
    let matched = matches.len() as f64;
    let ratio = |total: usize| if total == 0 { 1.0 } else { matched / total as f64 };
    let rmse = (!matches.is_empty()).then(|| (matches.iter().map(|m| m.error * m.error).sum::<f64>() / matched).sqrt());
    Metrics {
        precision: ratio(estimates.len()),
        recall: ratio(truth.len()),
        rmse,
        matches,
        estimate_count: estimates.len(),
        truth_count: truth.len(),
    }
}

pub fn evaluate(estimates: &[DefectEstimate], truth: &[Defect], match_radius: f64) -> Metrics {
    let e: Vec<Point2D> = estimates.iter().map(|d| d.position).collect();
    let t: Vec<Point2D> = truth.iter().map(|d| d.position).collect();
    evaluate_points(&e, &t, match_radius)
}
