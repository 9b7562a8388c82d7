//! Euclidean distance matrices and the rank test that decides whether a
//! vector of squared ranges can belong to a single point.
//!
//! An EDM of points in `DIM` dimensions has rank at most `DIM + 2`. Bordering
//! the receiver EDM with the squared ranges from the receivers to some point
//! keeps that bound; a vector that mixes echoes of different sources
//! generally breaks it. With noisy ranges the bound only holds approximately,
//! so the test looks at the size of the `(DIM + 3)`-th singular value.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{squared_distance, Point2D, DIM};

/// Maximum rank of a distance matrix of points in the plane.
pub const RANK_BOUND: usize = DIM + 2;

/// Default relative threshold for noiseless data.
pub const NOISELESS_TAU: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdmError {
    #[error("an EDM needs at least one point")]
    NoPoints,
    #[error("expected {expected} squared ranges, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("squared range {index} is negative or non-finite ({value})")]
    BadSquaredRange { index: usize, value: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("threshold must be finite and >= 0, got {0}")]
    BadThreshold(f64),
}

/// Matrix of pairwise squared distances.
#[derive(Debug, Clone, PartialEq)]
pub struct Edm {
    entries: DMatrix<f64>,
    points: Vec<Point2D>,
}

impl Edm {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// The points the matrix was built from.
    pub fn points(&self) -> &[Point2D] {
        &self.points
    }
}

pub fn build_edm(points: &[Point2D]) -> Result<Edm, EdmError> {
    if points.is_empty() {
        return Err(EdmError::NoPoints);
    }
    let m = points.len();
    let entries = DMatrix::from_fn(m, m, |i, j| squared_distance(&points[i], &points[j]));
    Ok(Edm {
        entries,
        points: points.to_vec(),
    })
}

/// Receiver EDM bordered by the squared ranges to one hypothesized source:
///
/// ```text
/// [ D    d_p ]
/// [ d_pᵀ  0  ]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedEdm {
    entries: DMatrix<f64>,
}

impl AugmentedEdm {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn receiver_count(&self) -> usize {
        self.entries.nrows() - 1
    }

    pub fn squared_ranges(&self) -> Vec<f64> {
        let n = self.receiver_count();
        (0..n).map(|i| self.entries[(i, n)]).collect()
    }
}

pub fn augment(edm: &Edm, squared_ranges: &[f64]) -> Result<AugmentedEdm, EdmError> {
    let n = edm.size();
    if squared_ranges.len() != n {
        return Err(EdmError::LengthMismatch {
            expected: n,
            got: squared_ranges.len(),
        });
    }
    if let Some((index, &value)) = squared_ranges
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
    {
        return Err(EdmError::BadSquaredRange { index, value });
    }
    let mut entries = DMatrix::zeros(n + 1, n + 1);
    entries.view_mut((0, 0), (n, n)).copy_from(&edm.entries);
    for (i, &d) in squared_ranges.iter().enumerate() {
        entries[(i, n)] = d;
        entries[(n, i)] = d;
    }
    Ok(AugmentedEdm { entries })
}

/// Singular values in descending order with matching singular vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    /// Columns are left singular vectors.
    pub u: DMatrix<f64>,
    /// Columns are right singular vectors.
    pub v: DMatrix<f64>,
}

impl SvdResult {
    /// `Σ λ_j u_j v_jᵀ` over the singular values selected by `keep`.
    fn partial_sum(&self, keep: impl Fn(f64) -> bool) -> DMatrix<f64> {
        let (rows, cols) = (self.u.nrows(), self.v.nrows());
        let mut out = DMatrix::zeros(rows, cols);
        for (j, &s) in self.singular_values.iter().enumerate() {
            if keep(s) {
                out += self.u.column(j) * self.v.column(j).transpose() * s;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.partial_sum(|_| true)
    }
}

pub fn singular_values(matrix: &DMatrix<f64>) -> Result<SvdResult, EdmError> {
    if !matrix.is_square() {
        return Err(EdmError::NotSquare {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
        });
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(EdmError::NonFinite);
    }
    let svd = matrix.clone().svd(true, true);
    let u = svd.u.expect("requested u");
    let v_t = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values = order.iter().map(|&j| svd.singular_values[j]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)]);
    Ok(SvdResult { singular_values, u, v })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thresholded {
    pub effective_rank: usize,
    pub matrix: DMatrix<f64>,
}

/// Hard singular value thresholding: drops every `λ_j < sigma_thresh`.
pub fn threshold_singular_values(svd: &SvdResult, sigma_thresh: f64) -> Result<Thresholded, EdmError> {
    if !(sigma_thresh >= 0.0 && sigma_thresh.is_finite()) {
        return Err(EdmError::BadThreshold(sigma_thresh));
    }
    // sigma = 0 counts strictly positive values only
    let keep = |s: f64| s >= sigma_thresh && s > 0.0;
    let effective_rank = svd.singular_values.iter().filter(|&&s| keep(s)).count();
    Ok(Thresholded {
        effective_rank,
        matrix: svd.partial_sum(keep),
    })
}

/// How small the trailing singular values must be for the rank test to pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ThresholdPolicy {
    /// Pass iff `λ5 / λ1 <= tau`.
    Relative { tau: f64 },
    /// Pass iff fewer than five singular values reach `threshold` (m²).
    Absolute { threshold: f64 },
}

impl ThresholdPolicy {
    pub fn relative(tau: f64) -> Self {
        Self::Relative { tau }
    }

    /// Absolute threshold `c · noise_sigma · scale`, where `scale` is a
    /// length that sets the magnitude of λ1 (typically the array aperture).
    pub fn absolute_from_noise(c: f64, noise_sigma: f64, scale: f64) -> Self {
        Self::Absolute {
            threshold: c * noise_sigma * scale,
        }
    }

    /// Largest `λ5` a matrix with leading singular value `lambda1` may have
    /// and still pass.
    pub fn max_trailing(&self, lambda1: f64) -> f64 {
        match *self {
            Self::Relative { tau } => tau * lambda1,
            Self::Absolute { threshold } => threshold,
        }
    }

    fn accepts(&self, lambda1: f64, trailing: f64) -> bool {
        match *self {
            Self::Relative { tau } => trailing <= tau * lambda1,
            Self::Absolute { threshold } => trailing < threshold,
        }
    }
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self::Relative { tau: NOISELESS_TAU }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTest {
    pub pass: bool,
    /// `λ5 / λ1`; lower is more EDM-like. `+∞` when `λ1 = 0`.
    pub score: f64,
}

/// Singular values of a symmetric matrix, descending. These are the absolute
/// eigenvalues, which the symmetric eigensolver delivers faster than an SVD.
pub(crate) fn symmetric_singular_values(matrix: DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = matrix.symmetric_eigenvalues().iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `(λ1, λ5)` of a symmetric matrix; `λ5 = 0` for matrices smaller than 5×5.
pub(crate) fn leading_and_trailing(matrix: DMatrix<f64>) -> (f64, f64) {
    let s = symmetric_singular_values(matrix);
    let first = s.first().copied().unwrap_or(0.0);
    let trailing = s.get(RANK_BOUND).copied().unwrap_or(0.0);
    (first, trailing)
}

pub(crate) fn rank_test_matrix(matrix: DMatrix<f64>, policy: &ThresholdPolicy) -> RankTest {
    let (lambda1, trailing) = leading_and_trailing(matrix);
    if lambda1 <= 0.0 || !lambda1.is_finite() {
        return RankTest {
            pass: false,
            score: f64::INFINITY,
        };
    }
    RankTest {
        pass: policy.accepts(lambda1, trailing),
        score: trailing / lambda1,
    }
}

/// Tests whether the augmented matrix has effective rank at most
/// [`RANK_BOUND`]. A matrix with `λ1 = 0` always fails with an infinite score.
pub fn rank_test(aug: &AugmentedEdm, policy: &ThresholdPolicy) -> RankTest {
    rank_test_matrix(aug.entries.clone(), policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square() -> Vec<Point2D> {
        vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(1.0, 0.0),
            Point2D::new(0.0, 1.0),
            Point2D::new(1.0, 1.0),
        ]
    }

    fn sq_ranges(receivers: &[Point2D], p: Point2D) -> Vec<f64> {
        receivers.iter().map(|r| squared_distance(r, &p)).collect()
    }

    fn svals(m: &DMatrix<f64>) -> Vec<f64> {
        singular_values(m).unwrap().singular_values
    }

    #[test]
    fn build_small_edms() {
        let e = build_edm(&[Point2D::new(0.0, 0.0)]).unwrap();
        assert_eq!(e.matrix(), &DMatrix::from_element(1, 1, 0.0));
        let e = build_edm(&[Point2D::new(0.0, 0.0), Point2D::new(3.0, 4.0)]).unwrap();
        assert_eq!(e.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 25.0, 25.0, 0.0]));
        assert_eq!(build_edm(&[]), Err(EdmError::NoPoints));
    }

    #[test]
    fn six_points_have_rank_four() {
        let pts = [
            Point2D::new(0.1, -0.4),
            Point2D::new(0.9, 0.3),
            Point2D::new(-0.7, 0.2),
            Point2D::new(0.35, 0.8),
            Point2D::new(-0.2, -0.95),
            Point2D::new(0.6, -0.1),
        ];
        let s = svals(build_edm(&pts).unwrap().matrix());
        assert!(s[4] / s[0] <= 1e-10, "{s:?}");
        assert!(s[5] / s[0] <= 1e-10, "{s:?}");
        assert!(s[3] / s[0] > 1e-6);
    }

    #[test]
    fn augment_layout_and_errors() {
        let edm = build_edm(&square()).unwrap();
        let aug = augment(&edm, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = aug.matrix();
        assert_eq!(m.nrows(), 5);
        assert_eq!(m.view((0, 0), (4, 4)), edm.matrix().view((0, 0), (4, 4)));
        assert_eq!(m[(2, 4)], 3.0);
        assert_eq!(m[(4, 2)], 3.0);
        assert_eq!(m[(4, 4)], 0.0);
        assert_eq!(aug.squared_ranges(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            augment(&edm, &[1.0, 2.0]),
            Err(EdmError::LengthMismatch { expected: 4, got: 2 })
        );
        assert!(matches!(
            augment(&edm, &[1.0, -2.0, 0.0, 0.0]),
            Err(EdmError::BadSquaredRange { index: 1, .. })
        ));
    }

    #[test]
    fn coincident_source_adds_no_rank() {
        let edm = build_edm(&square()).unwrap();
        let row: Vec<f64> = (0..4).map(|j| edm.get(2, j)).collect();
        let s = svals(augment(&edm, &row).unwrap().matrix());
        assert!(s[4] / s[0] <= 1e-10);
    }

    #[test]
    fn exact_and_swapped_ranges() {
        let rx = square();
        let edm = build_edm(&rx).unwrap();
        let exact = sq_ranges(&rx, Point2D::new(0.5, -0.7));
        let s = svals(augment(&edm, &exact).unwrap().matrix());
        assert!(s[4] / s[0] <= 1e-10);

        // (0.5, -0.7) is symmetric about the array; use a generic point
        let mut swapped = sq_ranges(&rx, GENERIC_SOURCE);
        swapped.swap(0, 1);
        let s = svals(augment(&edm, &swapped).unwrap().matrix());
        // regression value of the observed ratio
        let ratio = s[4] / s[0];
        assert!(ratio > 1e-3, "ratio {ratio}");
        assert!((ratio - SWAPPED_RATIO).abs() <= 1e-9, "ratio {ratio}");
    }

    const GENERIC_SOURCE: Point2D = Point2D::new(0.37, -0.71);
    // λ5/λ1 for the square array, GENERIC_SOURCE, entries 0 and 1 swapped (0<->3 is a symmetry of the square).
    const SWAPPED_RATIO: f64 = 0.00855521516814077;

    #[test]
    fn svd_examples() {
        assert!(svals(&DMatrix::zeros(4, 4)).iter().all(|&s| s == 0.0));
        let s = svals(&DMatrix::identity(5, 5));
        assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let s = svals(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            1.0, 3.0, 2.0,
        ])));
        assert_eq!(s, vec![3.0, 2.0, 1.0]);
        assert_eq!(
            singular_values(&DMatrix::zeros(2, 3)).unwrap_err(),
            EdmError::NotSquare { rows: 2, cols: 3 }
        );
        let mut bad = DMatrix::zeros(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert_eq!(singular_values(&bad).unwrap_err(), EdmError::NonFinite);
    }

    fn diag_svd(values: &[f64]) -> SvdResult {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values.to_vec()));
        singular_values(&m).unwrap()
    }

    #[test]
    fn thresholding_counts() {
        let svd = diag_svd(&[10.0, 5.0, 2.0, 1.0, 1e-12]);
        let t = threshold_singular_values(&svd, 1e-6).unwrap();
        assert_eq!(t.effective_rank, 4);
        assert_eq!(t.matrix[(4, 4)], 0.0);
        assert!((t.matrix[(0, 0)] - 10.0).abs() < 1e-12);

        let svd = diag_svd(&[10.0, 5.0, 2.0, 1.0, 0.9]);
        assert_eq!(threshold_singular_values(&svd, 0.1).unwrap().effective_rank, 5);

        let svd = diag_svd(&[3.0, 0.0, 1.0, 0.0]);
        assert_eq!(threshold_singular_values(&svd, 0.0).unwrap().effective_rank, 2);
        assert!(threshold_singular_values(&svd, -1.0).is_err());
    }

    #[test]
    fn rank_test_examples() {
        let rx = square();
        let edm = build_edm(&rx).unwrap();
        let policy = ThresholdPolicy::default();

        let exact = augment(&edm, &sq_ranges(&rx, Point2D::new(0.5, -0.7))).unwrap();
        let t = rank_test(&exact, &policy);
        assert!(t.pass);
        assert!(t.score <= 1e-10);

        let mut swapped = sq_ranges(&rx, GENERIC_SOURCE);
        swapped.swap(0, 1);
        let t = rank_test(&augment(&edm, &swapped).unwrap(), &policy);
        assert!(!t.pass);

        let any = augment(&edm, &sq_ranges(&rx, Point2D::new(-3.0, 7.5))).unwrap();
        assert!(rank_test(&any, &policy).pass);
    }

    #[test]
    fn degenerate_matrix_fails_with_infinite_score() {
        let pts = vec![Point2D::new(1.0, 1.0); 4];
        let aug = augment(&build_edm(&pts).unwrap(), &[0.0; 4]).unwrap();
        let t = rank_test(&aug, &ThresholdPolicy::default());
        assert!(!t.pass);
        assert!(t.score.is_infinite());
    }

    #[test]
    fn absolute_policy() {
        let rx = square();
        let edm = build_edm(&rx).unwrap();
        let mut d = sq_ranges(&rx, GENERIC_SOURCE);
        let exact = augment(&edm, &d).unwrap();
        assert!(rank_test(&exact, &ThresholdPolicy::Absolute { threshold: 1e-9 }).pass);
        d.swap(0, 1);
        let wrong = augment(&edm, &d).unwrap();
        let s = svals(wrong.matrix());
        assert!(!rank_test(&wrong, &ThresholdPolicy::Absolute { threshold: s[4] * 0.5 }).pass);
        assert!(rank_test(&wrong, &ThresholdPolicy::Absolute { threshold: s[4] * 2.0 }).pass);
        let p = ThresholdPolicy::absolute_from_noise(2.0, 1e-3, 0.5);
        assert_eq!(p, ThresholdPolicy::Absolute { threshold: 1e-3 });
    }

    fn arb_points(min: usize, max: usize) -> impl Strategy<Value = Vec<Point2D>> {
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), min..=max)
            .prop_map(|v| v.into_iter().map(|(x, y)| Point2D::new(x, y)).collect())
    }

    proptest! {
        #[test]
        fn planar_edm_rank_bound(pts in arb_points(5, 10)) {
            let s = symmetric_singular_values(build_edm(&pts).unwrap().matrix().clone());
            prop_assert!(s[4] <= 1e-10 * s[0]);
        }

        #[test]
        fn svd_reconstructs(pts in arb_points(2, 9), extra in prop::collection::vec(0.0..4.0f64, 9)) {
            let edm = build_edm(&pts).unwrap();
            let aug = augment(&edm, &extra[..pts.len()]).unwrap();
            let svd = singular_values(aug.matrix()).unwrap();
            prop_assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
            let err = (svd.reconstruct() - aug.matrix()).norm() / aug.matrix().norm();
            prop_assert!(err <= 1e-8);
        }

        #[test]
        fn augment_symmetric_zero_diagonal(pts in arb_points(4, 8), d in prop::collection::vec(0.0..4.0f64, 8)) {
            let aug = augment(&build_edm(&pts).unwrap(), &d[..pts.len()]).unwrap();
            let m = aug.matrix();
            prop_assert_eq!(m, &m.transpose());
            prop_assert!(m.diagonal().iter().all(|&v| v == 0.0));
        }

        #[test]
        fn threshold_between_values_gives_exact_rank(
            mut values in prop::collection::vec(0.01..100.0f64, 2..8),
            k_seed in 0usize..100,
        ) {
            values.sort_by(|a, b| b.total_cmp(a));
            values.dedup();
            let k = 1 + k_seed % values.len().max(1);
            prop_assume!(k < values.len());
            let sigma = 0.5 * (values[k - 1] + values[k]);
            let t = threshold_singular_values(&diag_svd(&values), sigma).unwrap();
            prop_assert_eq!(t.effective_rank, k);
        }

        #[test]
        fn rank_test_relabeling_invariant(
            pts in arb_points(4, 8),
            src in (-1.0..1.0f64, -2.0..0.0f64),
            noise in prop::collection::vec(-0.05..0.05f64, 8),
            shift in 1usize..8,
        ) {
            let n = pts.len();
            let p = Point2D::new(src.0, src.1);
            let d: Vec<f64> = pts.iter().enumerate()
                .map(|(i, r)| (squared_distance(r, &p) + noise[i]).max(0.0))
                .collect();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let pts2: Vec<Point2D> = perm.iter().map(|&i| pts[i]).collect();
            let d2: Vec<f64> = perm.iter().map(|&i| d[i]).collect();
            let policy = ThresholdPolicy::relative(1e-4);
            let a = rank_test(&augment(&build_edm(&pts).unwrap(), &d).unwrap(), &policy);
            let b = rank_test(&augment(&build_edm(&pts2).unwrap(), &d2).unwrap(), &policy);
            prop_assert!((a.score - b.score).abs() <= 1e-12);
            prop_assert_eq!(a.pass, b.pass);
        }
    }
}
