//! Echo labeling: choose one echo per receiver so that the chosen ranges
//! belong to a common source.
//!
//! The search walks the product of the per-receiver echo lists depth first.
//! Two bounds cut it down, and neither discards a combination that would
//! pass the final rank test. A third adds a requirement of its own.
//!
//! * triangle bound: two ranges from one source differ by at most the
//!   distance between their receivers (plus a noise slack);
//! * partial rank bound: every singular value of a principal submatrix is at
//!   most the matching singular value of the full matrix, so a prefix whose
//!   fifth singular value already exceeds the largest admissible one for any
//!   completion can be dropped;
//! * consistency bound (optional): a combination is kept only if some point
//!   explains its ranges with RMS misfit at most `max(slack, MIN_MISFIT)`.
//!   The least-squares misfit of a prefix never exceeds that of a full
//!   combination, so prefixes of three or more receivers are checked too.
//!   With every receiver on one line the rank test only asks the squared
//!   ranges to fit some parabola, and this restores the missing constraint.
//!
//! Surviving combinations become nodes of a conflict graph (an edge joins two
//! combinations that use the same echo) and the maximum independent set of
//! that graph is the labeling.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edm::{
    build_edm, leading_and_trailing, rank_test_matrix, Edm, EdmError, ThresholdPolicy, NOISELESS_TAU, RANK_BOUND,
};
use crate::forward::EchoSet;
use crate::geometry::{squared_distance, LayerStack, Point2D};
use crate::mis::{maximum_independent_set_with_partitions, Graph, MisError};
use crate::reconstruction::localize_source;

/// Default limit on visited search nodes.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Floor of the misfit tolerance of the consistency check, meters.
pub const MIN_MISFIT: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelingError {
    #[error("need at least 4 receivers, got {0}")]
    TooFewReceivers(usize),
    #[error("echo set has {echoes} receivers but the geometry has {receivers}")]
    ReceiverMismatch { echoes: usize, receivers: usize },
    #[error("range {echo} at receiver {receiver} is negative or non-finite")]
    BadRange { receiver: usize, echo: usize },
    #[error("echo combination search exceeded its budget after {explored} nodes")]
    BudgetExceeded { explored: u64 },
    #[error("independent set search exceeded its budget after {explored} nodes")]
    GraphBudgetExceeded { explored: u64 },
    #[error(transparent)]
    Edm(#[from] EdmError),
}

impl From<MisError> for LabelingError {
    fn from(e: MisError) -> Self {
        match e {
            MisError::BudgetExceeded { explored } => Self::GraphBudgetExceeded { explored },
            MisError::ScoreMismatch { .. } | MisError::BadPartition { .. } => {
                unreachable!("scores and partitions are built from the node list")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Extra tolerance on the triangle bound, meters. Five noise sigmas by
    /// default.
    pub slack: f64,
    /// Apply the triangle bound.
    pub triangle: bool,
    /// Apply the partial rank bound.
    pub partial_rank: bool,
    /// Maximum number of search nodes, shared by the combination search and
    /// the independent set search.
    pub budget: u64,
    /// Explore first-receiver branches in parallel.
    pub parallel: bool,
    /// Apply the consistency bound. Unlike the other two it removes
    /// rank-feasible combinations.
    pub consistency: bool,
}

impl PruneConfig {
    pub fn for_noise(noise_sigma: f64) -> Self {
        Self {
            slack: 5.0 * noise_sigma,
            ..Self::default()
        }
    }

    /// Exhaustive enumeration without any pruning.
    pub fn exhaustive() -> Self {
        Self {
            triangle: false,
            partial_rank: false,
            consistency: false,
            ..Self::default()
        }
    }
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            slack: 0.0,
            triangle: true,
            partial_rank: true,
            budget: DEFAULT_BUDGET,
            parallel: true,
            consistency: true,
        }
    }
}

/// One echo per receiver, hypothesized to come from one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoCombination {
    /// Echo index at each receiver.
    pub indices: Vec<usize>,
    pub squared_ranges: Vec<f64>,
    /// Rank test score `λ5 / λ1`.
    pub score: f64,
}

impl EchoCombination {
    pub fn ranges(&self) -> Vec<f64> {
        self.squared_ranges.iter().map(|d| d.sqrt()).collect()
    }

    /// Whether the two combinations use the same echo at some receiver.
    pub fn conflicts_with(&self, other: &EchoCombination) -> bool {
        self.indices.iter().zip(&other.indices).any(|(a, b)| a == b)
    }
}

struct Search<'a> {
    receivers: usize,
    /// Receiver EDM.
    edm: &'a DMatrix<f64>,
    /// Receiver distances.
    spacing: DMatrix<f64>,
    /// Per receiver: (range, original echo index), sorted by range.
    sorted: Vec<Vec<(f64, usize)>>,
    /// Largest squared range seen at each receiver.
    max_sq: Vec<f64>,
    points: &'a [Point2D],
    /// Largest admissible sum of squared misfits.
    max_sse: f64,
    edm_frobenius_sq: f64,
    policy: ThresholdPolicy,
    prune: PruneConfig,
    explored: &'a AtomicU64,
    aborted: &'a AtomicBool,
}

impl Search<'_> {
    fn visit(&self) -> bool {
        let n = self.explored.fetch_add(1, Ordering::Relaxed) + 1;
        if n > self.prune.budget {
            self.aborted.store(true, Ordering::Relaxed);
        }
        !self.aborted.load(Ordering::Relaxed)
    }

    /// Admissible interval for the range at receiver `k` given the prefix.
    fn window(&self, k: usize, chosen: &[(f64, usize)]) -> (f64, f64) {
        if !self.prune.triangle {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (j, &(r, _)) in chosen.iter().enumerate() {
            let bound = self.spacing[(j, k)] + self.prune.slack;
            lo = lo.max(r - bound);
            hi = hi.min(r + bound);
        }
        (lo, hi)
    }

    fn prefix_matrix(&self, chosen: &[(f64, usize)]) -> DMatrix<f64> {
        let k = chosen.len();
        let mut m = DMatrix::zeros(k + 1, k + 1);
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] = self.edm[(i, j)];
            }
            let d = chosen[i].0 * chosen[i].0;
            m[(i, k)] = d;
            m[(k, i)] = d;
        }
        m
    }

    /// True if no completion of this prefix can pass the rank test.
    fn prefix_infeasible(&self, chosen: &[(f64, usize)]) -> bool {
        let k = chosen.len();
        if !self.prune.partial_rank || k < RANK_BOUND || k == self.receivers {
            return false;
        }
        // ‖A‖_F bounds λ1 of every completion
        let mut frob = self.edm_frobenius_sq;
        for &(r, _) in chosen {
            frob += 2.0 * (r * r) * (r * r);
        }
        for j in k..self.receivers {
            frob += 2.0 * self.max_sq[j] * self.max_sq[j];
        }
        let (_, trailing) = leading_and_trailing(self.prefix_matrix(chosen));
        trailing > self.policy.max_trailing(frob.sqrt())
    }

    /// True if no point explains the prefix ranges well enough.
    fn prefix_inconsistent(&self, chosen: &[(f64, usize)]) -> bool {
        let k = chosen.len();
        if !self.prune.consistency || k < 3 {
            return false;
        }
        let ranges: Vec<f64> = chosen.iter().map(|c| c.0).collect();
        match localize_source(&self.points[..k], &ranges) {
            Ok(estimate) => k as f64 * estimate.residual * estimate.residual > self.max_sse,
            // layouts the localizer rejects give no verdict
            Err(_) => false,
        }
    }

    fn descend(&self, chosen: &mut Vec<(f64, usize)>, out: &mut Vec<EchoCombination>) {
        if !self.visit() {
            return;
        }
        let k = chosen.len();
        if self.prefix_inconsistent(chosen) {
            return;
        }
        if k == self.receivers {
            let test = rank_test_matrix(self.prefix_matrix(chosen), &self.policy);
            if test.pass {
                out.push(EchoCombination {
                    indices: chosen.iter().map(|c| c.1).collect(),
                    squared_ranges: chosen.iter().map(|c| c.0 * c.0).collect(),
                    score: test.score,
                });
            }
            return;
        }
        if self.prefix_infeasible(chosen) {
            return;
        }
        let (lo, hi) = self.window(k, chosen);
        let row = &self.sorted[k];
        let start = row.partition_point(|e| e.0 < lo);
        for &echo in row[start..].iter().take_while(|e| e.0 <= hi) {
            chosen.push(echo);
            self.descend(chosen, out);
            chosen.pop();
            if self.aborted.load(Ordering::Relaxed) {
                return;
            }
        }
    }
}

fn check_inputs(echoes: &EchoSet, receiver_count: usize) -> Result<(), LabelingError> {
    if receiver_count < 4 {
        return Err(LabelingError::TooFewReceivers(receiver_count));
    }
    if echoes.receiver_count() != receiver_count {
        return Err(LabelingError::ReceiverMismatch {
            echoes: echoes.receiver_count(),
            receivers: receiver_count,
        });
    }
    for (receiver, row) in echoes.per_receiver_ranges.iter().enumerate() {
        if let Some(echo) = row.iter().position(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(LabelingError::BadRange { receiver, echo });
        }
    }
    Ok(())
}

/// Outcome of [`enumerate_feasible`] with search statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    /// Sorted by echo index tuple.
    pub combinations: Vec<EchoCombination>,
    pub explored: u64,
}

/// Every echo combination that passes the rank test under `policy` (and the
/// consistency bound, if enabled).
pub fn enumerate_feasible(
    echoes: &EchoSet,
    receiver_edm: &Edm,
    policy: &ThresholdPolicy,
    prune: &PruneConfig,
) -> Result<Enumeration, LabelingError> {
    let n = receiver_edm.size();
    check_inputs(echoes, n)?;
    if echoes.per_receiver_ranges.iter().any(Vec::is_empty) {
        return Ok(Enumeration {
            combinations: Vec::new(),
            explored: 0,
        });
    }
    let edm = receiver_edm.matrix();
    let sorted: Vec<Vec<(f64, usize)>> = echoes
        .per_receiver_ranges
        .iter()
        .map(|row| {
            let mut v: Vec<(f64, usize)> = row.iter().copied().zip(0..).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v
        })
        .collect();
    let max_sq = sorted.iter().map(|row| row.last().map_or(0.0, |e| e.0 * e.0)).collect();
    let explored = AtomicU64::new(0);
    let aborted = AtomicBool::new(false);
    let search = Search {
        receivers: n,
        edm,
        spacing: edm.map(f64::sqrt),
        sorted,
        max_sq,
        points: receiver_edm.points(),
        max_sse: n as f64 * prune.slack.max(MIN_MISFIT).powi(2),
        edm_frobenius_sq: edm.norm_squared(),
        policy: *policy,
        prune: *prune,
        explored: &explored,
        aborted: &aborted,
    };

    let branch = |first: &(f64, usize)| {
        let mut out = Vec::new();
        let mut chosen = vec![*first];
        search.descend(&mut chosen, &mut out);
        out
    };
    let per_branch: Vec<Vec<EchoCombination>> = if prune.parallel {
        search.sorted[0].par_iter().map(branch).collect()
    } else {
        search.sorted[0].iter().map(branch).collect()
    };
    let explored = explored.load(Ordering::Relaxed);
    if aborted.load(Ordering::Relaxed) {
        return Err(LabelingError::BudgetExceeded { explored });
    }
    let mut combinations: Vec<EchoCombination> = per_branch.into_iter().flatten().collect();
    combinations.sort_by(|a, b| a.indices.cmp(&b.indices));
    Ok(Enumeration { combinations, explored })
}

/// Graph over feasible combinations; an edge marks a shared echo.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictGraph {
    pub combinations: Vec<EchoCombination>,
    pub graph: Graph,
}

impl ConflictGraph {
    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.combinations.iter().map(|c| c.score).collect()
    }
}

pub fn build_conflict_graph(combinations: Vec<EchoCombination>) -> ConflictGraph {
    let mut graph = Graph::new(combinations.len());
    let receivers = combinations.first().map_or(0, |c| c.indices.len());
    for r in 0..receivers {
        let mut by_echo: Vec<(usize, usize)> = combinations
            .iter()
            .enumerate()
            .map(|(node, c)| (c.indices[r], node))
            .collect();
        by_echo.sort_unstable();
        for group in by_echo.chunk_by(|a, b| a.0 == b.0) {
            for (i, a) in group.iter().enumerate() {
                for b in &group[i + 1..] {
                    graph.add_edge(a.1, b.1);
                }
            }
        }
    }
    ConflictGraph { combinations, graph }
}

/// Maximum independent set of the conflict graph, ties broken by total score.
pub fn select_combinations(graph: &ConflictGraph, budget: u64) -> Result<Vec<usize>, LabelingError> {
    // combinations sharing an echo at one receiver form a clique
    let receivers = graph.combinations.first().map_or(0, |c| c.indices.len());
    let partitions: Vec<Vec<usize>> = (0..receivers)
        .map(|r| graph.combinations.iter().map(|c| c.indices[r]).collect())
        .collect();
    let set = maximum_independent_set_with_partitions(&graph.graph, &graph.scores(), &partitions, budget)?;
    Ok(set.nodes)
}

/// A labeled source: its echo at every receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSource {
    pub indices: Vec<usize>,
    pub ranges: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    pub sources: Vec<LabeledSource>,
    pub feasible_count: usize,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub explored: u64,
}

impl Labeling {
    pub fn range_vectors(&self) -> Vec<Vec<f64>> {
        self.sources.iter().map(|s| s.ranges.clone()).collect()
    }

    /// Estimated number of sources.
    pub fn cardinality(&self) -> usize {
        self.sources.len()
    }
}

/// Enumerate, build the conflict graph and keep its maximum independent set.
pub fn label_echoes(
    echoes: &EchoSet,
    receivers: &[Point2D],
    policy: &ThresholdPolicy,
    prune: &PruneConfig,
) -> Result<Labeling, LabelingError> {
    check_inputs(echoes, receivers.len())?;
    let edm = build_edm(receivers)?;
    let enumeration = enumerate_feasible(echoes, &edm, policy, prune)?;
    let feasible_count = enumeration.combinations.len();
    let graph = build_conflict_graph(enumeration.combinations);
    let remaining = prune.budget.saturating_sub(enumeration.explored);
    let selected = select_combinations(&graph, remaining)?;
    let sources = selected
        .iter()
        .map(|&node| {
            let c = &graph.combinations[node];
            LabeledSource {
                indices: c.indices.clone(),
                ranges: c
                    .indices
                    .iter()
                    .enumerate()
                    .map(|(r, &e)| echoes.per_receiver_ranges[r][e])
                    .collect(),
                score: c.score,
            }
        })
        .collect();
    Ok(Labeling {
        sources,
        feasible_count,
        graph_nodes: graph.node_count(),
        graph_edges: graph.edge_count(),
        explored: enumeration.explored,
    })
}

/// Monte Carlo calibration of the relative threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub trials: usize,
    pub quantile: f64,
    pub seed: u64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            trials: 1000,
            quantile: 0.999,
            seed: 0x5eed,
        }
    }
}

/// Relative threshold for range noise `noise_sigma`: the `quantile` of
/// `λ5 / λ1` over correct augmentations of sources drawn uniformly from the
/// region the sources of `layers` can occupy (under the receiver span, down
/// to twice the material depth). Never below [`NOISELESS_TAU`].
pub fn calibrate_tau(
    receivers: &[Point2D],
    layers: &LayerStack,
    noise_sigma: f64,
    calibration: &Calibration,
) -> Result<f64, LabelingError> {
    if noise_sigma <= 0.0 || calibration.trials == 0 {
        return Ok(NOISELESS_TAU);
    }
    let edm = build_edm(receivers)?;
    let (x_lo, x_hi) = receivers
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.x), hi.max(r.x))
        });
    let y_lo = 2.0 * layers.bottom();
    let y_hi = 0.02 * layers.bottom();
    let mut rng = ChaCha8Rng::seed_from_u64(calibration.seed);
    let n = receivers.len();
    let mut scores = Vec::with_capacity(calibration.trials);
    for _ in 0..calibration.trials {
        let p = Point2D::new(rng.random_range(x_lo..=x_hi), rng.random_range(y_lo..y_hi));
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(edm.matrix());
        for (i, r) in receivers.iter().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let range = (squared_distance(r, &p).sqrt() + noise_sigma * noise).max(0.0);
            m[(i, n)] = range * range;
            m[(n, i)] = range * range;
        }
        let (l1, l5) = leading_and_trailing(m);
        scores.push(l5 / l1);
    }
    scores.sort_by(f64::total_cmp);
    let rank = ((calibration.quantile * scores.len() as f64).ceil() as usize).clamp(1, scores.len());
    Ok(scores[rank - 1].max(NOISELESS_TAU))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edm::{augment, rank_test};

    fn line_array(n: usize, pitch: f64) -> Vec<Point2D> {
        (0..n)
            .map(|i| Point2D::new((i as f64 - (n as f64 - 1.0) / 2.0) * pitch, 0.0))
            .collect()
    }

    fn echoes_for(receivers: &[Point2D], sources: &[Point2D]) -> EchoSet {
        EchoSet::from_ranges(
            receivers
                .iter()
                .map(|r| {
                    let mut row: Vec<f64> = sources.iter().map(|s| r.distance(s)).collect();
                    row.sort_by(f64::total_cmp);
                    row
                })
                .collect(),
        )
    }

    fn serial() -> PruneConfig {
        PruneConfig {
            parallel: false,
            ..PruneConfig::default()
        }
    }

    #[test]
    fn single_source_single_combination() {
        let rx = line_array(5, 1.0);
        let echoes = echoes_for(&rx, &[Point2D::new(0.3, -1.2)]);
        let edm = build_edm(&rx).unwrap();
        let e = enumerate_feasible(&echoes, &edm, &ThresholdPolicy::default(), &serial()).unwrap();
        assert_eq!(e.combinations.len(), 1);
        assert!(e.combinations[0].score <= 1e-10);
        assert_eq!(e.combinations[0].indices, vec![0; 5]);
    }

    #[test]
    fn two_sources_match_exhaustive_oracle() {
        let rx = vec![
            Point2D::new(-1.0, 0.0),
            Point2D::new(-0.2, 0.0),
            Point2D::new(0.5, 0.0),
            Point2D::new(1.3, 0.0),
            Point2D::new(2.0, 0.0),
        ];
        let srcs = [Point2D::new(-0.4, -0.8), Point2D::new(1.1, -2.1)];
        let echoes = echoes_for(&rx, &srcs);
        let edm = build_edm(&rx).unwrap();
        let policy = ThresholdPolicy::relative(1e-8);

        // oracle: every one of the 2^N assignments, tested directly
        let n = rx.len();
        let mut passing = Vec::new();
        for mask in 0u32..1 << n {
            let idx: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let d: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(i, &k)| echoes.per_receiver_ranges[i][k].powi(2))
                .collect();
            if rank_test(&augment(&edm, &d).unwrap(), &policy).pass {
                passing.push(idx);
            }
        }
        assert_eq!(passing.len(), 2);
        passing.sort();

        let got = enumerate_feasible(&echoes, &edm, &policy, &serial()).unwrap();
        let got: Vec<Vec<usize>> = got.combinations.into_iter().map(|c| c.indices).collect();
        assert_eq!(got, passing);
    }

    #[test]
    fn pruned_equals_unpruned() {
        let rx = line_array(5, 0.8);
        let srcs = [
            Point2D::new(-0.4, -0.8),
            Point2D::new(1.1, -2.1),
            Point2D::new(0.2, -1.5),
            Point2D::new(-1.3, -0.4),
        ];
        let sigma = 2e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut echoes = echoes_for(&rx, &srcs);
        for row in &mut echoes.per_receiver_ranges {
            for r in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *r += sigma * z;
            }
        }
        let edm = build_edm(&rx).unwrap();
        let policy = ThresholdPolicy::relative(1e-4);
        let full = enumerate_feasible(&echoes, &edm, &policy, &PruneConfig::exhaustive()).unwrap();
        let pruned = enumerate_feasible(&echoes, &edm, &policy, &PruneConfig::for_noise(sigma)).unwrap();
        assert!(full.combinations.len() >= 4);
        assert_eq!(full.combinations, pruned.combinations);
        assert!(pruned.explored < full.explored);
    }

    #[test]
    fn budget_exceeded_reports_progress() {
        let rx = line_array(6, 1.0);
        let srcs: Vec<Point2D> = (0..6)
            .map(|i| Point2D::new(i as f64 * 0.3, -1.0 - i as f64 * 0.2))
            .collect();
        let echoes = echoes_for(&rx, &srcs);
        let edm = build_edm(&rx).unwrap();
        let prune = PruneConfig { budget: 50, ..serial() };
        let err = enumerate_feasible(&echoes, &edm, &ThresholdPolicy::default(), &prune).unwrap_err();
        assert!(matches!(err, LabelingError::BudgetExceeded { explored } if explored > 50));
    }

    #[test]
    fn input_errors() {
        let rx = line_array(3, 1.0);
        let echoes = EchoSet::from_ranges(vec![vec![1.0]; 3]);
        assert_eq!(
            label_echoes(&echoes, &rx, &ThresholdPolicy::default(), &serial()).unwrap_err(),
            LabelingError::TooFewReceivers(3)
        );
        let rx = line_array(4, 1.0);
        assert!(matches!(
            label_echoes(&echoes, &rx, &ThresholdPolicy::default(), &serial()),
            Err(LabelingError::ReceiverMismatch {
                echoes: 3,
                receivers: 4
            })
        ));
        let echoes = EchoSet::from_ranges(vec![vec![1.0], vec![1.0], vec![f64::NAN], vec![1.0]]);
        assert!(matches!(
            label_echoes(&echoes, &rx, &ThresholdPolicy::default(), &serial()),
            Err(LabelingError::BadRange { receiver: 2, echo: 0 })
        ));
    }

    fn combo(indices: &[usize]) -> EchoCombination {
        EchoCombination {
            indices: indices.to_vec(),
            squared_ranges: vec![1.0; indices.len()],
            score: 0.0,
        }
    }

    #[test]
    fn conflict_graph_edges() {
        let g = build_conflict_graph(vec![combo(&[0, 0, 0, 0]), combo(&[1, 1, 1, 1])]);
        assert_eq!(g.edge_count(), 0);

        let g = build_conflict_graph(vec![combo(&[0, 1, 2, 3]), combo(&[0, 2, 3, 1])]);
        assert_eq!(g.edge_count(), 1);
        assert!(g.graph.has_edge(0, 1));

        let g = build_conflict_graph(vec![combo(&[2, 2, 2, 2]); 4]);
        assert_eq!(g.edge_count(), 6);
        assert!(build_conflict_graph(Vec::new()).node_count() == 0);
    }

    #[test]
    fn label_single_and_empty() {
        let rx = line_array(4, 1.0);
        let p = Point2D::new(0.25, -0.9);
        let echoes = echoes_for(&rx, &[p]);
        let l = label_echoes(&echoes, &rx, &ThresholdPolicy::default(), &serial()).unwrap();
        assert_eq!(l.range_vectors().len(), 1);
        for (r, got) in rx.iter().zip(&l.sources[0].ranges) {
            assert_eq!(*got, r.distance(&p));
        }

        let empty = EchoSet::from_ranges(vec![Vec::new(); 4]);
        let l = label_echoes(&empty, &rx, &ThresholdPolicy::default(), &serial()).unwrap();
        assert!(l.sources.is_empty());
        assert_eq!(l.feasible_count, 0);
    }

    #[test]
    fn parallel_matches_serial() {
        let rx = line_array(6, 0.7);
        let srcs: Vec<Point2D> = (0..7)
            .map(|i| Point2D::new(-1.0 + 0.37 * i as f64, -0.5 - 0.29 * i as f64))
            .collect();
        let echoes = echoes_for(&rx, &srcs);
        let a = label_echoes(&echoes, &rx, &ThresholdPolicy::default(), &serial()).unwrap();
        let b = label_echoes(&echoes, &rx, &ThresholdPolicy::default(), &PruneConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cardinality(), 7);
    }

    #[test]
    fn calibration_grows_with_noise() {
        let rx = line_array(6, 2e-3);
        let layers = LayerStack::new(vec![-4e-3, -8e-3]).unwrap();
        let cal = Calibration {
            trials: 300,
            ..Calibration::default()
        };
        assert_eq!(calibrate_tau(&rx, &layers, 0.0, &cal).unwrap(), NOISELESS_TAU);
        let small = calibrate_tau(&rx, &layers, 1e-6, &cal).unwrap();
        let large = calibrate_tau(&rx, &layers, 1e-5, &cal).unwrap();
        assert!(small > NOISELESS_TAU);
        assert!(large > small);
        assert_eq!(calibrate_tau(&rx, &layers, 1e-6, &cal).unwrap(), small);
    }
}
