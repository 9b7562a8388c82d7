//! Maximum independent set by maximal-clique search on the complement graph.
//!
//! The graph is split into connected components first; the maximum
//! independent set of the whole graph is the union of the per-component
//! optima. Inside a component a branch and bound search grows cliques of the
//! complement. The candidates are covered by cliques of the original graph
//! (from caller-supplied partitions, or a greedy colouring); the size of the
//! smallest cover bounds how far the set can still grow, and when only a tie
//! in size is reachable, the cheapest vertex of each clique bounds the score.
//! The search branches on the smallest clique of a smallest cover: take one
//! of its vertices (cheapest first), or none. Whenever the remaining
//! candidates fall apart into disconnected pieces, each piece is solved on
//! its own.

use fixedbitset::FixedBitSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MisError {
    #[error("independent set search exceeded its budget after {explored} nodes")]
    BudgetExceeded { explored: u64 },
    #[error("score vector has {got} entries for {expected} nodes")]
    ScoreMismatch { expected: usize, got: usize },
    #[error("clique partition {partition} is invalid: {reason}")]
    BadPartition { partition: usize, reason: &'static str },
}

/// Simple undirected graph stored as adjacency bitsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<FixedBitSet>,
}

impl Graph {
    pub fn new(nodes: usize) -> Self {
        Self {
            adjacency: vec![FixedBitSet::with_capacity(nodes); nodes],
        }
    }

    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::new(nodes);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    /// Adds the edge `{a, b}`. Self loops are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        self.adjacency[a].insert(b);
        self.adjacency[b].insert(a);
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|a| a.count_ones(..)).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(b)
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].ones()
    }

    pub fn is_independent(&self, set: &[usize]) -> bool {
        set.iter()
            .enumerate()
            .all(|(i, &a)| set[i + 1..].iter().all(|&b| !self.has_edge(a, b)))
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut seen = FixedBitSet::with_capacity(n);
        let mut out = Vec::new();
        for start in 0..n {
            if seen.contains(start) {
                continue;
            }
            seen.insert(start);
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(v) = stack.pop() {
                comp.push(v);
                for w in self.adjacency[v].ones() {
                    if !seen.contains(w) {
                        seen.insert(w);
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Candidate ordering: larger sets first, then smaller total score, then
/// lexicographically smaller node lists.
#[derive(Debug, Clone)]
struct Best {
    nodes: Vec<usize>,
    score: f64,
}

fn canonical_score(nodes: &[usize], scores: &[f64]) -> f64 {
    let mut s: Vec<f64> = nodes.iter().map(|&v| scores[v]).collect();
    s.sort_by(f64::total_cmp);
    s.iter().sum()
}

fn better(candidate: &[usize], score: f64, best: &Option<Best>) -> bool {
    match best {
        None => true,
        Some(b) => {
            if candidate.len() != b.nodes.len() {
                return candidate.len() > b.nodes.len();
            }
            match score.total_cmp(&b.score) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => candidate < b.nodes.as_slice(),
            }
        }
    }
}

struct CliqueSearch<'a> {
    /// Complement adjacency over local indices.
    adjacency: Vec<FixedBitSet>,
    /// Original adjacency over local indices.
    conflicts: Vec<FixedBitSet>,
    scores: &'a [f64],
    /// `partitions[p][v]`: class of `v` in clique partition `p`.
    partitions: Vec<Vec<usize>>,
    class_counts: Vec<usize>,
    explored: u64,
    budget: u64,
}

impl CliqueSearch<'_> {
    fn size(&self) -> usize {
        self.adjacency.len()
    }

    /// Connected pieces of the original graph restricted to `candidates`.
    fn pieces(&self, candidates: &FixedBitSet) -> Vec<FixedBitSet> {
        let mut left = candidates.clone();
        let mut out = Vec::new();
        while let Some(start) = left.minimum() {
            let mut piece = FixedBitSet::with_capacity(self.size());
            let mut frontier = vec![start];
            piece.insert(start);
            left.set(start, false);
            while let Some(v) = frontier.pop() {
                let mut reach = self.conflicts[v].clone();
                reach.intersect_with(&left);
                for u in reach.ones() {
                    left.set(u, false);
                    piece.insert(u);
                    frontier.push(u);
                }
            }
            out.push(piece);
        }
        out
    }

    /// Clique covers of `candidates` in the original graph: one per known
    /// partition, or a greedy colouring without them. An independent set
    /// holds at most one vertex of each clique.
    fn covers(&self, candidates: &FixedBitSet) -> Vec<Vec<Vec<usize>>> {
        if self.partitions.is_empty() {
            let mut classes: Vec<(FixedBitSet, Vec<usize>)> = Vec::new();
            for v in candidates.ones() {
                match classes.iter_mut().find(|c| c.0.is_disjoint(&self.adjacency[v])) {
                    Some(c) => {
                        c.0.insert(v);
                        c.1.push(v);
                    }
                    None => {
                        let mut bits = FixedBitSet::with_capacity(self.size());
                        bits.insert(v);
                        classes.push((bits, vec![v]));
                    }
                }
            }
            return vec![classes.into_iter().map(|c| c.1).collect()];
        }
        self.partitions
            .iter()
            .zip(&self.class_counts)
            .map(|(part, &count)| {
                let mut slot = vec![usize::MAX; count];
                let mut groups: Vec<Vec<usize>> = Vec::new();
                for v in candidates.ones() {
                    let c = part[v];
                    if slot[c] == usize::MAX {
                        slot[c] = groups.len();
                        groups.push(Vec::new());
                    }
                    groups[slot[c]].push(v);
                }
                groups
            })
            .collect()
    }

    /// True if `chosen` plus at most one vertex per clique of every cover
    /// cannot beat `incumbent`.
    fn hopeless(&self, incumbent: &Option<Best>, chosen: &[usize], score: f64, covers: &[Vec<Vec<usize>>]) -> bool {
        let Some(best) = incumbent else { return false };
        let bound = covers.iter().map(Vec::len).min().unwrap_or(0);
        let reach = chosen.len() + bound;
        if reach != best.nodes.len() {
            return reach < best.nodes.len();
        }
        let need = bound;
        let mut lower = 0.0f64;
        for groups in covers {
            let mut cheapest: Vec<f64> = groups
                .iter()
                .map(|g| g.iter().map(|&v| self.scores[v]).fold(f64::INFINITY, f64::min))
                .collect();
            cheapest.sort_by(f64::total_cmp);
            lower = lower.max(cheapest[..need].iter().sum::<f64>());
        }
        // sums are compared with some room for rounding
        score + lower > best.score + 1e-9 * best.score.abs()
    }

    fn offer(&self, incumbent: &mut Option<Best>, chosen: &[usize]) {
        let mut nodes = chosen.to_vec();
        nodes.sort_unstable();
        let score = canonical_score(&nodes, self.scores);
        if better(&nodes, score, incumbent) {
            *incumbent = Some(Best { nodes, score });
        }
    }

    /// Best independent set inside `candidates`.
    fn solve(&mut self, candidates: FixedBitSet) -> Result<Best, MisError> {
        let mut incumbent = None;
        self.branch(&mut Vec::new(), 0.0, candidates, &mut incumbent)?;
        Ok(incumbent.unwrap_or(Best {
            nodes: Vec::new(),
            score: 0.0,
        }))
    }

    /// Extends `chosen` by vertices of `candidates`. Disconnected candidate
    /// sets are solved piece by piece; otherwise the search branches on the
    /// smallest covering clique: each of its vertices, then none.
    fn branch(
        &mut self,
        chosen: &mut Vec<usize>,
        score: f64,
        candidates: FixedBitSet,
        incumbent: &mut Option<Best>,
    ) -> Result<(), MisError> {
        self.explored += 1;
        if self.explored > self.budget {
            return Err(MisError::BudgetExceeded {
                explored: self.explored,
            });
        }
        if candidates.is_clear() {
            self.offer(incumbent, chosen);
            return Ok(());
        }
        let covers = self.covers(&candidates);
        if self.hopeless(incumbent, chosen, score, &covers) {
            return Ok(());
        }
        let pieces = self.pieces(&candidates);
        if pieces.len() > 1 {
            let mut all = chosen.clone();
            for piece in pieces {
                all.extend(self.solve(piece)?.nodes);
            }
            self.offer(incumbent, &all);
            return Ok(());
        }
        // Reaching the bound needs a vertex from every clique of the
        // smallest covers; branch on the smallest such clique.
        let bound = covers.iter().map(Vec::len).min().expect("at least one cover");
        let mut group = covers
            .iter()
            .filter(|c| c.len() == bound)
            .flatten()
            .min_by_key(|g| g.len())
            .expect("candidates non-empty")
            .clone();
        group.sort_by(|&a, &b| self.scores[a].total_cmp(&self.scores[b]).then(a.cmp(&b)));
        for &v in &group {
            let mut next = candidates.clone();
            next.intersect_with(&self.adjacency[v]);
            chosen.push(v);
            self.branch(chosen, score + self.scores[v], next, incumbent)?;
            chosen.pop();
        }
        let mut rest = candidates;
        for &v in &group {
            rest.set(v, false);
        }
        self.branch(chosen, score, rest, incumbent)
    }
}

/// Outcome of [`maximum_independent_set`].
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentSet {
    /// Sorted node indices.
    pub nodes: Vec<usize>,
    /// Search nodes visited.
    pub explored: u64,
}

/// Maximum-cardinality independent set of `graph`. Ties go to the smaller
/// total `scores`, then to the lexicographically smaller node list.
pub fn maximum_independent_set(graph: &Graph, scores: &[f64], budget: u64) -> Result<IndependentSet, MisError> {
    maximum_independent_set_with_partitions(graph, scores, &[], budget)
}

/// [`maximum_independent_set`] with known clique partitions of the graph:
/// `partitions[p][v]` names the class of node `v`, and nodes sharing a
/// class must be adjacent. They sharpen the search bound; the result is the
/// same.
pub fn maximum_independent_set_with_partitions(
    graph: &Graph,
    scores: &[f64],
    partitions: &[Vec<usize>],
    budget: u64,
) -> Result<IndependentSet, MisError> {
    let n = graph.node_count();
    if scores.len() != n {
        return Err(MisError::ScoreMismatch {
            expected: n,
            got: scores.len(),
        });
    }
    for (p, part) in partitions.iter().enumerate() {
        if part.len() != n {
            return Err(MisError::BadPartition {
                partition: p,
                reason: "length differs from the node count",
            });
        }
        for a in 0..n {
            for b in a + 1..n {
                if part[a] == part[b] && !graph.has_edge(a, b) {
                    return Err(MisError::BadPartition {
                        partition: p,
                        reason: "a class contains two non-adjacent nodes",
                    });
                }
            }
        }
    }
    let mut nodes = Vec::new();
    let mut explored = 0;
    for comp in graph.components() {
        if comp.len() == 1 {
            nodes.push(comp[0]);
            continue;
        }
        let m = comp.len();
        let local_scores: Vec<f64> = comp.iter().map(|&v| scores[v]).collect();
        let conflicts: Vec<FixedBitSet> = comp
            .iter()
            .map(|&a| {
                let mut row = FixedBitSet::with_capacity(m);
                for (j, &b) in comp.iter().enumerate() {
                    if graph.has_edge(a, b) {
                        row.insert(j);
                    }
                }
                row
            })
            .collect();
        let adjacency = conflicts
            .iter()
            .enumerate()
            .map(|(j, row)| {
                let mut inverse = row.clone();
                inverse.toggle_range(..);
                inverse.set(j, false);
                inverse
            })
            .collect();
        let mut local_partitions = Vec::with_capacity(partitions.len());
        let mut class_counts = Vec::with_capacity(partitions.len());
        for part in partitions {
            let mut ids = std::collections::HashMap::new();
            let local: Vec<usize> = comp
                .iter()
                .map(|&v| {
                    let next = ids.len();
                    *ids.entry(part[v]).or_insert(next)
                })
                .collect();
            class_counts.push(ids.len());
            local_partitions.push(local);
        }
        let mut search = CliqueSearch {
            adjacency,
            conflicts,
            scores: &local_scores,
            partitions: local_partitions,
            class_counts,
            explored: 0,
            budget: budget.saturating_sub(explored),
        };
        let mut all = FixedBitSet::with_capacity(m);
        all.insert_range(..);
        let result = search.solve(all);
        explored += search.explored;
        let best = match result {
            Ok(best) => best,
            Err(_) => return Err(MisError::BudgetExceeded { explored }),
        };
        nodes.extend(best.nodes.iter().map(|&j| comp[j]));
    }
    nodes.sort_unstable();
    Ok(IndependentSet { nodes, explored })
}
