//! Acquisition model: turns a [`Scenario`] into per-receiver, unlabeled,
//! noisy range lists.
//!
//! Every source (defect or image) produces one echo at every receiver whose
//! range is the one-way source to receiver distance plus Gaussian noise. The
//! lists are sorted by arrival, so the association between echoes and
//! sources survives only in [`GroundTruth`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{generate_image_sources, GeometryError, Point2D, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("sources {first} and {second} are {distance:e} m apart, closer than {limit:e} m")]
    AmbiguousSources {
        first: usize,
        second: usize,
        distance: f64,
        limit: f64,
    },
    #[error("noisy range at receiver {receiver} for source {echo_source} is not positive ({range:e} m)")]
    NonPositiveRange {
        receiver: usize,
        echo_source: usize,
        range: f64,
    },
    #[error("time of arrival must be finite and >= 0, got {0:e}")]
    NegativeToa(f64),
    #[error("range must be finite and >= 0, got {0:e}")]
    NegativeRange(f64),
    #[error("propagation speed must be finite and > 0, got {0:e}")]
    BadSpeed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Defect,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueSource {
    pub position: Point2D,
    pub kind: SourceKind,
    /// Id of the defect this source belongs to.
    pub parent: String,
    /// Index of that defect in the scenario.
    pub parent_index: usize,
    /// Mirrors applied to the defect (empty for the defect itself).
    pub lineage: Vec<usize>,
}

/// What the simulator knows and the labeling pipeline must recover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sources: Vec<TrueSource>,
    /// `per_receiver_assignment[i][k]` is the source of echo `k` at receiver
    /// `i`, or `None` for clutter.
    pub per_receiver_assignment: Vec<Vec<Option<usize>>>,
}

impl GroundTruth {
    /// Echo index of `source` at each receiver.
    pub fn echo_indices_of(&self, source: usize) -> Vec<usize> {
        self.per_receiver_assignment
            .iter()
            .map(|row| {
                row.iter()
                    .position(|s| *s == Some(source))
                    .expect("every source has one echo per receiver")
            })
            .collect()
    }
}

/// Unlabeled observations: one unordered range list per receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoSet {
    pub per_receiver_ranges: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_receiver_toas: Option<Vec<Vec<f64>>>,
}

impl EchoSet {
    pub fn from_ranges(per_receiver_ranges: Vec<Vec<f64>>) -> Self {
        Self {
            per_receiver_ranges,
            per_receiver_toas: None,
        }
    }

    /// Builds an echo set from arrival times.
    pub fn from_toas(per_receiver_toas: Vec<Vec<f64>>, speed: f64) -> Result<Self, SimulationError> {
        let ranges = per_receiver_toas
            .iter()
            .map(|row| row.iter().map(|&t| range_from_toa(t, speed)).collect())
            .collect::<Result<Vec<Vec<f64>>, _>>()?;
        Ok(Self {
            per_receiver_ranges: ranges,
            per_receiver_toas: Some(per_receiver_toas),
        })
    }

    pub fn receiver_count(&self) -> usize {
        self.per_receiver_ranges.len()
    }

    pub fn echo_counts(&self) -> Vec<usize> {
        self.per_receiver_ranges.iter().map(Vec::len).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.per_receiver_ranges.iter().all(Vec::is_empty)
    }
}

pub fn range_from_toa(toa: f64, speed: f64) -> Result<f64, SimulationError> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(SimulationError::BadSpeed(speed));
    }
    if !(toa >= 0.0 && toa.is_finite()) {
        return Err(SimulationError::NegativeToa(toa));
    }
    Ok(toa * speed)
}

pub fn toa_from_range(range: f64, speed: f64) -> Result<f64, SimulationError> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(SimulationError::BadSpeed(speed));
    }
    if !(range >= 0.0 && range.is_finite()) {
        return Err(SimulationError::NegativeRange(range));
    }
    Ok(range / speed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Reject scenarios whose sources are closer than
    /// `ambiguity_factor * noise_sigma` to each other.
    pub ambiguity_check: bool,
    pub ambiguity_factor: f64,
    /// Also fill `per_receiver_toas`.
    pub record_toas: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            ambiguity_check: true,
            ambiguity_factor: 10.0,
            record_toas: true,
        }
    }
}

/// All sources of a scenario: each defect followed by its image sources.
pub fn scenario_sources(scenario: &Scenario) -> Vec<TrueSource> {
    let mut sources = Vec::new();
    for (index, defect) in scenario.defects.iter().enumerate() {
        sources.push(TrueSource {
            position: defect.position,
            kind: SourceKind::Defect,
            parent: defect.id.clone(),
            parent_index: index,
            lineage: Vec::new(),
        });
        for img in generate_image_sources(defect, &scenario.layers, scenario.max_mirror_order) {
            sources.push(TrueSource {
                position: img.position,
                kind: SourceKind::Image,
                parent: img.parent,
                parent_index: index,
                lineage: img.lineage,
            });
        }
    }
    sources
}

pub fn simulate_echoes(scenario: &Scenario, seed: u64) -> Result<(EchoSet, GroundTruth), SimulationError> {
    simulate_echoes_with(scenario, seed, &SimulationOptions::default())
}

pub fn simulate_echoes_with(
    scenario: &Scenario,
    seed: u64,
    options: &SimulationOptions,
) -> Result<(EchoSet, GroundTruth), SimulationError> {
    scenario.validate()?;
    let sources = scenario_sources(scenario);

    if options.ambiguity_check && scenario.noise_sigma > 0.0 {
        let limit = options.ambiguity_factor * scenario.noise_sigma;
        for a in 0..sources.len() {
            for b in a + 1..sources.len() {
                let distance = sources[a].position.distance(&sources[b].position);
                if distance < limit {
                    return Err(SimulationError::AmbiguousSources {
                        first: a,
                        second: b,
                        distance,
                        limit,
                    });
                }
            }
        }
    }

    let clutter: Vec<f64> = if scenario.clutter {
        scenario.layers.boundaries().iter().map(|b| -2.0 * b).collect()
    } else {
        Vec::new()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = scenario.noise_sigma;
    let mut per_receiver_ranges = Vec::with_capacity(scenario.receivers.len());
    let mut per_receiver_assignment = Vec::with_capacity(scenario.receivers.len());
    for (i, receiver) in scenario.receivers.iter().enumerate() {
        let mut echoes: Vec<(f64, Option<usize>)> = Vec::with_capacity(sources.len() + clutter.len());
        for (s, source) in sources.iter().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let range = receiver.distance(&source.position) + sigma * noise;
            if range <= 0.0 {
                return Err(SimulationError::NonPositiveRange {
                    receiver: i,
                    echo_source: s,
                    range,
                });
            }
            echoes.push((range, Some(s)));
        }
        echoes.extend(clutter.iter().map(|&r| (r, None)));
        echoes.sort_by(|a, b| a.0.total_cmp(&b.0));
        per_receiver_ranges.push(echoes.iter().map(|e| e.0).collect::<Vec<_>>());
        per_receiver_assignment.push(echoes.iter().map(|e| e.1).collect::<Vec<_>>());
    }

    let per_receiver_toas = if options.record_toas {
        Some(
            per_receiver_ranges
                .iter()
                .map(|row| row.iter().map(|&r| r / scenario.speed).collect())
                .collect(),
        )
    } else {
        None
    };

    Ok((
        EchoSet {
            per_receiver_ranges,
            per_receiver_toas,
        },
        GroundTruth {
            sources,
            per_receiver_assignment,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Defect, LayerStack};

    fn scenario(defects: Vec<Defect>, sigma: f64, order: usize) -> Scenario {
        Scenario {
            receivers: (0..4).map(|i| Point2D::new(i as f64 - 1.5, 0.0)).collect(),
            emitter: Point2D::new(0.0, 0.0),
            layers: LayerStack::new(vec![-2.0, -4.0]).unwrap(),
            defects,
            noise_sigma: sigma,
            speed: 1.5e8,
            max_mirror_order: order,
            clutter: false,
        }
    }

    #[test]
    fn no_defects_no_echoes() {
        let (echoes, truth) = simulate_echoes(&scenario(vec![], 0.0, 2), 1).unwrap();
        assert_eq!(echoes.receiver_count(), 4);
        assert!(echoes.is_empty());
        assert!(truth.sources.is_empty());
    }

    #[test]
    fn single_direct_echo() {
        let s = scenario(vec![Defect::new("d", Point2D::new(0.0, -1.0))], 0.0, 0);
        let (echoes, truth) = simulate_echoes(&s, 7).unwrap();
        for (rx, row) in s.receivers.iter().zip(&echoes.per_receiver_ranges) {
            assert_eq!(row.len(), 1);
            assert!((row[0] - rx.distance(&Point2D::new(0.0, -1.0))).abs() <= 1e-12);
        }
        assert_eq!(truth.per_receiver_assignment, vec![vec![Some(0)]; 4]);
    }

    #[test]
    fn clutter_is_not_a_source() {
        let mut s = scenario(vec![Defect::new("d", Point2D::new(0.0, -1.0))], 0.0, 1);
        s.clutter = true;
        let (echoes, truth) = simulate_echoes(&s, 3).unwrap();
        assert_eq!(truth.sources.len(), 3);
        for (row, assign) in echoes.per_receiver_ranges.iter().zip(&truth.per_receiver_assignment) {
            assert_eq!(row.len(), 5);
            let clutter: Vec<f64> = row
                .iter()
                .zip(assign)
                .filter(|(_, a)| a.is_none())
                .map(|(r, _)| *r)
                .collect();
            assert_eq!(clutter, vec![4.0, 8.0]);
        }
    }

    #[test]
    fn ranges_sorted_and_consistent_with_truth() {
        let s = scenario(
            vec![
                Defect::new("a", Point2D::new(-1.0, -0.5)),
                Defect::new("b", Point2D::new(1.0, -3.0)),
            ],
            0.0,
            2,
        );
        let (echoes, truth) = simulate_echoes(&s, 0).unwrap();
        for (i, row) in echoes.per_receiver_ranges.iter().enumerate() {
            assert!(row.windows(2).all(|w| w[0] <= w[1]));
            for (k, r) in row.iter().enumerate() {
                let src = truth.per_receiver_assignment[i][k].unwrap();
                let exact = s.receivers[i].distance(&truth.sources[src].position);
                assert!((r - exact).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_echoes() {
        let s = scenario(vec![Defect::new("a", Point2D::new(0.2, -1.1))], 1e-3, 2);
        let a = simulate_echoes(&s, 42).unwrap();
        let b = simulate_echoes(&s, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_echoes(&s, 43).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn ambiguity_is_reported_and_can_be_disabled() {
        let s = scenario(
            vec![
                Defect::new("a", Point2D::new(0.0, -1.0)),
                Defect::new("b", Point2D::new(0.0, -1.001)),
            ],
            1e-3,
            0,
        );
        assert!(matches!(
            simulate_echoes(&s, 0),
            Err(SimulationError::AmbiguousSources {
                first: 0,
                second: 1,
                ..
            })
        ));
        let opts = SimulationOptions {
            ambiguity_check: false,
            ..Default::default()
        };
        assert!(simulate_echoes_with(&s, 0, &opts).is_ok());
    }

    #[test]
    fn toa_conversions() {
        assert_eq!(range_from_toa(0.0, 3e8).unwrap(), 0.0);
        assert!((range_from_toa(1e-12, 3e8).unwrap() - 3e-4).abs() < 1e-18);
        assert!(matches!(
            range_from_toa(-1.0, 3e8),
            Err(SimulationError::NegativeToa(_))
        ));
        assert_eq!(toa_from_range(0.0, 3e8).unwrap(), 0.0);
        assert!((toa_from_range(3e-4, 3e8).unwrap() - 1e-12).abs() < 1e-24);
        assert!(matches!(
            toa_from_range(-1.0, 3e8),
            Err(SimulationError::NegativeRange(_))
        ));
        assert!(matches!(toa_from_range(1.0, 0.0), Err(SimulationError::BadSpeed(_))));
        for r in [1e-6, 0.0123, 4.56] {
            let back = range_from_toa(toa_from_range(r, 1.7e8).unwrap(), 1.7e8).unwrap();
            assert!((back - r).abs() <= 1e-15 * r);
        }
    }

    #[test]
    fn echo_set_from_toas() {
        let e = EchoSet::from_toas(vec![vec![1e-9, 2e-9]], 3e8).unwrap();
        assert!((e.per_receiver_ranges[0][1] - 0.6).abs() < 1e-12);
        assert!(EchoSet::from_toas(vec![vec![-1e-9]], 3e8).is_err());
    }
}
