//! Planar geometry of the inspection setup.
//!
//! Receivers and the emitter sit on the line `y = 0`; the material occupies
//! `y < 0` and is cut into horizontal layers by boundaries at fixed depths.
//! Multi-bounce echoes are modelled by image sources: mirror copies of a
//! defect across the boundaries beneath it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ambient dimension of the problem. Distance matrices of points in this
/// dimension have rank at most `DIM + 2`.
pub const DIM: usize = 2;

/// Positions closer than this are considered the same image source.
pub const DEDUP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("layer stack needs at least one boundary")]
    NoBoundaries,
    #[error("layer boundaries must be negative and strictly decreasing (boundary {index} = {value})")]
    BadBoundary { index: usize, value: f64 },
    #[error("defect `{id}` at ({x}, {y}) is not inside the material")]
    DefectOutside { id: String, x: f64, y: f64 },
    #[error("need at least 4 receivers, got {0}")]
    TooFewReceivers(usize),
    #[error("receivers {0} and {1} coincide")]
    DuplicateReceiver(usize, usize),
    #[error("{what} must lie on y = 0 (got y = {y})")]
    OffReceiverPlane { what: &'static str, y: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// A point in the inspection plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        squared_distance(self, other).sqrt()
    }
}

impl From<[f64; 2]> for Point2D {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point2D> for [f64; 2] {
    fn from(p: Point2D) -> Self {
        [p.x, p.y]
    }
}

/// `‖p − q‖²`.
pub fn squared_distance(p: &Point2D, q: &Point2D) -> f64 {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    dx * dx + dy * dy
}

/// Reflects `p` across the horizontal line `y = boundary_y`.
pub fn mirror_across_boundary(p: Point2D, boundary_y: f64) -> Point2D {
    Point2D::new(p.x, 2.0 * boundary_y - p.y)
}

/// Horizontal boundaries below the top surface, ordered from shallow to deep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LayerStack {
    boundaries: Vec<f64>,
}

impl LayerStack {
    pub fn new(boundaries: Vec<f64>) -> Result<Self, GeometryError> {
        if boundaries.is_empty() {
            return Err(GeometryError::NoBoundaries);
        }
        let mut above = 0.0;
        for (index, &value) in boundaries.iter().enumerate() {
            if !value.is_finite() || value >= above {
                return Err(GeometryError::BadBoundary { index, value });
            }
            above = value;
        }
        Ok(Self { boundaries })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    /// Depth of the deepest boundary (a negative number).
    pub fn bottom(&self) -> f64 {
        *self.boundaries.last().expect("layer stack is never empty")
    }

    /// Total material thickness, `|bottom|`.
    pub fn thickness(&self) -> f64 {
        -self.bottom()
    }

    /// Whether `p` lies strictly between the top surface and the bottom boundary.
    pub fn contains(&self, p: &Point2D) -> bool {
        p.y < 0.0 && p.y > self.bottom()
    }

    /// Index of the layer containing depth `y` (0 is the top layer).
    pub fn layer_of(&self, y: f64) -> Option<usize> {
        if y >= 0.0 || y <= self.bottom() {
            return None;
        }
        self.boundaries.iter().position(|&b| y > b)
    }
}

impl TryFrom<Vec<f64>> for LayerStack {
    type Error = GeometryError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<LayerStack> for Vec<f64> {
    fn from(stack: LayerStack) -> Self {
        stack.boundaries
    }
}

/// A point defect inside the material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defect {
    pub id: String,
    pub position: Point2D,
}

impl Defect {
    pub fn new(id: impl Into<String>, position: Point2D) -> Self {
        Self {
            id: id.into(),
            position,
        }
    }
}

/// A virtual source obtained by mirroring a defect across one or more boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSource {
    pub position: Point2D,
    pub parent: String,
    /// Boundary indices, in the order the mirrors were applied.
    pub lineage: Vec<usize>,
}

/// Applies the mirrors of `lineage` to `p`, first to last.
pub fn apply_lineage(p: Point2D, lineage: &[usize], layers: &LayerStack) -> Point2D {
    lineage
        .iter()
        .fold(p, |q, &b| mirror_across_boundary(q, layers.boundaries()[b]))
}

/// Undoes `lineage`: applies its mirrors last to first.
pub fn unapply_lineage(p: Point2D, lineage: &[usize], layers: &LayerStack) -> Point2D {
    lineage
        .iter()
        .rev()
        .fold(p, |q, &b| mirror_across_boundary(q, layers.boundaries()[b]))
}

/// Every mirror sequence of length `1..=max_order` that reflects `origin`
/// across a boundary strictly below the current point at each step, paired
/// with the resulting position. Duplicates (within [`DEDUP_TOLERANCE`]) keep
/// the first, shortest lineage. Ordered by mirror count, then lexicographically
/// by lineage.
pub fn mirror_images(origin: Point2D, layers: &LayerStack, max_order: usize) -> Vec<(Point2D, Vec<usize>)> {
    let mut out: Vec<(Point2D, Vec<usize>)> = Vec::new();
    let mut frontier: Vec<(Point2D, Vec<usize>)> = vec![(origin, Vec::new())];
    for _ in 0..max_order {
        let mut next = Vec::new();
        for (p, lineage) in &frontier {
            for (index, &b) in layers.boundaries().iter().enumerate() {
                if b >= p.y {
                    continue;
                }
                let q = mirror_across_boundary(*p, b);
                let mut l = lineage.clone();
                l.push(index);
                next.push((q, l));
            }
        }
        for (q, l) in &next {
            let dup = out
                .iter()
                .any(|(r, _)| squared_distance(q, r).sqrt() <= DEDUP_TOLERANCE);
            if !dup {
                out.push((*q, l.clone()));
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    out
}

/// Image sources of `defect` reachable with up to `max_mirror_order` mirrors.
pub fn generate_image_sources(defect: &Defect, layers: &LayerStack, max_mirror_order: usize) -> Vec<ImageSource> {
    mirror_images(defect.position, layers, max_mirror_order)
        .into_iter()
        .map(|(position, lineage)| ImageSource {
            position,
            parent: defect.id.clone(),
            lineage,
        })
        .collect()
}

/// Complete description of one simulated acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub receivers: Vec<Point2D>,
    pub emitter: Point2D,
    pub layers: LayerStack,
    pub defects: Vec<Defect>,
    /// Standard deviation of the additive range noise, meters.
    pub noise_sigma: f64,
    /// Propagation speed, meters per second.
    pub speed: f64,
    pub max_mirror_order: usize,
    /// Inject boundary specular echoes that belong to no source.
    pub clutter: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.receivers.len() < 4 {
            return Err(GeometryError::TooFewReceivers(self.receivers.len()));
        }
        for r in &self.receivers {
            if !r.is_finite() {
                return Err(GeometryError::NonFinite("receiver"));
            }
            if r.y != 0.0 {
                return Err(GeometryError::OffReceiverPlane {
                    what: "receiver",
                    y: r.y,
                });
            }
        }
        for i in 0..self.receivers.len() {
            for j in i + 1..self.receivers.len() {
                if self.receivers[i] == self.receivers[j] {
                    return Err(GeometryError::DuplicateReceiver(i, j));
                }
            }
        }
        if !self.emitter.is_finite() {
            return Err(GeometryError::NonFinite("emitter"));
        }
        if self.emitter.y != 0.0 {
            return Err(GeometryError::OffReceiverPlane {
                what: "emitter",
                y: self.emitter.y,
            });
        }
        for d in &self.defects {
            if !d.position.is_finite() {
                return Err(GeometryError::NonFinite("defect"));
            }
            if !self.layers.contains(&d.position) {
                return Err(GeometryError::DefectOutside {
                    id: d.id.clone(),
                    x: d.position.x,
                    y: d.position.y,
                });
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(GeometryError::InvalidParameter("noise_sigma must be finite and >= 0"));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(GeometryError::InvalidParameter("speed must be finite and > 0"));
        }
        Ok(())
    }
}
