//! Prescribed sets `H`, their closed `delta`-neighbourhoods, and samplers.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{NormKind, Vector};
use crate::numerics::golden_min;

pub type Predicate = Arc<dyn Fn(&Vector) -> bool + Send + Sync>;
pub type Distance = Arc<dyn Fn(&Vector, NormKind) -> f64 + Send + Sync>;
pub type Sampler = Arc<dyn Fn(&mut ChaCha8Rng) -> Vector + Send + Sync>;

/// User-defined region: membership, distance to the set and a sampler of
/// points of the set itself.
#[derive(Clone)]
pub struct CustomRegion {
    pub dim: usize,
    pub contains: Predicate,
    pub distance: Distance,
    pub sampler: Sampler,
    pub description: String,
}

#[derive(Clone)]
pub enum Shape {
    Ball {
        center: Vector,
        radius: f64,
    },
    Box {
        lower: Vector,
        upper: Vector,
    },
    /// Product of half-lines `[a_i, inf)`.
    HalfLine {
        lower: Vector,
    },
    /// `{S >= 0, I >= 0, S + I <= 1 - c}` in the plane.
    SimplexGamma {
        c: f64,
    },
    Custom(CustomRegion),
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl Shape {
    pub fn describe(&self) -> String {
        match self {
            Shape::Ball { center, radius } => {
                format!("ball(center={:?}, radius={radius})", center.as_slice())
            }
            Shape::Box { lower, upper } => {
                format!("box(lower={:?}, upper={:?})", lower.as_slice(), upper.as_slice())
            }
            Shape::HalfLine { lower } => format!("halfline(lower={:?})", lower.as_slice()),
            Shape::SimplexGamma { c } => format!("simplex_gamma(c={c})"),
            Shape::Custom(c) => format!("custom({})", c.description),
        }
    }
}

/// The set `H` together with the neighbourhood radius `delta` and the norm
/// in which distances are measured.
#[derive(Debug, Clone)]
pub struct Region {
    pub shape: Shape,
    pub delta: f64,
    pub norm: NormKind,
    /// Sampling extent along unbounded directions.
    pub extent: f64,
}

/// Plain description of a region, used in reports and configs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegionInfo {
    pub shape: String,
    pub delta: f64,
    pub norm: NormKind,
}

const DEFAULT_EXTENT: f64 = 10.0;

impl Region {
    pub fn new(shape: Shape, delta: f64, norm: NormKind) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::Argument(format!("delta must be finite and >= 0, got {delta}")));
        }
        match &shape {
            Shape::Ball { radius, .. } if !(*radius >= 0.0) => {
                return Err(Error::Argument("ball radius must be >= 0".into()))
            }
            Shape::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::Dimension("box bounds differ in length".into()));
                }
                if lower.iter().zip(upper.iter()).any(|(a, b)| a > b) {
                    return Err(Error::Argument("box lower bound exceeds upper bound".into()));
                }
            }
            Shape::SimplexGamma { c } if !(0.0..1.0).contains(c) => {
                return Err(Error::Argument(format!(
                    "simplex parameter c must lie in [0, 1), got {c}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            shape,
            delta,
            norm,
            extent: DEFAULT_EXTENT,
        })
    }

    pub fn ball(center: Vector, radius: f64, delta: f64, norm: NormKind) -> Result<Self> {
        Self::new(Shape::Ball { center, radius }, delta, norm)
    }

    pub fn half_line(lower: Vector, delta: f64, norm: NormKind) -> Result<Self> {
        Self::new(Shape::HalfLine { lower }, delta, norm)
    }

    pub fn simplex_gamma(c: f64, delta: f64, norm: NormKind) -> Result<Self> {
        Self::new(Shape::SimplexGamma { c }, delta, norm)
    }

    /// The whole space, modelled as a ball of infinite radius.
    pub fn whole_space(dim: usize, norm: NormKind) -> Self {
        Self {
            shape: Shape::Ball {
                center: Vector::zeros(dim),
                radius: f64::INFINITY,
            },
            delta: 0.0,
            norm,
            extent: DEFAULT_EXTENT,
        }
    }

    pub fn with_extent(mut self, extent: f64) -> Self {
        self.extent = extent;
        self
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        let mut r = self.clone();
        r.delta = delta;
        r
    }

    pub fn info(&self) -> RegionInfo {
        RegionInfo {
            shape: self.shape.describe(),
            delta: self.delta,
            norm: self.norm,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Ball { center, .. } => center.len(),
            Shape::Box { lower, .. } => lower.len(),
            Shape::HalfLine { lower } => lower.len(),
            Shape::SimplexGamma { .. } => 2,
            Shape::Custom(c) => c.dim,
        }
    }

    /// Membership in `H`.
    pub fn contains(&self, x: &Vector) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match &self.shape {
            Shape::Ball { center, radius } => radius.is_infinite() || self.norm.vector_norm(&(x - center)) <= *radius,
            Shape::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(v, (a, b))| *a <= *v && *v <= *b),
            Shape::HalfLine { lower } => x.iter().zip(lower.iter()).all(|(v, a)| *a <= *v),
            Shape::SimplexGamma { c } => x[0] >= 0.0 && x[1] >= 0.0 && x[0] + x[1] <= 1.0 - c,
            Shape::Custom(c) => (c.contains)(x),
        }
    }

    /// Distance from `x` to `H` in the region's norm.
    pub fn distance(&self, x: &Vector) -> f64 {
        let k = self.norm;
        match &self.shape {
            Shape::Ball { center, radius } => {
                if radius.is_infinite() {
                    0.0
                } else {
                    (k.vector_norm(&(x - center)) - radius).max(0.0)
                }
            }
            // The coordinatewise clamp is a nearest point for all three norms.
            Shape::Box { lower, upper } => {
                let d = Vector::from_iterator(
                    x.len(),
                    x.iter()
                        .zip(lower.iter().zip(upper.iter()))
                        .map(|(v, (a, b))| v - v.clamp(*a, *b)),
                );
                k.vector_norm(&d)
            }
            Shape::HalfLine { lower } => {
                let d = Vector::from_iterator(x.len(), x.iter().zip(lower.iter()).map(|(v, a)| (a - v).max(0.0)));
                k.vector_norm(&d)
            }
            Shape::SimplexGamma { c } => {
                if self.contains(x) {
                    return 0.0;
                }
                let top = 1.0 - c;
                let verts = [
                    Vector::from_vec(vec![0.0, 0.0]),
                    Vector::from_vec(vec![top, 0.0]),
                    Vector::from_vec(vec![0.0, top]),
                ];
                (0..3)
                    .map(|i| segment_distance(x, &verts[i], &verts[(i + 1) % 3], k))
                    .fold(f64::INFINITY, f64::min)
            }
            Shape::Custom(c) => (c.distance)(x, k),
        }
    }

    /// Membership in the closed neighbourhood `N_delta(H)`.
    pub fn in_neighborhood(&self, x: &Vector) -> bool {
        x.len() == self.dim() && self.distance(x) <= self.delta * (1.0 + 1e-12)
    }

    /// Deterministic extreme points of `N_delta(H)` that maximise typical
    /// monotone quantities (axis extremes of balls, pushed-out box faces).
    pub fn extreme_points(&self) -> Vec<Vector> {
        let n = self.dim();
        let d = self.delta;
        let mut pts = Vec::new();
        match &self.shape {
            Shape::Ball { center, radius } if radius.is_finite() => {
                for i in 0..n {
                    for sgn in [-1.0, 1.0] {
                        let mut p = center.clone();
                        p[i] += sgn * (radius + d);
                        pts.push(p);
                    }
                }
            }
            Shape::Box { lower, upper } => {
                for i in 0..n {
                    let mut lo = lower.clone();
                    lo[i] -= d;
                    pts.push(lo);
                    let mut hi = upper.clone();
                    hi[i] += d;
                    pts.push(hi);
                }
            }
            Shape::HalfLine { lower } => {
                for i in 0..n {
                    let mut lo = lower.clone();
                    lo[i] -= d;
                    pts.push(lo);
                }
            }
            Shape::SimplexGamma { c } => {
                let top = 1.0 - c;
                pts.push(Vector::from_vec(vec![0.0, 0.0]));
                pts.push(Vector::from_vec(vec![top, 0.0]));
                pts.push(Vector::from_vec(vec![0.0, top]));
            }
            _ => {}
        }
        pts.retain(|p| self.in_neighborhood(p));
        pts
    }

    fn bounding_box(&self) -> Option<(Vector, Vector)> {
        let d = self.delta;
        let e = self.extent;
        match &self.shape {
            Shape::Ball { center, radius } => {
                let r = if radius.is_finite() { radius + d } else { e };
                Some((center.add_scalar(-r), center.add_scalar(r)))
            }
            Shape::Box { lower, upper } => Some((lower.add_scalar(-d), upper.add_scalar(d))),
            Shape::HalfLine { lower } => Some((lower.add_scalar(-d), lower.add_scalar(e))),
            Shape::SimplexGamma { c } => Some((
                Vector::from_vec(vec![-d, -d]),
                Vector::from_vec(vec![1.0 - c + d, 1.0 - c + d]),
            )),
            Shape::Custom(_) => None,
        }
    }

    /// A random point of `N_delta(H)`.
    pub fn sample_neighborhood(&self, rng: &mut ChaCha8Rng) -> Vector {
        if let Some((lo, hi)) = self.bounding_box() {
            loop {
                let p = Vector::from_iterator(
                    lo.len(),
                    lo.iter()
                        .zip(hi.iter())
                        .map(|(a, b)| if a == b { *a } else { rng.gen_range(*a..=*b) }),
                );
                if self.in_neighborhood(&p) {
                    return p;
                }
            }
        }
        let Shape::Custom(c) = &self.shape else {
            unreachable!("only custom regions lack a bounding box")
        };
        let base = (c.sampler)(rng);
        let dir = Vector::from_iterator(c.dim, (0..c.dim).map(|_| rng.gen_range(-1.0..=1.0)));
        let len = self.norm.vector_norm(&dir);
        if len == 0.0 || self.delta == 0.0 {
            return base;
        }
        let r = self.delta * rng.gen::<f64>();
        base + dir * (r / len)
    }

    /// A random point of `conv(N_delta(H))`.
    pub fn sample_hull(&self, rng: &mut ChaCha8Rng) -> Vector {
        match &self.shape {
            Shape::SimplexGamma { .. } | Shape::Custom(_) => {
                let a = self.sample_neighborhood(rng);
                let b = self.sample_neighborhood(rng);
                let w: f64 = rng.gen();
                a * w + b * (1.0 - w)
            }
            _ => self.sample_neighborhood(rng),
        }
    }
}

fn segment_distance(x: &Vector, p: &Vector, q: &Vector, k: NormKind) -> f64 {
    let dist = |th: f64| k.vector_norm(&(x - (p + (q - p) * th)));
    let (_, best) = golden_min(dist, 0.0, 1.0, 1e-12);
    best.min(dist(0.0)).min(dist(1.0))
}
