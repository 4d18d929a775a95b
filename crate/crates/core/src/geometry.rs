//! Domains, the ε-boundary strip, the space-time lattice and ball stencils.
//!
//! Lattice nodes sit at integer multiples of the spacing `h` (the lattice is
//! anchored at the origin), covering the bounding box of Ω padded by `ε + h`
//! on every side. Time levels are `t_j = j·ε²/2`, with level 0 standing for
//! the initial slab `(−ε²/2, 0]`.

use std::fmt;
use std::ops::{Add, Index, Mul, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Relative tolerance used for open-ball membership.
pub const BALL_TOL: f64 = 1e-12;

/// Minimum ratio ε/h accepted by [`SpaceTimeLattice::new`].
pub const MIN_RESOLUTION: f64 = 4.0;

const MAX_NODES: usize = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension {0} is not supported (1..={MAX_DIM})")]
    Dimension(usize),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("stencil resolution ε/h = {ratio:.3} is below the floor {MIN_RESOLUTION}")]
    ResolutionTooCoarse { ratio: f64 },
    #[error("lattice spacing and step must be positive and finite (h = {h}, ε = {eps})")]
    InvalidSpacing { h: f64, eps: f64 },
    #[error("lattice would hold {0} nodes")]
    TooLarge(usize),
    #[error("stencil at node {node} has {count} members (need at least 3)")]
    StencilTooSmall { node: usize, count: usize },
    #[error("node {0} is not an interior node")]
    NotInterior(usize),
    #[error("no exterior sphere witness at {point}: {reason}")]
    NoWitness { point: Point, reason: String },
}

/// A point in R^n, n ≤ 3, stored inline.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Point {
    dim: usize,
    coords: [f64; MAX_DIM],
}

impl Point {
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&coords.len()),
            "point dimension {} out of range",
            coords.len()
        );
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Point {
            dim: coords.len(),
            coords: c,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Point {
            dim,
            coords: [0.0; MAX_DIM],
        }
    }

    /// Unit vector along `axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut p = Point::zeros(dim);
        p.coords[axis] = 1.0;
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coords[..self.dim]
    }

    pub fn dot(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (*self - *other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|c| c.is_finite())
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.as_slice().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.as_slice().to_vec()
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = GeometryError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        if !(1..=MAX_DIM).contains(&v.len()) {
            return Err(GeometryError::Dimension(v.len()));
        }
        Ok(Point::new(&v))
    }
}

impl Index<usize> for Point {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl Add for Point {
    type Output = Point;

    fn add(mut self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            self.coords[i] += rhs.coords[i];
        }
        self
    }
}

impl Sub for Point {
    type Output = Point;

    fn sub(mut self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            self.coords[i] -= rhs.coords[i];
        }
        self
    }
}

impl Mul<f64> for Point {
    type Output = Point;

    fn mul(mut self, s: f64) -> Point {
        for c in self.as_mut_slice() {
            *c *= s;
        }
        self
    }
}

/// Signed distance callback for generic domains (negative inside Ω).
pub type SignedDistanceFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DomainShape {
    /// Axis-aligned box `lo < x < hi`; in 1D an interval.
    Box { lo: Point, hi: Point },
    Ball { center: Point, radius: f64 },
    /// Spherical shell `inner < |x − center| < outer`.
    Annulus {
        center: Point,
        inner: f64,
        outer: f64,
    },
    /// User-supplied signed distance with an asserted exterior-sphere radius.
    Generic {
        signed_distance: SignedDistanceFn,
        lo: Point,
        hi: Point,
        delta: f64,
    },
}

impl fmt::Debug for DomainShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainShape::Box { lo, hi } => f.debug_struct("Box").field("lo", lo).field("hi", hi).finish(),
            DomainShape::Ball { center, radius } => f
                .debug_struct("Ball")
                .field("center", center)
                .field("radius", radius)
                .finish(),
            DomainShape::Annulus {
                center,
                inner,
                outer,
            } => f
                .debug_struct("Annulus")
                .field("center", center)
                .field("inner", inner)
                .field("outer", outer)
                .finish(),
            DomainShape::Generic { lo, hi, delta, .. } => f
                .debug_struct("Generic")
                .field("lo", lo)
                .field("hi", hi)
                .field("delta", delta)
                .finish_non_exhaustive(),
        }
    }
}

/// The spatial region Ω.
#[derive(Clone, Debug)]
pub struct Domain {
    shape: DomainShape,
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self, GeometryError> {
        Self::boxed(Point::new(&[a]), Point::new(&[b]))
    }

    pub fn boxed(lo: Point, hi: Point) -> Result<Self, GeometryError> {
        if lo.dim() != hi.dim() {
            return Err(GeometryError::InvalidDomain("box corners differ in dimension".into()));
        }
        if !lo.is_finite() || !hi.is_finite() || lo.as_slice().iter().zip(hi.as_slice()).any(|(a, b)| a >= b) {
            return Err(GeometryError::InvalidDomain(format!("empty box {lo}..{hi}")));
        }
        Ok(Domain {
            shape: DomainShape::Box { lo, hi },
        })
    }

    pub fn ball(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) || !center.is_finite() {
            return Err(GeometryError::InvalidDomain(format!("ball radius {radius}")));
        }
        Ok(Domain {
            shape: DomainShape::Ball { center, radius },
        })
    }

    pub fn annulus(center: Point, inner: f64, outer: f64) -> Result<Self, GeometryError> {
        if !(inner > 0.0 && outer > inner && outer.is_finite()) || !center.is_finite() {
            return Err(GeometryError::InvalidDomain(format!(
                "annulus radii must satisfy 0 < {inner} < {outer}"
            )));
        }
        Ok(Domain {
            shape: DomainShape::Annulus {
                center,
                inner,
                outer,
            },
        })
    }

    /// A domain given only through its signed distance. `lo..hi` must contain
    /// Ω and `delta` is the asserted exterior-sphere radius.
    pub fn generic(
        signed_distance: SignedDistanceFn,
        lo: Point,
        hi: Point,
        delta: f64,
    ) -> Result<Self, GeometryError> {
        if lo.dim() != hi.dim() || lo.as_slice().iter().zip(hi.as_slice()).any(|(a, b)| a >= b) {
            return Err(GeometryError::InvalidDomain("generic bounding box is empty".into()));
        }
        if !(delta > 0.0) {
            return Err(GeometryError::InvalidDomain(format!("asserted δ = {delta}")));
        }
        Ok(Domain {
            shape: DomainShape::Generic {
                signed_distance,
                lo,
                hi,
                delta,
            },
        })
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            DomainShape::Box { lo, .. } => lo.dim(),
            DomainShape::Ball { center, .. } | DomainShape::Annulus { center, .. } => center.dim(),
            DomainShape::Generic { lo, .. } => lo.dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.shape {
            DomainShape::Box { .. } if self.dim() == 1 => "interval",
            DomainShape::Box { .. } => "box",
            DomainShape::Ball { .. } => "ball",
            DomainShape::Annulus { .. } => "annulus",
            DomainShape::Generic { .. } => "generic",
        }
    }

    /// Signed distance to ∂Ω, negative inside.
    pub fn signed_distance(&self, x: &Point) -> f64 {
        match &self.shape {
            DomainShape::Box { lo, hi } => {
                let mut outside = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for i in 0..lo.dim() {
                    let c = 0.5 * (lo[i] + hi[i]);
                    let half = 0.5 * (hi[i] - lo[i]);
                    let q = (x[i] - c).abs() - half;
                    outside += q.max(0.0).powi(2);
                    inside = inside.max(q);
                }
                if outside > 0.0 {
                    outside.sqrt()
                } else {
                    inside
                }
            }
            DomainShape::Ball { center, radius } => x.dist(center) - radius,
            DomainShape::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = x.dist(center);
                (r - outer).max(inner - r)
            }
            DomainShape::Generic {
                signed_distance, ..
            } => signed_distance(x),
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Axis-aligned box containing Ω.
    pub fn bounding_box(&self) -> (Point, Point) {
        match &self.shape {
            DomainShape::Box { lo, hi } | DomainShape::Generic { lo, hi, .. } => (*lo, *hi),
            DomainShape::Ball {
                center,
                radius: r,
            }
            | DomainShape::Annulus {
                center, outer: r, ..
            } => {
                let mut lo = *center;
                let mut hi = *center;
                for c in lo.as_mut_slice() {
                    *c -= r;
                }
                for c in hi.as_mut_slice() {
                    *c += r;
                }
                (lo, hi)
            }
        }
    }

    /// Largest radius for which every boundary point admits a tangent
    /// exterior ball. Boxes and balls admit any radius.
    pub fn exterior_sphere_radius(&self) -> f64 {
        match &self.shape {
            DomainShape::Box { .. } | DomainShape::Ball { .. } => f64::INFINITY,
            DomainShape::Annulus { inner, .. } => *inner,
            DomainShape::Generic { delta, .. } => *delta,
        }
    }

    /// A center `z₀` and radius `R` with Ω ⊂ B_R(z₀).
    pub fn enclosing_ball(&self) -> (Point, f64) {
        match &self.shape {
            DomainShape::Ball { center, radius } => (*center, *radius),
            DomainShape::Annulus { center, outer, .. } => (*center, *outer),
            _ => {
                let (lo, hi) = self.bounding_box();
                let center = (lo + hi) * 0.5;
                (center, hi.dist(&center))
            }
        }
    }

    /// Outward unit normal at (or near) a boundary point.
    pub fn outward_normal(&self, y: &Point) -> Point {
        let n = self.dim();
        match &self.shape {
            DomainShape::Box { lo, hi } => {
                let mut best = 0;
                let mut best_q = f64::NEG_INFINITY;
                for i in 0..n {
                    let c = 0.5 * (lo[i] + hi[i]);
                    let q = (y[i] - c).abs() - 0.5 * (hi[i] - lo[i]);
                    if q > best_q {
                        best_q = q;
                        best = i;
                    }
                }
                let c = 0.5 * (lo[best] + hi[best]);
                Point::unit(n, best) * if y[best] >= c { 1.0 } else { -1.0 }
            }
            DomainShape::Ball { center, .. } => radial(y, center),
            DomainShape::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = y.dist(center);
                let out = radial(y, center);
                if (r - outer).abs() <= (r - inner).abs() {
                    out
                } else {
                    out * -1.0
                }
            }
            DomainShape::Generic { .. } => {
                let step = 1e-6 * (1.0 + self.enclosing_ball().1);
                let mut g = Point::zeros(n);
                for i in 0..n {
                    let e = Point::unit(n, i) * step;
                    g.as_mut_slice()[i] =
                        (self.signed_distance(&(*y + e)) - self.signed_distance(&(*y - e))) / (2.0 * step);
                }
                let norm = g.norm();
                if norm > 0.0 {
                    g * (1.0 / norm)
                } else {
                    Point::unit(n, 0)
                }
            }
        }
    }

    /// Center `z` of an exterior ball `B_δ(z) ⊂ R^n ∖ Ω` tangent to ∂Ω at `y`.
    pub fn exterior_sphere_witness(&self, y: &Point, delta: f64) -> Result<Point, GeometryError> {
        let (_, radius) = self.enclosing_ball();
        let tol = 1e-8 * (1.0 + radius);
        let d = self.signed_distance(y);
        if d.abs() > tol {
            return Err(GeometryError::NoWitness {
                point: *y,
                reason: format!("point is at distance {d} from the boundary"),
            });
        }
        if !(delta > 0.0) || delta > self.exterior_sphere_radius() * (1.0 + 1e-12) {
            return Err(GeometryError::NoWitness {
                point: *y,
                reason: format!(
                    "δ = {delta} exceeds the admissible radius {}",
                    self.exterior_sphere_radius()
                ),
            });
        }
        let z = *y + self.outward_normal(y) * delta;
        if let DomainShape::Generic { .. } = self.shape {
            self.check_exterior_ball(&z, delta, tol)?;
        }
        Ok(z)
    }

    fn check_exterior_ball(&self, z: &Point, delta: f64, tol: f64) -> Result<(), GeometryError> {
        let dirs = sample_directions(self.dim());
        for step in 0..=40 {
            let frac = f64::from(step) / 40.0 * 0.999;
            for d in &dirs {
                let q = *z + *d * (frac * delta);
                let sd = self.signed_distance(&q);
                if sd < -tol {
                    return Err(GeometryError::NoWitness {
                        point: *z,
                        reason: format!("sample {q} of B_δ(z) lies inside Ω (distance {sd})"),
                    });
                }
            }
        }
        Ok(())
    }
}

fn radial(y: &Point, center: &Point) -> Point {
    let v = *y - *center;
    let r = v.norm();
    if r > 0.0 {
        v * (1.0 / r)
    } else {
        Point::unit(y.dim(), 0)
    }
}

/// Unit directions used to probe an asserted exterior ball: both signs in 1D,
/// 180 angles in 2D, a 400-point Fibonacci sphere in 3D.
fn sample_directions(n: usize) -> Vec<Point> {
    match n {
        1 => vec![Point::new(&[1.0]), Point::new(&[-1.0])],
        2 => (0..180)
            .map(|i| {
                let a = f64::from(i) * std::f64::consts::TAU / 180.0;
                Point::new(&[a.cos(), a.sin()])
            })
            .collect(),
        _ => {
            let count = 400;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let y = 1.0 - 2.0 * (f64::from(i) + 0.5) / f64::from(count);
                    let r = (1.0 - y * y).sqrt();
                    let a = golden * f64::from(i);
                    Point::new(&[r * a.cos(), y, r * a.sin()])
                })
                .collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeClass {
    Interior,
    LateralStrip,
    Exterior,
}

impl NodeClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeClass::Interior => "interior",
            NodeClass::LateralStrip => "strip",
            NodeClass::Exterior => "exterior",
        }
    }
}

/// Interior iff d < 0, lateral strip iff 0 ≤ d ≤ ε, exterior otherwise.
pub fn classify_node(domain: &Domain, x: &Point, eps: f64) -> NodeClass {
    let d = domain.signed_distance(x);
    if d < 0.0 {
        NodeClass::Interior
    } else if d <= eps {
        NodeClass::LateralStrip
    } else {
        NodeClass::Exterior
    }
}

/// Lattice offsets of a ball of radius ε, shared by every node.
///
/// `members` are the offsets strictly inside the open ball, `rim` the ones
/// lying on the sphere within the tolerance `BALL_TOL·ε`. Both are listed in
/// increasing node-id order.
#[derive(Clone, Debug)]
pub struct StencilTemplate {
    pub members: Vec<[i64; MAX_DIM]>,
    pub member_deltas: Vec<isize>,
    pub member_dist2: Vec<f64>,
    pub rim: Vec<[i64; MAX_DIM]>,
    pub rim_deltas: Vec<isize>,
}

impl StencilTemplate {
    /// Offsets for spacing `h` and radius `eps`; `strides` turn them into node-id deltas.
    pub fn build(dim: usize, h: f64, eps: f64, strides: &[usize; MAX_DIM]) -> Self {
        let reach = (eps / h).ceil() as i64 + 1;
        let mut members = Vec::new();
        let mut rim = Vec::new();
        let mut k = [0i64; MAX_DIM];
        let span = (2 * reach + 1) as usize;
        let total = span.pow(dim as u32);
        for code in 0..total {
            let mut c = code;
            // Last axis varies fastest so the enumeration follows node-id order.
            for i in (0..dim).rev() {
                k[i] = (c % span) as i64 - reach;
                c /= span;
            }
            let r = (0..dim).map(|i| (k[i] as f64 * h).powi(2)).sum::<f64>().sqrt();
            if r < eps * (1.0 - BALL_TOL) {
                members.push(k);
            } else if (r - eps).abs() <= BALL_TOL * eps {
                rim.push(k);
            }
        }
        let delta = |k: &[i64; MAX_DIM]| (0..dim).map(|i| k[i] as isize * strides[i] as isize).sum::<isize>();
        let member_deltas = members.iter().map(delta).collect();
        let rim_deltas = rim.iter().map(delta).collect();
        let member_dist2 = members
            .iter()
            .map(|k| (0..dim).map(|i| (k[i] as f64 * h).powi(2)).sum())
            .collect();
        StencilTemplate {
            members,
            member_deltas,
            member_dist2,
            rim,
            rim_deltas,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Lattice nodes inside `B_ε(x)` for one center node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BallStencil {
    pub center: usize,
    /// Non-exterior nodes with `|y − x| < ε`, ascending node id.
    pub members: Vec<usize>,
    /// Non-exterior nodes on the sphere `|y − x| = ε` (within tolerance).
    pub rim: Vec<usize>,
}

/// Spatial grid over the padded bounding box plus the aligned time levels.
#[derive(Clone, Debug)]
pub struct SpaceTimeLattice {
    domain: Domain,
    dim: usize,
    h: f64,
    eps: f64,
    t_final: f64,
    levels: usize,
    lo_index: [i64; MAX_DIM],
    shape: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    classes: Vec<NodeClass>,
    template: StencilTemplate,
}

impl SpaceTimeLattice {
    /// Builds the lattice, enforcing the stencil resolution floor ε/h ≥ 4.
    pub fn new(domain: Domain, eps: f64, h: f64, t_final: f64) -> Result<Self, GeometryError> {
        if eps.is_finite() && h.is_finite() && h > 0.0 {
            let ratio = eps / h;
            if ratio < MIN_RESOLUTION * (1.0 - 1e-9) {
                return Err(GeometryError::ResolutionTooCoarse { ratio });
            }
        }
        Self::new_unchecked(domain, eps, h, t_final)
    }

    /// Same as [`SpaceTimeLattice::new`] without the resolution floor.
    pub fn new_unchecked(domain: Domain, eps: f64, h: f64, t_final: f64) -> Result<Self, GeometryError> {
        if !(h > 0.0 && h.is_finite() && eps > 0.0 && eps.is_finite()) {
            return Err(GeometryError::InvalidSpacing { h, eps });
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(GeometryError::InvalidDomain(format!("horizon T = {t_final}")));
        }
        let dim = domain.dim();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(GeometryError::Dimension(dim));
        }
        let (lo, hi) = domain.bounding_box();
        let pad = eps + h;
        let mut lo_index = [0i64; MAX_DIM];
        let mut shape = [1usize; MAX_DIM];
        let mut count = 1usize;
        for i in 0..dim {
            let a = ((lo[i] - pad) / h).floor() as i64;
            let b = ((hi[i] + pad) / h).ceil() as i64;
            lo_index[i] = a;
            shape[i] = (b - a + 1) as usize;
            count = count.saturating_mul(shape[i]);
        }
        if count > MAX_NODES {
            return Err(GeometryError::TooLarge(count));
        }
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1;
        for i in (0..dim).rev() {
            strides[i] = s;
            s *= shape[i];
        }
        let levels = (2.0 * t_final / (eps * eps) - 1e-9).ceil().max(1.0) as usize;
        let mut lattice = SpaceTimeLattice {
            domain,
            dim,
            h,
            eps,
            t_final,
            levels,
            lo_index,
            shape,
            strides,
            classes: Vec::new(),
            template: StencilTemplate::build(dim, h, eps, &strides),
        };
        lattice.classes = (0..count)
            .map(|id| classify_node(&lattice.domain, &lattice.coords(id), eps))
            .collect();
        Ok(lattice)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Index M of the last level; levels run over `0..=M` with M = ⌈2T/ε²⌉.
    pub fn last_level(&self) -> usize {
        self.levels
    }

    pub fn level_count(&self) -> usize {
        self.levels + 1
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.eps * self.eps / 2.0
    }

    pub fn node_count(&self) -> usize {
        self.classes.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub fn class(&self, node: usize) -> NodeClass {
        self.classes[node]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    pub fn template(&self) -> &StencilTemplate {
        &self.template
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides[..self.dim]
    }

    pub fn multi_index(&self, node: usize) -> [i64; MAX_DIM] {
        let mut k = [0i64; MAX_DIM];
        let mut rem = node;
        for i in 0..self.dim {
            k[i] = (rem / self.strides[i]) as i64 + self.lo_index[i];
            rem %= self.strides[i];
        }
        k
    }

    /// Node id of an absolute integer index, if inside the lattice box.
    pub fn node_at(&self, k: &[i64]) -> Option<usize> {
        let mut id = 0;
        for i in 0..self.dim {
            let local = k[i] - self.lo_index[i];
            if local < 0 || local as usize >= self.shape[i] {
                return None;
            }
            id += local as usize * self.strides[i];
        }
        Some(id)
    }

    pub fn coords(&self, node: usize) -> Point {
        let k = self.multi_index(node);
        let mut p = Point::zeros(self.dim);
        for i in 0..self.dim {
            p.as_mut_slice()[i] = k[i] as f64 * self.h;
        }
        p
    }

    /// Node nearest to `x`, if inside the lattice box.
    pub fn nearest_node(&self, x: &Point) -> Option<usize> {
        let mut k = [0i64; MAX_DIM];
        for i in 0..self.dim {
            k[i] = (x[i] / self.h).round() as i64;
        }
        self.node_at(&k[..self.dim])
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == NodeClass::Interior)
            .map(|(i, _)| i)
    }

    pub fn strip_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == NodeClass::LateralStrip)
            .map(|(i, _)| i)
    }

    /// Non-exterior nodes (the sampled H = Ω ∪ S_ε).
    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != NodeClass::Exterior)
            .map(|(i, _)| i)
    }

    /// Non-exterior lattice nodes strictly inside `B_ε(x)` for an interior
    /// node `x`, plus the rim nodes on its boundary sphere.
    pub fn ball_nodes(&self, node: usize) -> Result<BallStencil, GeometryError> {
        if self.classes.get(node) != Some(&NodeClass::Interior) {
            return Err(GeometryError::NotInterior(node));
        }
        let base = self.multi_index(node);
        let collect = |offsets: &[[i64; MAX_DIM]]| -> Vec<usize> {
            offsets
                .iter()
                .filter_map(|off| {
                    let mut k = [0i64; MAX_DIM];
                    for i in 0..self.dim {
                        k[i] = base[i] + off[i];
                    }
                    self.node_at(&k[..self.dim])
                })
                .filter(|&id| self.classes[id] != NodeClass::Exterior)
                .collect()
        };
        let members = collect(&self.template.members);
        if members.len() < 3 {
            return Err(GeometryError::StencilTooSmall {
                node,
                count: members.len(),
            });
        }
        let rim = collect(&self.template.rim);
        Ok(BallStencil {
            center: node,
            members,
            rim,
        })
    }

    /// True when every template offset of `node` stays inside the box and
    /// off exterior nodes, so the id deltas of the template can be used
    /// directly.
    pub fn stencil_is_full(&self, node: usize) -> bool {
        let base = self.multi_index(node);
        let reach = (self.eps / self.h).ceil() as i64 + 1;
        for i in 0..self.dim {
            let local = base[i] - self.lo_index[i];
            if local < reach || local + reach >= self.shape[i] as i64 {
                return false;
            }
        }
        true
    }

    /// Multilinear interpolation weights of `x`: up to 2^n (node, weight)
    /// pairs. Returns `None` if the cell leaves the lattice box.
    pub fn interpolation_cell(&self, x: &Point) -> Option<([usize; 8], [f64; 8], usize)> {
        let mut base = [0i64; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for i in 0..self.dim {
            let s = x[i] / self.h;
            let f = s.floor();
            base[i] = f as i64;
            frac[i] = s - f;
        }
        let corners = 1usize << self.dim;
        let mut ids = [0usize; 8];
        let mut ws = [0.0f64; 8];
        for c in 0..corners {
            let mut k = [0i64; MAX_DIM];
            let mut w = 1.0;
            for i in 0..self.dim {
                if (c >> i) & 1 == 1 {
                    k[i] = base[i] + 1;
                    w *= frac[i];
                } else {
                    k[i] = base[i];
                    w *= 1.0 - frac[i];
                }
            }
            ids[c] = self.node_at(&k[..self.dim])?;
            ws[c] = w;
        }
        Some((ids, ws, corners))
    }
}
