//! Domains with distance-to-boundary oracles, triadic layer decompositions of
//! a boundary strip, and the flattening map for domains above a Lipschitz graph.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on membership tests at the boundary.
const BOUNDARY_SLACK: f64 = 1e-12;

/// Segments in the sampled boundary polyline of a graph domain.
const GRAPH_POLYLINE_SEGMENTS: usize = 8192;

/// Largest number of subcubes [`dyadic_layers`] will materialise.
pub const MAX_SUBCUBES: usize = 2_000_000;

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Geometry("region corners must share a positive dimension".into()));
        }
        if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Geometry("region corners must be finite".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn interval(a: f64, b: f64) -> Self {
        Self { lo: vec![a], hi: vec![b] }
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn measure(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a).max(0.0))
            .product()
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| other.lo[i] >= self.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// True when the interiors do not meet.
    pub fn interior_disjoint(&self, other: &Region) -> bool {
        (0..self.dim()).any(|i| other.lo[i] >= self.hi[i] || other.hi[i] <= self.lo[i])
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }

    /// Cube of side `lambda` with lower corner at the origin.
    pub fn cube(dim: usize, lambda: f64) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![lambda; dim],
        }
    }
}

/// Boundary profile `gamma` of a domain lying above its graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphProfile {
    Zero,
    Abs { slope: f64 },
    Sine { amplitude: f64, frequency: f64 },
    Linear { slope: f64 },
    /// Piecewise-linear through the given points, constant beyond the ends.
    Polyline { points: Vec<[f64; 2]> },
}

impl GraphProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            GraphProfile::Zero => 0.0,
            GraphProfile::Abs { slope } => slope * x.abs(),
            GraphProfile::Sine {
                amplitude,
                frequency,
            } => amplitude * (frequency * x).sin(),
            GraphProfile::Linear { slope } => slope * x,
            GraphProfile::Polyline { points } => interpolate(points, x),
        }
    }

    fn is_piecewise_linear(&self) -> bool {
        !matches!(self, GraphProfile::Sine { .. })
    }
}

fn interpolate(points: &[[f64; 2]], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first[0] {
        return first[1];
    }
    if x >= last[0] {
        return last[1];
    }
    let i = points.partition_point(|p| p[0] <= x);
    let (p, q) = (points[i - 1], points[i]);
    p[1] + (q[1] - p[1]) * (x - p[0]) / (q[0] - p[0])
}

/// Flattening map `F(x) = (x', x_d - gamma(x'))`.
pub fn graph_flatten(profile: &GraphProfile, x: [f64; 2]) -> [f64; 2] {
    [x[0], x[1] - profile.eval(x[0])]
}

/// Inverse of [`graph_flatten`].
pub fn graph_unflatten(profile: &GraphProfile, xi: [f64; 2]) -> [f64; 2] {
    [xi[0], xi[1] + profile.eval(xi[0])]
}

/// Bilipschitz constant `sqrt(2 M^2 + 2)` of the flattening map.
pub fn bilipschitz_constant(lipschitz: f64) -> f64 {
    (2.0 * lipschitz * lipschitz + 2.0).sqrt()
}

/// Extreme ratios `|F(x) - F(y)| / |x - y|` over random pairs in `[-1, 1]^2`.
pub fn bilipschitz_sweep(profile: &GraphProfile, pairs: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for _ in 0..pairs {
        let x: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let y: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        if d == 0.0 {
            continue;
        }
        let fx = graph_flatten(profile, x);
        let fy = graph_flatten(profile, y);
        let r = ((fx[0] - fy[0]).powi(2) + (fx[1] - fy[1]).powi(2)).sqrt() / d;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

/// The part of `{x_d > gamma(x')}` over `window` and below `gamma + height`.
/// Distances are measured to the graph only.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDomain {
    profile: GraphProfile,
    lipschitz: f64,
    window: [f64; 2],
    height: f64,
    polyline: Vec<[f64; 2]>,
}

impl GraphDomain {
    pub fn new(profile: GraphProfile, lipschitz: f64, window: [f64; 2], height: f64) -> Result<Self> {
        if !(window[1] > window[0]) || !window.iter().all(|v| v.is_finite()) {
            return Err(Error::Geometry(format!("graph window {window:?} is empty")));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::Geometry(format!("graph domain height {height} must be positive")));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::Geometry(format!("Lipschitz constant {lipschitz} must be finite")));
        }
        if let GraphProfile::Polyline { points } = &profile {
            if points.len() < 2 || points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return Err(Error::Geometry(
                    "polyline profile needs at least two points with increasing abscissae".into(),
                ));
            }
        }
        let a = window[0] - height;
        let b = window[1] + height;
        let polyline: Vec<[f64; 2]> = (0..=GRAPH_POLYLINE_SEGMENTS)
            .map(|i| {
                let x = a + (b - a) * i as f64 / GRAPH_POLYLINE_SEGMENTS as f64;
                [x, profile.eval(x)]
            })
            .collect();
        for w in polyline.windows(2) {
            let rise = (w[1][1] - w[0][1]).abs();
            let run = w[1][0] - w[0][0];
            if rise > lipschitz * run * (1.0 + 1e-9) + 1e-14 {
                return Err(Error::Geometry(format!(
                    "profile slope {:.6} near x' = {:.6} exceeds Lipschitz constant {lipschitz}",
                    rise / run,
                    w[0][0]
                )));
            }
        }
        Ok(Self {
            profile,
            lipschitz,
            window,
            height,
            polyline,
        })
    }

    pub fn profile(&self) -> &GraphProfile {
        &self.profile
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn window(&self) -> [f64; 2] {
        self.window
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn polyline(&self) -> &[[f64; 2]] {
        &self.polyline
    }

    fn contains(&self, x: &[f64]) -> bool {
        let g = self.profile.eval(x[0]);
        let tol = BOUNDARY_SLACK * (1.0 + x[1].abs());
        x[0] >= self.window[0]
            && x[0] <= self.window[1]
            && x[1] >= g - tol
            && x[1] <= g + self.height + tol
    }

    fn distance(&self, x: [f64; 2]) -> f64 {
        let d2 = |p: [f64; 2]| (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
        if self.profile.is_piecewise_linear() {
            if let GraphProfile::Polyline { points } = &self.profile {
                return polyline_distance(points, x, true);
            }
        }
        let pts = &self.polyline;
        let sampled: Vec<f64> = pts.iter().map(|p| d2(*p)).collect();
        // Refine every local minimum of the sampled squared distance that could
        // compete with the best sample.
        let best = sampled.iter().copied().fold(f64::INFINITY, f64::min);
        let h = pts[1][0] - pts[0][0];
        let margin = (2.0 * best.sqrt() + h * (1.0 + self.lipschitz)) * h * (1.0 + self.lipschitz);
        let mut result = best;
        let f = |s: f64| (s - x[0]).powi(2) + (self.profile.eval(s) - x[1]).powi(2);
        for i in 0..pts.len() {
            let left = if i > 0 { sampled[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < pts.len() { sampled[i + 1] } else { f64::INFINITY };
            if sampled[i] <= left && sampled[i] <= right && sampled[i] <= best + margin {
                let a = pts[i.saturating_sub(1)][0];
                let b = pts[(i + 1).min(pts.len() - 1)][0];
                result = result.min(golden_min(&f, a, b));
            }
        }
        if self.profile.is_piecewise_linear() {
            result = result.min(polyline_distance(pts, x, false).powi(2));
        }
        result.sqrt()
    }
}

/// Minimum of a unimodal `f` on `[a, b]` by golden-section search.
fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = f(a).min(f(b));
    while (b - a) > 1e-13 * (1.0 + a.abs().max(b.abs())) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        best = best.min(fc).min(fd);
    }
    best
}

fn segment_distance2(p: [f64; 2], q: [f64; 2], x: [f64; 2]) -> f64 {
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((x[0] - p[0]) * dx + (x[1] - p[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (p[0] + t * dx, p[1] + t * dy);
    (x[0] - cx).powi(2) + (x[1] - cy).powi(2)
}

/// Distance from `x` to a polyline; optionally extended by horizontal rays at
/// both ends.
fn polyline_distance(points: &[[f64; 2]], x: [f64; 2], extend: bool) -> f64 {
    let mut best = points
        .windows(2)
        .map(|w| segment_distance2(w[0], w[1], x))
        .fold(f64::INFINITY, f64::min);
    if extend {
        let first = points[0];
        let last = points[points.len() - 1];
        let far = 1e6 * (1.0 + (last[0] - first[0]).abs());
        best = best
            .min(segment_distance2([first[0] - far, first[1]], first, x))
            .min(segment_distance2(last, [last[0] + far, last[1]], x));
    }
    best.sqrt()
}

/// Simple, counterclockwise polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2D {
    vertices: Vec<[f64; 2]>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: [f64; 2], b: [f64; 2], c: [f64; 2], d: f64| {
        d == 0.0 && c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

impl Polygon2D {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::Geometry("polygon needs at least three vertices".into()));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("polygon vertices must be finite".into()));
        }
        let poly = Self { vertices };
        if !(poly.signed_area() > 0.0) {
            return Err(Error::Geometry("polygon must be counterclockwise with positive area".into()));
        }
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(poly.vertex(i), poly.vertex(i + 1), poly.vertex(j), poly.vertex(j + 1)) {
                    return Err(Error::Geometry(format!("polygon edges {i} and {j} intersect")));
                }
            }
        }
        Ok(poly)
    }

    pub fn unit_square() -> Self {
        Self {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    fn vertex(&self, i: usize) -> [f64; 2] {
        self.vertices[i % self.vertices.len()]
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| {
                let (p, q) = (self.vertex(i), self.vertex(i + 1));
                p[0] * q[1] - q[0] * p[1]
            })
            .sum::<f64>()
    }

    pub fn bounding_box(&self) -> Region {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Region::rect(lo, hi)
    }

    /// The polygon as a box, when it is an axis-aligned rectangle.
    pub fn as_rectangle(&self) -> Option<Region> {
        let bb = self.bounding_box();
        let aligned = self.vertices.iter().all(|v| {
            (v[0] == bb.lo[0] || v[0] == bb.hi[0]) && (v[1] == bb.lo[1] || v[1] == bb.hi[1])
        });
        let n = self.vertices.len();
        let axis_edges = (0..n).all(|i| {
            let (p, q) = (self.vertex(i), self.vertex(i + 1));
            p[0] == q[0] || p[1] == q[1]
        });
        (aligned && axis_edges && (self.signed_area() - bb.measure()).abs() <= 1e-12 * bb.measure()).then_some(bb)
    }

    pub fn boundary_distance(&self, x: [f64; 2]) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| segment_distance2(self.vertex(i), self.vertex(i + 1), x))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// Closed-set membership with a small boundary tolerance.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let (p, q) = (self.vertex(i), self.vertex(i + 1));
            if (p[1] > x[1]) != (q[1] > x[1]) {
                let xc = p[0] + (x[1] - p[1]) * (q[0] - p[0]) / (q[1] - p[1]);
                if x[0] < xc {
                    inside = !inside;
                }
            }
        }
        let scale = self.bounding_box().measure().sqrt();
        inside || self.boundary_distance(x) <= BOUNDARY_SLACK * scale
    }
}

/// A domain with a distance-to-boundary oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub enum Domain {
    /// `(0, 2D)`.
    Interval { half_length: f64 },
    /// `(-n, n)^{d-1} x (0, h)`.
    AxisBox { dim: usize, halfwidth: u32, height: f64 },
    Graph(GraphDomain),
    Polygon(Polygon2D),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
enum DomainRepr {
    Interval {
        half_length: f64,
    },
    AxisBox {
        dim: usize,
        halfwidth: u32,
        height: f64,
    },
    Graph {
        profile: GraphProfile,
        lipschitz: f64,
        window: [f64; 2],
        height: f64,
        #[serde(default)]
        polyline: Vec<[f64; 2]>,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;

    fn try_from(r: DomainRepr) -> Result<Self> {
        match r {
            DomainRepr::Interval { half_length } => Domain::interval(half_length),
            DomainRepr::AxisBox {
                dim,
                halfwidth,
                height,
            } => Domain::axis_box(dim, halfwidth, height),
            DomainRepr::Graph {
                profile,
                lipschitz,
                window,
                height,
                ..
            } => Ok(Domain::Graph(GraphDomain::new(profile, lipschitz, window, height)?)),
            DomainRepr::Polygon { vertices } => Ok(Domain::Polygon(Polygon2D::new(vertices)?)),
        }
    }
}

impl From<Domain> for DomainRepr {
    fn from(d: Domain) -> Self {
        match d {
            Domain::Interval { half_length } => DomainRepr::Interval { half_length },
            Domain::AxisBox {
                dim,
                halfwidth,
                height,
            } => DomainRepr::AxisBox {
                dim,
                halfwidth,
                height,
            },
            Domain::Graph(g) => DomainRepr::Graph {
                profile: g.profile,
                lipschitz: g.lipschitz,
                window: g.window,
                height: g.height,
                polyline: g.polyline,
            },
            Domain::Polygon(p) => DomainRepr::Polygon { vertices: p.vertices },
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Domain::Interval { half_length } => write!(f, "interval:D={half_length}"),
            Domain::AxisBox {
                dim,
                halfwidth,
                height,
            } => write!(f, "box:d={dim},n={halfwidth},h={height}"),
            Domain::Graph(g) => write!(f, "graph:M={}", g.lipschitz),
            Domain::Polygon(p) => write!(f, "polygon:{}", p.vertices.len()),
        }
    }
}

impl Domain {
    pub fn interval(half_length: f64) -> Result<Self> {
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(Error::Geometry(format!("interval half-length {half_length} must be positive")));
        }
        Ok(Domain::Interval { half_length })
    }

    pub fn axis_box(dim: usize, halfwidth: u32, height: f64) -> Result<Self> {
        if dim < 1 {
            return Err(Error::Geometry("box dimension must be at least 1".into()));
        }
        if halfwidth < 1 {
            return Err(Error::Geometry("box halfwidth n must be at least 1".into()));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::Geometry(format!("box height {height} must be positive")));
        }
        Ok(Domain::AxisBox {
            dim,
            halfwidth,
            height,
        })
    }

    pub fn unit_square() -> Self {
        Domain::Polygon(Polygon2D::unit_square())
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::AxisBox { dim, .. } => *dim,
            Domain::Graph(_) | Domain::Polygon(_) => 2,
        }
    }

    /// The domain as an axis box, when it is one.
    pub fn as_box(&self) -> Option<Region> {
        match self {
            Domain::Interval { half_length } => Some(Region::interval(0.0, 2.0 * half_length)),
            Domain::AxisBox {
                dim,
                halfwidth,
                height,
            } => {
                let n = *halfwidth as f64;
                let mut lo = vec![-n; *dim];
                let mut hi = vec![n; *dim];
                lo[dim - 1] = 0.0;
                hi[dim - 1] = *height;
                Some(Region { lo, hi })
            }
            Domain::Polygon(p) => p.as_rectangle(),
            Domain::Graph(_) => None,
        }
    }

    pub fn bounding_box(&self) -> Region {
        match self {
            Domain::Polygon(p) => p.bounding_box(),
            Domain::Graph(g) => {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for p in g.polyline.iter().filter(|p| p[0] >= g.window[0] && p[0] <= g.window[1]) {
                    lo = lo.min(p[1]);
                    hi = hi.max(p[1]);
                }
                Region::rect([g.window[0], lo], [g.window[1], hi + g.height])
            }
            _ => self.as_box().expect("box-shaped domain"),
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            Domain::Polygon(p) => p.signed_area(),
            Domain::Graph(g) => (g.window[1] - g.window[0]) * g.height,
            _ => self.bounding_box().measure(),
        }
    }

    /// Membership in the closure of the domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Domain::Polygon(p) => p.contains([x[0], x[1]]),
            Domain::Graph(g) => g.contains(x),
            _ => {
                let b = self.as_box().expect("box-shaped domain");
                (0..x.len()).all(|i| {
                    let tol = BOUNDARY_SLACK * (1.0 + b.hi[i].abs().max(b.lo[i].abs()));
                    x[i] >= b.lo[i] - tol && x[i] <= b.hi[i] + tol
                })
            }
        }
    }

    /// `delta(x) = min_{y in boundary} |x - y|` for `x` in the closure.
    pub fn distance_to_boundary(&self, x: &[f64]) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::OutsideDomain(format!("{x:?} not in {self}")));
        }
        Ok(match self {
            Domain::Polygon(p) => p.boundary_distance([x[0], x[1]]),
            Domain::Graph(g) => g.distance([x[0], x[1]]),
            _ => {
                let b = self.as_box().expect("box-shaped domain");
                (0..x.len())
                    .map(|i| (x[i] - b.lo[i]).min(b.hi[i] - x[i]))
                    .fold(f64::INFINITY, f64::min)
                    .max(0.0)
            }
        })
    }

    /// An upper bound on `sup delta` over the domain.
    pub fn max_distance_bound(&self) -> f64 {
        match self {
            Domain::Interval { half_length } => *half_length,
            Domain::AxisBox {
                dim,
                halfwidth,
                height,
            } => {
                if *dim == 1 {
                    height / 2.0
                } else {
                    (*halfwidth as f64).min(height / 2.0)
                }
            }
            Domain::Graph(g) => g.height,
            Domain::Polygon(p) => {
                // delta is 1-Lipschitz, so a grid maximum plus the cell half-diagonal bounds it.
                let bb = p.bounding_box();
                let n = 200;
                let hx = (bb.hi[0] - bb.lo[0]) / n as f64;
                let hy = (bb.hi[1] - bb.lo[1]) / n as f64;
                let mut best: f64 = 0.0;
                for i in 0..=n {
                    for j in 0..=n {
                        let x = [bb.lo[0] + hx * i as f64, bb.lo[1] + hy * j as f64];
                        if p.contains(x) {
                            best = best.max(p.boundary_distance(x));
                        }
                    }
                }
                best + 0.5 * (hx * hx + hy * hy).sqrt()
            }
        }
    }

    /// Checks `delta < R` everywhere on the domain.
    pub fn check_scale(&self, r: f64) -> Result<()> {
        let bound = self.max_distance_bound();
        if !(bound < r) {
            return Err(Error::Precondition(format!(
                "distance to the boundary reaches {bound} on {self}, not below R = {r}"
            )));
        }
        Ok(())
    }
}

/// Empirical `(min, max)` of `delta(x) / xi_d` over a deterministic sample
/// grid of the graph domain, `xi = F(x)`.
pub fn delta_equivalence_check(domain: &GraphDomain, samples: usize) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::Precondition("at least one sample required".into()));
    }
    let side = (samples as f64).sqrt().ceil().max(1.0) as usize;
    let [a, b] = domain.window;
    let h = domain.height;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..side {
        let xp = a + (b - a) * (i as f64 + 0.5) / side as f64;
        for j in 0..side {
            // heights log-spaced over four decades below h
            let xi_d = h * 10f64.powf(-4.0 * (j as f64 + 0.5) / side as f64);
            let x = graph_unflatten(&domain.profile, [xp, xi_d]);
            let ratio = domain.distance(x) / xi_d;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    Ok((lo, hi))
}

/// Axis cube `[lo, lo + side)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub lo: Vec<f64>,
    pub side: f64,
}

impl Cube {
    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().map(|v| v + 0.5 * self.side).collect()
    }

    pub fn measure(&self) -> f64 {
        self.side.powi(self.lo.len() as i32)
    }

    pub fn region(&self) -> Region {
        Region {
            lo: self.lo.clone(),
            hi: self.lo.iter().map(|v| v + self.side).collect(),
        }
    }
}

/// Layer `A_k = (-n, n)^{d-1} x [3^k, 3^{k+1})` of the strip over `(-n, n)^{d-1}`,
/// tiled by cubes of side `2 * 3^k` in the tangential directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicLayer {
    pub k: i32,
    pub n: u32,
    pub dim: usize,
    pub subcubes: Vec<Cube>,
}

/// `sigma_k = 3^{-k(d-1)} n^{d-1}`.
pub fn subcube_count(k: i32, n: u32, dim: usize) -> u128 {
    let per_axis = 3u128.pow((-k) as u32) * n as u128;
    per_axis.pow(dim as u32 - 1)
}

impl DyadicLayer {
    /// The layer's slab `A_k`. In one dimension this is `[3^k, 3^{k+1})`.
    pub fn slab(&self) -> Region {
        let n = self.n as f64;
        let s = 3f64.powi(self.k);
        let mut lo = vec![-n; self.dim];
        let mut hi = vec![n; self.dim];
        lo[self.dim - 1] = s;
        hi[self.dim - 1] = 3.0 * s;
        Region { lo, hi }
    }

    fn per_axis(&self) -> usize {
        3usize.pow((-self.k) as u32) * self.n as usize
    }

    /// Index of the cube in `upper` whose tangential footprint contains the
    /// center of cube `i` of this layer.
    pub fn parent_index(&self, i: usize, upper: &DyadicLayer) -> Option<usize> {
        if upper.k != self.k + 1 || upper.dim != self.dim || upper.n != self.n {
            return None;
        }
        let c = self.subcubes.get(i)?.center();
        let side = 2.0 * 3f64.powi(upper.k);
        let count = upper.per_axis();
        let n = self.n as f64;
        let mut idx = 0;
        for axis in 0..self.dim - 1 {
            let j = ((c[axis] + n) / side).floor() as usize;
            if j >= count {
                return None;
            }
            idx = idx * count + j;
        }
        Some(idx)
    }
}

/// Layers `k = l..=-1` tiling `(-n, n)^{d-1} x [3^l, 1)`.
pub fn dyadic_layers(n: u32, dim: usize, l: i32) -> Result<Vec<DyadicLayer>> {
    if l > -1 {
        return Err(Error::Domain(format!("layer index {l} must be <= -1")));
    }
    if n < 1 || dim < 1 {
        return Err(Error::Domain("n and d must be at least 1".into()));
    }
    let total: u128 = (l..=-1).map(|k| subcube_count(k, n, dim)).sum();
    if total > MAX_SUBCUBES as u128 {
        return Err(Error::Precondition(format!(
            "{total} subcubes requested, more than the cap of {MAX_SUBCUBES}"
        )));
    }
    let nf = n as f64;
    Ok((l..=-1)
        .map(|k| {
            let s = 3f64.powi(k);
            let side = 2.0 * s;
            let per_axis = 3usize.pow((-k) as u32) * n as usize;
            let count = per_axis.pow(dim as u32 - 1);
            let subcubes = (0..count)
                .map(|mut idx| {
                    let mut lo = vec![0.0; dim];
                    for axis in (0..dim - 1).rev() {
                        lo[axis] = -nf + side * (idx % per_axis) as f64;
                        idx /= per_axis;
                    }
                    lo[dim - 1] = s;
                    Cube { lo, side }
                })
                .collect();
            DyadicLayer {
                k,
                n,
                dim,
                subcubes,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_distance() {
        let d = Domain::interval(1.0).unwrap();
        assert_eq!(d.distance_to_boundary(&[0.5]).unwrap(), 0.5);
        assert_eq!(d.distance_to_boundary(&[1.5]).unwrap(), 0.5);
        assert!(matches!(d.distance_to_boundary(&[2.5]), Err(Error::OutsideDomain(_))));
        for i in 0..=200 {
            let x = 2.0 * i as f64 / 200.0;
            assert_eq!(d.distance_to_boundary(&[x]).unwrap(), x.min(2.0 - x));
        }
    }

    #[test]
    fn box_distance() {
        let d = Domain::axis_box(2, 2, 2.0).unwrap();
        assert_eq!(d.distance_to_boundary(&[1.5, 1.0]).unwrap(), 0.5);
        assert_eq!(d.distance_to_boundary(&[0.0, 0.25]).unwrap(), 0.25);
        assert!(d.distance_to_boundary(&[0.0, -0.1]).is_err());
        assert!(Domain::axis_box(2, 0, 1.0).is_err());
    }

    #[test]
    fn polygon_distance_and_validation() {
        let d = Domain::unit_square();
        assert!((d.distance_to_boundary(&[0.3, 0.5]).unwrap() - 0.3).abs() < 1e-15);
        assert!(d.distance_to_boundary(&[1.3, 0.5]).is_err());
        let cw = Polygon2D::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]);
        assert!(matches!(cw, Err(Error::Geometry(_))));
        let bowtie = Polygon2D::new(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(bowtie.is_err());
        let tri = Domain::Polygon(Polygon2D::new(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]).unwrap());
        assert!(tri.as_box().is_none());
        assert_eq!(Domain::unit_square().as_box().unwrap(), Region::rect([0.0, 0.0], [1.0, 1.0]));
    }

    #[test]
    fn graph_distance_to_abs_profile() {
        let g = GraphDomain::new(GraphProfile::Abs { slope: 1.0 }, 1.0, [-1.0, 1.0], 2.0).unwrap();
        let d = Domain::Graph(g);
        let v = d.distance_to_boundary(&[0.0, 1.0]).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-10, "{v}");
    }

    #[test]
    fn graph_distance_to_sine_profile_matches_brute_force() {
        let profile = GraphProfile::Sine {
            amplitude: 0.5,
            frequency: 1.0,
        };
        let g = GraphDomain::new(profile.clone(), 0.5, [-2.0, 2.0], 1.0).unwrap();
        for &(x, y) in &[(0.3, 0.9), (-1.2, -0.2), (1.5, 0.8)] {
            let fast = g.distance([x, y]);
            let n = 400_000;
            let brute = (0..=n)
                .map(|i| {
                    let s = -3.0 + 6.0 * i as f64 / n as f64;
                    ((s - x).powi(2) + (profile.eval(s) - y).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(fast <= brute + 1e-12);
            assert!((fast - brute) / brute < 1e-8, "{fast} {brute}");
        }
    }

    #[test]
    fn graph_rejects_steep_profile() {
        let r = GraphDomain::new(GraphProfile::Linear { slope: 2.0 }, 1.0, [-1.0, 1.0], 1.0);
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn flatten_examples() {
        assert_eq!(graph_flatten(&GraphProfile::Zero, [0.3, 0.7]), [0.3, 0.7]);
        assert_eq!(graph_flatten(&GraphProfile::Linear { slope: 1.0 }, [1.0, 3.0]), [1.0, 2.0]);
        let (lo, hi) = bilipschitz_sweep(&GraphProfile::Abs { slope: 1.0 }, 10_000, 7);
        assert!(lo >= 0.5 && hi <= 2.0);
    }

    #[test]
    fn delta_equivalence_examples() {
        let flat = GraphDomain::new(GraphProfile::Zero, 0.0, [-1.0, 1.0], 1.0).unwrap();
        let (c1, c2) = delta_equivalence_check(&flat, 400).unwrap();
        assert!((c1 - 1.0).abs() < 1e-12 && (c2 - 1.0).abs() < 1e-12);
        let abs = GraphDomain::new(GraphProfile::Abs { slope: 1.0 }, 1.0, [-1.0, 1.0], 1.0).unwrap();
        let (c1, c2) = delta_equivalence_check(&abs, 2500).unwrap();
        assert!(c1 >= 0.5 - 0.01 && c2 <= 2.0 + 0.01, "{c1} {c2}");
        let sine = GraphDomain::new(
            GraphProfile::Sine {
                amplitude: 0.5,
                frequency: 1.0,
            },
            0.5,
            [-2.0, 2.0],
            1.0,
        )
        .unwrap();
        let (c1, c2) = delta_equivalence_check(&sine, 2500).unwrap();
        let c = bilipschitz_constant(0.5);
        assert!(c1 >= 1.0 / c && c2 <= c, "{c1} {c2}");
    }

    #[test]
    fn dyadic_examples() {
        let layers = dyadic_layers(1, 1, -2).unwrap();
        assert_eq!(layers.len(), 2);
        assert_eq!(layers[0].subcubes.len(), 1);
        assert!((layers[0].slab().lo[0] - 1.0 / 9.0).abs() < 1e-15);
        assert!((layers[1].slab().hi[0] - 1.0).abs() < 1e-15);

        let layers = dyadic_layers(2, 2, -1).unwrap();
        assert_eq!(layers[0].subcubes.len(), 6);
        assert!((layers[0].subcubes[0].side - 2.0 / 3.0).abs() < 1e-15);

        let layers = dyadic_layers(1, 2, -3).unwrap();
        let count: usize = layers.iter().map(|l| l.subcubes.len()).sum();
        assert_eq!(count, 39);
        let area: f64 = layers
            .iter()
            .flat_map(|l| l.subcubes.iter())
            .map(|c| c.measure())
            .sum();
        assert!((area - 2.0 * (1.0 - 1.0 / 27.0)).abs() < 1e-12);
    }

    #[test]
    fn dyadic_parents() {
        let layers = dyadic_layers(1, 2, -3).unwrap();
        for w in layers.windows(2) {
            let mut children = vec![0; w[1].subcubes.len()];
            for i in 0..w[0].subcubes.len() {
                children[w[0].parent_index(i, &w[1]).unwrap()] += 1;
            }
            assert!(children.iter().all(|&c| c == 3));
        }
        assert!(dyadic_layers(1, 3, -20).is_err());
        assert!(dyadic_layers(1, 1, 0).is_err());
    }

    #[test]
    fn domain_json_round_trip() {
        let domains = vec![
            Domain::interval(1.0).unwrap(),
            Domain::axis_box(2, 1, 2.0).unwrap(),
            Domain::unit_square(),
            Domain::Graph(GraphDomain::new(GraphProfile::Abs { slope: 1.0 }, 1.0, [-1.0, 1.0], 1.0).unwrap()),
        ];
        for d in domains {
            let s = serde_json::to_string(&d).unwrap();
            let back: Domain = serde_json::from_str(&s).unwrap();
            assert_eq!(back, d);
        }
        let bad = r#"{"variant":"interval","half_length":-1.0}"#;
        assert!(serde_json::from_str::<Domain>(bad).is_err());
    }

    #[test]
    fn scale_check() {
        assert!(Domain::interval(1.0).unwrap().check_scale(std::f64::consts::E).is_ok());
        assert!(Domain::interval(1.0).unwrap().check_scale(1.0).is_err());
        let b = Domain::unit_square().max_distance_bound();
        assert!((0.5..0.51).contains(&b));
    }

    proptest! {
        #[test]
        fn flatten_round_trip(x in -5.0f64..5.0, y in -5.0f64..5.0, amp in 0.0f64..2.0) {
            for p in [GraphProfile::Abs { slope: amp }, GraphProfile::Sine { amplitude: amp, frequency: 1.3 }] {
                let back = graph_unflatten(&p, graph_flatten(&p, [x, y]));
                prop_assert!((back[0] - x).abs() < 1e-12 && (back[1] - y).abs() < 1e-12);
            }
        }

        #[test]
        fn polygon_distance_within_box_formula(x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let d = Domain::unit_square().distance_to_boundary(&[x, y]).unwrap();
            let exact = x.min(1.0 - x).min(y).min(1.0 - y);
            prop_assert!((d - exact).abs() < 1e-15);
        }
    }
}
