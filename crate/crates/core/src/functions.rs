//! Analytic test functions with grid quadrature for averages, L1 norms and
//! total variation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Region};
use crate::quad::{GL3_NODES, GL3_WEIGHTS};

pub const DEFAULT_GRID_1D: usize = 4096;
pub const DEFAULT_GRID_2D: usize = 512;

/// Step used for numerical gradients of descriptors without a closed form.
const GRADIENT_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = self
            .center
            .iter()
            .zip(x)
            .map(|(c, v)| (v - c) * (v - c))
            .sum::<f64>()
            / (self.radius * self.radius);
        bump_profile(r2) * self.amplitude
    }

    /// Gradient in closed form.
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r2: f64 = self
            .center
            .iter()
            .zip(x)
            .map(|(c, v)| (v - c) * (v - c))
            .sum::<f64>()
            / (self.radius * self.radius);
        if r2 >= 1.0 {
            return vec![0.0; x.len()];
        }
        let q = 1.0 - r2;
        let factor = -self.amplitude * bump_profile(r2) * 2.0 / (q * q * self.radius * self.radius);
        self.center.iter().zip(x).map(|(c, v)| factor * (v - c)).collect()
    }
}

/// `exp(1 - 1/(1 - r^2))` inside the unit ball, zero outside; peak value 1.
fn bump_profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub at: f64,
    pub height: f64,
}

/// Multiplier `xi` with values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cutoff {
    One,
    Zero,
    /// 0 at `start`, 1 at `end`, linear between and constant outside, along the first axis.
    ClampedLinear { start: f64, end: f64 },
}

impl Cutoff {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Cutoff::One => 1.0,
            Cutoff::Zero => 0.0,
            Cutoff::ClampedLinear { start, end } => ((x - start) / (end - start)).clamp(0.0, 1.0),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match *self {
            Cutoff::ClampedLinear { start, end } => {
                let (lo, hi) = if start < end { (start, end) } else { (end, start) };
                if x > lo && x < hi {
                    1.0 / (end - start)
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match *self {
            Cutoff::ClampedLinear { start, end } => vec![start, end],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Descriptor {
    /// `slope * x[axis] + intercept`.
    Linear {
        slope: f64,
        intercept: f64,
        #[serde(default)]
        axis: usize,
    },
    SmoothBump(Bump),
    BumpSum { bumps: Vec<Bump> },
    /// `u(x', x_d) = u'(x')` with `u'` a bump in the first coordinate.
    TensorProfile { center: f64, radius: f64, amplitude: f64 },
    /// Piecewise constant in one dimension: `base` left of every jump.
    Step { base: f64, jumps: Vec<Jump> },
    /// `level` where `delta < collar`, a clamped cubic descent to zero across
    /// the next `band`, zero deeper inside.
    BoundaryPlateau {
        level: f64,
        collar: f64,
        band: f64,
        domain: Domain,
    },
    /// Linear interpolation of `values` at `knots`, constant beyond the ends.
    PiecewiseLinear { knots: Vec<f64>, values: Vec<f64> },
    /// `cutoff * base`.
    Product { base: Box<TestFunction>, cutoff: Cutoff },
}

/// `scale * descriptor + shift`, sampled on a uniform grid for quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub descriptor: Descriptor,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub shift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_tv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_l1: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn smoothstep(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn smoothstep_derivative(tau: f64) -> f64 {
    if tau <= 0.0 || tau >= 1.0 {
        0.0
    } else {
        6.0 * tau * (1.0 - tau)
    }
}

impl TestFunction {
    pub fn new(descriptor: Descriptor) -> Result<Self> {
        let f = Self {
            descriptor,
            scale: 1.0,
            shift: 0.0,
            grid: None,
            known_tv: None,
            known_l1: None,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn linear() -> Self {
        Self::linear_with(1.0, 0.0, 0)
    }

    pub fn linear_with(slope: f64, intercept: f64, axis: usize) -> Self {
        Self::new(Descriptor::Linear {
            slope,
            intercept,
            axis,
        })
        .expect("linear descriptor is always valid")
    }

    pub fn constant(value: f64) -> Self {
        Self::linear_with(0.0, value, 0)
    }

    pub fn bump(center: Vec<f64>, radius: f64, amplitude: f64) -> Result<Self> {
        Self::new(Descriptor::SmoothBump(Bump {
            center,
            radius,
            amplitude,
        }))
    }

    pub fn bump_sum(bumps: Vec<Bump>) -> Result<Self> {
        Self::new(Descriptor::BumpSum { bumps })
    }

    pub fn tensor_profile(center: f64, radius: f64, amplitude: f64) -> Result<Self> {
        Self::new(Descriptor::TensorProfile {
            center,
            radius,
            amplitude,
        })
    }

    pub fn step(base: f64, jumps: Vec<Jump>) -> Result<Self> {
        Self::new(Descriptor::Step { base, jumps })
    }

    pub fn plateau(level: f64, collar: f64, band: f64, domain: Domain) -> Result<Self> {
        Self::new(Descriptor::BoundaryPlateau {
            level,
            collar,
            band,
            domain,
        })
    }

    pub fn piecewise_linear(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(Descriptor::PiecewiseLinear { knots, values })
    }

    pub fn multiplied_by(self, cutoff: Cutoff) -> Self {
        let grid = self.grid;
        Self {
            descriptor: Descriptor::Product {
                base: Box::new(self),
                cutoff,
            },
            scale: 1.0,
            shift: 0.0,
            grid,
            known_tv: None,
            known_l1: None,
        }
    }

    /// `c * u + shift`; exact TV and L1 data scale with `|c|` where still valid.
    pub fn scaled(mut self, c: f64) -> Self {
        self.scale *= c;
        self.shift *= c;
        self.known_tv = self.known_tv.map(|v| v * c.abs());
        self.known_l1 = self.known_l1.filter(|_| self.shift == 0.0).map(|v| v * c.abs());
        self
    }

    pub fn shifted(mut self, c: f64) -> Self {
        self.shift += c;
        self.known_l1 = None;
        self
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn with_known_tv(mut self, tv: f64) -> Self {
        self.known_tv = Some(tv);
        self
    }

    pub fn with_known_l1(mut self, l1: f64) -> Self {
        self.known_l1 = Some(l1);
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Precondition(msg));
        match &self.descriptor {
            Descriptor::SmoothBump(b) => check_bump(b)?,
            Descriptor::BumpSum { bumps } => {
                if bumps.is_empty() {
                    return bad("bump sum needs at least one bump".into());
                }
                for b in bumps {
                    check_bump(b)?;
                }
                if bumps.iter().any(|b| b.center.len() != bumps[0].center.len()) {
                    return bad("bumps in a sum must share a dimension".into());
                }
            }
            Descriptor::TensorProfile { radius, .. } if !(*radius > 0.0) => {
                return bad(format!("profile radius {radius} must be positive"));
            }
            Descriptor::Step { jumps, .. } => {
                if jumps.iter().any(|j| !j.at.is_finite() || !j.height.is_finite()) {
                    return bad("jump data must be finite".into());
                }
            }
            Descriptor::BoundaryPlateau {
                level,
                collar,
                band,
                ..
            } => {
                if *level == 0.0 || !level.is_finite() {
                    return bad("plateau level must be nonzero".into());
                }
                if !(*collar > 0.0 && *band > 0.0) {
                    return bad("plateau collar and band must be positive".into());
                }
            }
            Descriptor::PiecewiseLinear { knots, values } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return bad("piecewise-linear profile needs matching knots and values (at least two)".into());
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("knots must be strictly increasing".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Dimension implied by the descriptor, if any.
    pub fn natural_dim(&self) -> Option<usize> {
        match &self.descriptor {
            Descriptor::Linear { .. } => None,
            Descriptor::SmoothBump(b) => Some(b.center.len()),
            Descriptor::BumpSum { bumps } => Some(bumps[0].center.len()),
            Descriptor::TensorProfile { .. } => Some(2),
            Descriptor::Step { .. } | Descriptor::PiecewiseLinear { .. } => Some(1),
            Descriptor::BoundaryPlateau { domain, .. } => Some(domain.dim()),
            Descriptor::Product { base, .. } => base.natural_dim(),
        }
    }

    /// Checks the function can be evaluated on `domain`.
    pub fn check_domain(&self, domain: &Domain) -> Result<()> {
        if let Some(d) = self.natural_dim() {
            if d != domain.dim() {
                return Err(Error::Precondition(format!(
                    "function of dimension {d} on a {}-dimensional domain",
                    domain.dim()
                )));
            }
        }
        if let Descriptor::Linear { axis, .. } = self.descriptor {
            if axis >= domain.dim() {
                return Err(Error::Precondition(format!("linear axis {axis} outside dimension {}", domain.dim())));
            }
        }
        Ok(())
    }

    pub fn grid_for(&self, dim: usize) -> usize {
        self.grid
            .unwrap_or(if dim == 1 { DEFAULT_GRID_1D } else { DEFAULT_GRID_2D })
    }

    fn base_eval(&self, x: &[f64]) -> f64 {
        match &self.descriptor {
            Descriptor::Linear {
                slope,
                intercept,
                axis,
            } => slope * x[*axis] + intercept,
            Descriptor::SmoothBump(b) => b.eval(x),
            Descriptor::BumpSum { bumps } => bumps.iter().map(|b| b.eval(x)).sum(),
            Descriptor::TensorProfile {
                center,
                radius,
                amplitude,
            } => {
                let r = (x[0] - center) / radius;
                amplitude * bump_profile(r * r)
            }
            Descriptor::Step { base, jumps } => {
                base + jumps.iter().filter(|j| x[0] >= j.at).map(|j| j.height).sum::<f64>()
            }
            Descriptor::BoundaryPlateau {
                level,
                collar,
                band,
                domain,
            } => {
                let delta = domain.distance_to_boundary(x).unwrap_or(0.0);
                level * (1.0 - smoothstep((delta - collar) / band))
            }
            Descriptor::PiecewiseLinear { knots, values } => {
                let pts: Vec<[f64; 2]> = knots.iter().zip(values).map(|(k, v)| [*k, *v]).collect();
                interpolate(&pts, x[0])
            }
            Descriptor::Product { base, cutoff } => cutoff.eval(x[0]) * base.eval(x),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.scale * self.base_eval(x) + self.shift
    }

    pub fn eval1(&self, x: f64) -> f64 {
        self.eval(&[x])
    }

    /// Derivative along the first axis of a one-dimensional function, away from jumps.
    pub fn derivative1(&self, x: f64) -> f64 {
        self.scale * self.base_derivative1(x)
    }

    fn base_derivative1(&self, x: f64) -> f64 {
        match &self.descriptor {
            Descriptor::Linear { slope, axis, .. } => {
                if *axis == 0 {
                    *slope
                } else {
                    0.0
                }
            }
            Descriptor::SmoothBump(b) => b.gradient(&[x])[0],
            Descriptor::BumpSum { bumps } => bumps.iter().map(|b| b.gradient(&[x])[0]).sum(),
            Descriptor::TensorProfile {
                center,
                radius,
                amplitude,
            } => {
                Bump {
                    center: vec![*center],
                    radius: *radius,
                    amplitude: *amplitude,
                }
                .gradient(&[x])[0]
            }
            Descriptor::Step { .. } => 0.0,
            Descriptor::BoundaryPlateau {
                level,
                collar,
                band,
                domain,
            } => match domain {
                Domain::Interval { half_length } => {
                    let (delta, sign) = if x < *half_length { (x, 1.0) } else { (2.0 * half_length - x, -1.0) };
                    -level * smoothstep_derivative((delta - collar) / band) / band * sign
                }
                _ => numerical_partial(|y| self.base_eval(&[y]), x),
            },
            Descriptor::PiecewiseLinear { knots, values } => {
                if x <= knots[0] || x >= knots[knots.len() - 1] {
                    return 0.0;
                }
                let i = knots.partition_point(|k| *k <= x);
                (values[i] - values[i - 1]) / (knots[i] - knots[i - 1])
            }
            Descriptor::Product { base, cutoff } => {
                cutoff.derivative(x) * base.eval1(x) + cutoff.eval(x) * base.derivative1(x)
            }
        }
    }

    /// Gradient of the smooth part; numerical where no closed form is coded.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let analytic = match &self.descriptor {
            Descriptor::Linear { slope, axis, .. } => {
                let mut g = vec![0.0; x.len()];
                g[*axis] = *slope;
                Some(g)
            }
            Descriptor::SmoothBump(b) => Some(b.gradient(x)),
            Descriptor::BumpSum { bumps } => {
                let mut g = vec![0.0; x.len()];
                for b in bumps {
                    for (gi, bi) in g.iter_mut().zip(b.gradient(x)) {
                        *gi += bi;
                    }
                }
                Some(g)
            }
            Descriptor::TensorProfile { .. } => {
                let mut g = vec![0.0; x.len()];
                g[0] = self.base_derivative1(x[0]);
                Some(g)
            }
            _ if x.len() == 1 => Some(vec![self.base_derivative1(x[0])]),
            _ => None,
        };
        match analytic {
            Some(g) => g.into_iter().map(|v| v * self.scale).collect(),
            None => (0..x.len())
                .map(|i| {
                    let mut y = x.to_vec();
                    numerical_partial(
                        |t| {
                            y[i] = t;
                            self.eval(&y)
                        },
                        x[i],
                    )
                })
                .collect(),
        }
    }

    /// Jumps of a one-dimensional function, heights scaled.
    pub fn jumps1(&self) -> Vec<Jump> {
        match &self.descriptor {
            Descriptor::Step { jumps, .. } => jumps
                .iter()
                .map(|j| Jump {
                    at: j.at,
                    height: j.height * self.scale,
                })
                .collect(),
            Descriptor::Product { base, cutoff } => base
                .jumps1()
                .into_iter()
                .map(|j| Jump {
                    at: j.at,
                    height: j.height * cutoff.eval(j.at) * self.scale,
                })
                .filter(|j| j.height != 0.0)
                .collect(),
            _ => vec![],
        }
    }

    /// Points where a one-dimensional function or its derivative fails to be
    /// smooth, jumps included.
    pub fn breakpoints1(&self) -> Vec<f64> {
        let mut pts = match &self.descriptor {
            Descriptor::SmoothBump(b) => vec![b.center[0] - b.radius, b.center[0], b.center[0] + b.radius],
            Descriptor::BumpSum { bumps } => bumps
                .iter()
                .flat_map(|b| [b.center[0] - b.radius, b.center[0], b.center[0] + b.radius])
                .collect(),
            Descriptor::TensorProfile { center, radius, .. } => vec![center - radius, *center, center + radius],
            Descriptor::Step { jumps, .. } => jumps.iter().map(|j| j.at).collect(),
            Descriptor::BoundaryPlateau {
                collar,
                band,
                domain,
                ..
            } => match domain {
                Domain::Interval { half_length } => {
                    let l = 2.0 * half_length;
                    vec![*collar, collar + band, *half_length, l - collar - band, l - collar]
                }
                _ => vec![],
            },
            Descriptor::PiecewiseLinear { knots, .. } => knots.clone(),
            Descriptor::Product { base, cutoff } => {
                let mut v = base.breakpoints1();
                v.extend(cutoff.kinks());
                v
            }
            Descriptor::Linear { .. } => vec![],
        };
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Coordinates along the first axis where the function changes character.
    pub fn breakpoints_axis0(&self) -> Vec<f64> {
        match &self.descriptor {
            Descriptor::TensorProfile { .. } => self.breakpoints1(),
            Descriptor::Product { base, cutoff } => {
                let mut v = base.breakpoints_axis0();
                v.extend(cutoff.kinks());
                v
            }
            _ if self.natural_dim() == Some(1) => self.breakpoints1(),
            _ => vec![],
        }
    }
}

fn check_bump(b: &Bump) -> Result<()> {
    if b.center.is_empty() || !(b.radius > 0.0) || !b.amplitude.is_finite() {
        return Err(Error::Precondition("bump needs a center, positive radius and finite amplitude".into()));
    }
    Ok(())
}

fn interpolate(points: &[[f64; 2]], x: f64) -> f64 {
    let n = points.len();
    if x <= points[0][0] {
        return points[0][1];
    }
    if x >= points[n - 1][0] {
        return points[n - 1][1];
    }
    let i = points.partition_point(|p| p[0] <= x);
    let (p, q) = (points[i - 1], points[i]);
    p[1] + (q[1] - p[1]) * (x - p[0]) / (q[0] - p[0])
}

fn numerical_partial(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + GRADIENT_STEP) - f(x - GRADIENT_STEP)) / (2.0 * GRADIENT_STEP)
}

/// Composite three-point Gauss rule over `cells` cells of `[a, b]`, split at
/// `breaks` and at sign changes of `g` so that `|g|` is integrated as
/// accurately as `g`.
pub fn integrate_abs_1d(g: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize, breaks: &[f64]) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / cells as f64;
    let mut nodes: Vec<f64> = (0..=cells).map(|i| a + h * i as f64).collect();
    nodes[cells] = b;
    nodes.extend(breaks.iter().copied().filter(|p| *p > a && *p < b));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let mut roots = Vec::new();
    for w in nodes.windows(2) {
        let (ga, gb) = (g(w[0] + 1e-14 * (w[1] - w[0])), g(w[1] - 1e-14 * (w[1] - w[0])));
        if ga * gb < 0.0 {
            let (mut lo, mut hi) = (w[0], w[1]);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if (g(mid) < 0.0) == (ga < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    nodes.extend(roots);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let mut sum = 0.0;
    for w in nodes.windows(2) {
        let c = 0.5 * (w[0] + w[1]);
        let r = 0.5 * (w[1] - w[0]);
        let cell: f64 = GL3_NODES
            .iter()
            .zip(GL3_WEIGHTS)
            .map(|(x, wt)| wt * g(c + r * x).abs())
            .sum();
        sum += cell * r;
    }
    sum
}

/// Tensor three-point Gauss rule on a `grid x grid` partition of a 2D box,
/// with extra cuts along the first axis.
fn integrate_box_2d(f: impl Fn(&[f64]) -> f64, region: &Region, grid: usize, cuts0: &[f64]) -> f64 {
    let axis_nodes = |lo: f64, hi: f64, cuts: &[f64]| {
        let h = (hi - lo) / grid as f64;
        let mut n: Vec<f64> = (0..=grid).map(|i| lo + h * i as f64).collect();
        n[grid] = hi;
        n.extend(cuts.iter().copied().filter(|p| *p > lo && *p < hi));
        n.sort_by(f64::total_cmp);
        n.dedup();
        // Gauss points and weights along this axis
        let mut pts = Vec::with_capacity(3 * n.len());
        for w in n.windows(2) {
            let c = 0.5 * (w[0] + w[1]);
            let r = 0.5 * (w[1] - w[0]);
            for (x, wt) in GL3_NODES.iter().zip(GL3_WEIGHTS) {
                pts.push((c + r * x, wt * r));
            }
        }
        pts
    };
    let px = axis_nodes(region.lo[0], region.hi[0], cuts0);
    let py = axis_nodes(region.lo[1], region.hi[1], &[]);
    let mut sum = 0.0;
    for &(x, wx) in &px {
        let mut row = 0.0;
        for &(y, wy) in &py {
            row += wy * f(&[x, y]);
        }
        sum += wx * row;
    }
    sum
}

fn check_region(u: &TestFunction, region: &Region) -> Result<()> {
    if !(region.measure() > 0.0) {
        return Err(Error::EmptyRegion);
    }
    if let Some(d) = u.natural_dim() {
        if d != region.dim() {
            return Err(Error::Precondition(format!(
                "function of dimension {d} on a {}-dimensional region",
                region.dim()
            )));
        }
    }
    if region.dim() > 2 {
        return Err(Error::Unsupported("quadrature above two dimensions".into()));
    }
    Ok(())
}

/// `int_E g(u(x)) dx` on a box, with the same rule used for every quadrature
/// in this module.
pub fn integrate_over(u: &TestFunction, region: &Region, g: impl Fn(f64) -> f64) -> Result<f64> {
    check_region(u, region)?;
    let grid = u.grid_for(region.dim());
    Ok(if region.dim() == 1 {
        crate::quad::composite_gl3(|x| g(u.eval1(x)), region.lo[0], region.hi[0], grid, &u.breakpoints1())
    } else {
        integrate_box_2d(|x| g(u.eval(x)), region, grid, &u.breakpoints_axis0())
    })
}

/// `int_E |u(x) - c| dx`.
pub fn integrate_abs_deviation(u: &TestFunction, region: &Region, c: f64) -> Result<f64> {
    check_region(u, region)?;
    if region.dim() == 1 {
        let grid = u.grid_for(1);
        Ok(integrate_abs_1d(
            |x| u.eval1(x) - c,
            region.lo[0],
            region.hi[0],
            grid,
            &u.breakpoints1(),
        ))
    } else {
        integrate_over(u, region, |v| (v - c).abs())
    }
}

/// Average `(u)_E`.
pub fn average(u: &TestFunction, region: &Region) -> Result<f64> {
    Ok(integrate_over(u, region, |v| v)? / region.measure())
}

fn domain_box(domain: &Domain) -> Result<Region> {
    domain
        .as_box()
        .ok_or_else(|| Error::Unsupported(format!("quadrature on non-box domain {domain}")))
}

/// Average over a box-shaped domain.
pub fn domain_average(u: &TestFunction, domain: &Domain) -> Result<f64> {
    u.check_domain(domain)?;
    average(u, &domain_box(domain)?)
}

pub fn l1_norm(u: &TestFunction, domain: &Domain) -> Result<f64> {
    if let Some(v) = u.known_l1 {
        return Ok(v);
    }
    u.check_domain(domain)?;
    l1_on_region(u, &domain_box(domain)?)
}

pub fn l1_on_region(u: &TestFunction, region: &Region) -> Result<f64> {
    integrate_abs_deviation(u, region, 0.0)
}

pub fn tv_seminorm(u: &TestFunction, domain: &Domain) -> Result<f64> {
    if let Some(v) = u.known_tv {
        return Ok(v);
    }
    u.check_domain(domain)?;
    tv_on_region(u, &domain_box(domain)?)
}

/// Total variation on a box: `int |u'| + sum |jumps|` in one dimension,
/// `int |grad u|` by centered differences on the grid in two.
pub fn tv_on_region(u: &TestFunction, region: &Region) -> Result<f64> {
    check_region(u, region)?;
    let grid = u.grid_for(region.dim());
    if region.dim() == 1 {
        let (a, b) = (region.lo[0], region.hi[0]);
        let smooth = integrate_abs_1d(|x| u.derivative1(x), a, b, grid, &u.breakpoints1());
        let jumps: f64 = u
            .jumps1()
            .iter()
            .filter(|j| j.at > a && j.at < b)
            .map(|j| j.height.abs())
            .sum();
        return Ok(smooth + jumps);
    }
    let hx = (region.hi[0] - region.lo[0]) / grid as f64;
    let hy = (region.hi[1] - region.lo[1]) / grid as f64;
    let mut sum = 0.0;
    for i in 0..grid {
        let x = region.lo[0] + hx * (i as f64 + 0.5);
        let mut row = 0.0;
        for j in 0..grid {
            let y = region.lo[1] + hy * (j as f64 + 0.5);
            let gx = (u.eval(&[x + 0.5 * hx, y]) - u.eval(&[x - 0.5 * hx, y])) / hx;
            let gy = (u.eval(&[x, y + 0.5 * hy]) - u.eval(&[x, y - 0.5 * hy])) / hy;
            row += gx.hypot(gy);
        }
        sum += row;
    }
    Ok(sum * hx * hy)
}

/// Writes one row per grid point: coordinates then value.
pub fn write_grid_csv(u: &TestFunction, domain: &Domain, mut out: impl Write) -> Result<()> {
    u.check_domain(domain)?;
    let bb = domain.bounding_box();
    let grid = u.grid_for(domain.dim());
    if domain.dim() == 1 {
        writeln!(out, "x,value")?;
        for i in 0..=grid {
            let x = bb.lo[0] + (bb.hi[0] - bb.lo[0]) * i as f64 / grid as f64;
            writeln!(out, "{:.16e},{:.16e}", x, u.eval1(x))?;
        }
    } else if domain.dim() == 2 {
        writeln!(out, "x,y,value")?;
        for i in 0..=grid {
            let x = bb.lo[0] + (bb.hi[0] - bb.lo[0]) * i as f64 / grid as f64;
            for j in 0..=grid {
                let y = bb.lo[1] + (bb.hi[1] - bb.lo[1]) * j as f64 / grid as f64;
                if domain.contains(&[x, y]) {
                    writeln!(out, "{:.16e},{:.16e},{:.16e}", x, y, u.eval(&[x, y]))?;
                }
            }
        }
    } else {
        return Err(Error::Unsupported("grid export above two dimensions".into()));
    }
    Ok(())
}

/// One-dimensional battery on `(0, 2D)`.
pub fn battery_1d(half_length: f64) -> Result<Vec<(String, TestFunction)>> {
    let l = 2.0 * half_length;
    let d = Domain::interval(half_length)?;
    Ok(vec![
        ("linear".into(), TestFunction::linear()),
        ("linear-offset".into(), TestFunction::linear_with(-2.0, 3.0, 0)),
        ("bump-center".into(), TestFunction::bump(vec![0.5 * l], 0.25 * l, 1.0)?),
        ("bump-offcenter".into(), TestFunction::bump(vec![0.3 * l], 0.2 * l, 1.0)?),
        (
            "bump-pair".into(),
            TestFunction::bump_sum(vec![
                Bump {
                    center: vec![0.3 * l],
                    radius: 0.15 * l,
                    amplitude: 1.0,
                },
                Bump {
                    center: vec![0.65 * l],
                    radius: 0.2 * l,
                    amplitude: -0.6,
                },
            ])?,
        ),
        (
            "step".into(),
            TestFunction::step(
                0.0,
                vec![Jump {
                    at: 0.35 * l,
                    height: 1.0,
                }],
            )?,
        ),
        (
            "staircase".into(),
            TestFunction::step(
                0.0,
                vec![
                    Jump {
                        at: 0.25 * l,
                        height: 1.0,
                    },
                    Jump {
                        at: 0.6 * l,
                        height: -2.0,
                    },
                ],
            )?,
        ),
        (
            "zigzag".into(),
            TestFunction::piecewise_linear(
                vec![0.0, 0.25 * l, 0.5 * l, 0.75 * l, l],
                vec![0.0, 1.0, -0.5, 0.5, 0.0],
            )?,
        ),
        (
            "ramp-cutoff".into(),
            TestFunction::linear().multiplied_by(Cutoff::ClampedLinear {
                start: 0.1 * l,
                end: 0.4 * l,
            }),
        ),
        ("plateau".into(), TestFunction::plateau(1.0, 0.1 * l, 0.2 * l, d)?),
        (
            "tent".into(),
            TestFunction::piecewise_linear(vec![0.0, 0.4 * l, l], vec![0.0, 1.0, 0.0])?,
        ),
    ])
}

/// Two-dimensional battery on the unit square.
pub fn battery_2d() -> Result<Vec<(String, TestFunction)>> {
    let grid = 256;
    Ok(vec![
        ("linear-x".into(), TestFunction::linear_with(1.0, 0.0, 0).with_grid(grid)),
        ("linear-y".into(), TestFunction::linear_with(1.0, 0.0, 1).with_grid(grid)),
        ("bump-center".into(), TestFunction::bump(vec![0.5, 0.5], 0.3, 1.0)?.with_grid(grid)),
        ("bump-offcenter".into(), TestFunction::bump(vec![0.35, 0.6], 0.25, 1.0)?.with_grid(grid)),
        ("tensor".into(), TestFunction::tensor_profile(0.5, 0.3, 1.0)?.with_grid(grid)),
        (
            "bump-pair".into(),
            TestFunction::bump_sum(vec![
                Bump {
                    center: vec![0.3, 0.3],
                    radius: 0.2,
                    amplitude: 1.0,
                },
                Bump {
                    center: vec![0.7, 0.65],
                    radius: 0.25,
                    amplitude: 0.5,
                },
            ])?
            .with_grid(grid),
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> Region {
        Region::interval(0.0, 1.0)
    }

    #[test]
    fn averages() {
        let u = TestFunction::linear();
        assert!((average(&u, &unit()).unwrap() - 0.5).abs() < 1e-15);
        assert!((average(&u, &Region::interval(0.0, 0.5)).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(average(&u, &Region::interval(0.3, 0.3)), Err(Error::EmptyRegion)));
    }

    #[test]
    fn bump_average_matches_refined_grid() {
        let u = TestFunction::bump(vec![0.5], 0.3, 1.0).unwrap();
        let e = Region::interval(0.2, 0.8);
        let coarse = average(&u, &e).unwrap();
        let fine = average(&u.clone().with_grid(1 << 16), &e).unwrap();
        assert!(coarse > 0.0);
        assert!((coarse - fine).abs() < 1e-6);
    }

    #[test]
    fn total_variation_examples() {
        let d1 = Domain::interval(0.5).unwrap();
        assert!((tv_seminorm(&TestFunction::linear(), &d1).unwrap() - 1.0).abs() < 1e-14);
        let step = TestFunction::step(0.0, vec![Jump { at: 1.0, height: 2.0 }]).unwrap();
        let d2 = Domain::interval(1.0).unwrap();
        assert!((tv_seminorm(&step, &d2).unwrap() - 2.0).abs() < 1e-15);
        let bump = TestFunction::bump(vec![0.5], 0.3, 1.7).unwrap();
        assert!((tv_seminorm(&bump, &d1).unwrap() - 3.4).abs() < 1e-6);
        let known = TestFunction::linear().with_known_tv(5.0);
        assert_eq!(tv_seminorm(&known, &d1).unwrap(), 5.0);
    }

    #[test]
    fn tv_2d_converges_to_exact() {
        // TV of the tensor profile on (-1,1)x(0,1) is 2 * amplitude * height.
        let u = TestFunction::tensor_profile(0.0, 0.5, 1.0).unwrap();
        let d = Domain::axis_box(2, 1, 1.0).unwrap();
        let coarse = tv_seminorm(&u.clone().with_grid(64), &d).unwrap();
        let fine = tv_seminorm(&u.with_grid(256), &d).unwrap();
        assert!((fine - 2.0).abs() < (coarse - 2.0).abs() + 1e-12);
        assert!((fine - 2.0).abs() < 1e-3, "{fine}");
        let lin = TestFunction::linear_with(1.0, 0.0, 1).with_grid(32);
        assert!((tv_seminorm(&lin, &Domain::unit_square()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l1_examples() {
        let d1 = Domain::interval(0.5).unwrap();
        assert!((l1_norm(&TestFunction::linear(), &d1).unwrap() - 0.5).abs() < 1e-15);
        let step = TestFunction::step(0.0, vec![Jump { at: 1.0, height: 1.0 }]).unwrap();
        assert!((l1_norm(&step, &Domain::interval(1.0).unwrap()).unwrap() - 1.0).abs() < 1e-15);
        let bump = TestFunction::bump(vec![0.5], 0.3, 1.0).unwrap();
        let v = l1_norm(&bump, &d1).unwrap();
        let fine = l1_norm(&bump.with_grid(1 << 16), &d1).unwrap();
        assert!((v - fine).abs() < 1e-6);
    }

    #[test]
    fn plateau_shape() {
        let d = Domain::interval(1.0).unwrap();
        let u = TestFunction::plateau(2.0, 0.1, 0.2, d.clone()).unwrap();
        assert_eq!(u.eval1(0.05), 2.0);
        assert_eq!(u.eval1(1.95), 2.0);
        assert_eq!(u.eval1(1.0), 0.0);
        assert!((u.eval1(0.2) - 1.0).abs() < 1e-15);
        assert!((tv_seminorm(&u, &d).unwrap() - 4.0).abs() < 1e-12);
        assert!(TestFunction::plateau(0.0, 0.1, 0.2, d).is_err());
    }

    #[test]
    fn json_round_trip() {
        let u = TestFunction::linear()
            .multiplied_by(Cutoff::ClampedLinear { start: 0.0, end: 0.5 })
            .with_known_l1(0.1);
        let s = serde_json::to_string(&u).unwrap();
        let back: TestFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, u);
        let parsed: TestFunction = serde_json::from_str(r#"{"descriptor":{"kind":"linear","slope":1.0,"intercept":0.0}}"#).unwrap();
        assert_eq!(parsed, TestFunction::linear());
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        write_grid_csv(&TestFunction::linear().with_grid(4), &Domain::interval(0.5).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().nth(5).unwrap().starts_with("1.0000000000000000e0,"));
    }

    #[test]
    fn dimension_checks() {
        let u = TestFunction::bump(vec![0.5, 0.5], 0.2, 1.0).unwrap();
        assert!(u.check_domain(&Domain::interval(1.0).unwrap()).is_err());
        assert!(u.check_domain(&Domain::unit_square()).is_ok());
    }

    #[test]
    fn batteries_are_nonconstant() {
        let d = Domain::interval(1.0).unwrap();
        for (name, u) in battery_1d(1.0).unwrap() {
            assert!(tv_seminorm(&u, &d).unwrap() > 0.0, "{name}");
        }
        assert!(battery_2d().unwrap().len() >= 6);
    }

    proptest! {
        #[test]
        fn average_ignores_odd_perturbation(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            // slope * (x - 1/2) has zero mean on (0, 1)
            let u = TestFunction::bump(vec![0.4], 0.3, a).unwrap();
            let v = TestFunction::bump_sum(vec![
                Bump { center: vec![0.4], radius: 0.3, amplitude: a },
                Bump { center: vec![0.25], radius: 0.1, amplitude: b },
                Bump { center: vec![0.75], radius: 0.1, amplitude: -b },
            ]).unwrap();
            let du = average(&u, &unit()).unwrap();
            let dv = average(&v, &unit()).unwrap();
            prop_assert!((du - dv).abs() < 1e-12);
        }

        #[test]
        fn tv_ignores_constants(c in -10.0f64..10.0) {
            let d = Domain::interval(0.5).unwrap();
            let u = TestFunction::bump(vec![0.5], 0.3, 1.0).unwrap();
            let base = tv_seminorm(&u, &d).unwrap();
            prop_assert!((tv_seminorm(&u.clone().shifted(c), &d).unwrap() - base).abs() < 1e-14);
            let mean = domain_average(&u, &d).unwrap();
            prop_assert!((tv_seminorm(&u.shifted(-mean), &d).unwrap() - base).abs() < 1e-14);
        }
    }
}
