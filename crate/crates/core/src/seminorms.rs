//! Gagliardo `W^{s,1}` seminorms, the BBM constant, and Poincaré-type
//! measurements built on them.

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{self, Jump, TestFunction};
use crate::geometry::{dyadic_layers, Domain, Polygon2D, Region};
use crate::quad::{self, QuadOptions, GL3_NODES, GL3_WEIGHTS};

/// Below this lag, relative to the domain size, increments are formed from
/// derivatives instead of differences of function values.
const SMALL_LAG: f64 = 1e-4;

/// Largest relative standard error accepted from the Monte Carlo estimator.
pub const MC_MAX_RELATIVE_ERROR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    AdaptiveQuadrature1d,
    TensorQuadrature,
    MonteCarloPairs,
}

/// Smoothness index of a seminorm: fractional `s` or the BV endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Fractional(f64),
    Bv,
}

impl Serialize for Order {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Order::Fractional(s) => ser.serialize_f64(*s),
            Order::Bv => ser.serialize_str("BV"),
        }
    }
}

impl<'de> Deserialize<'de> for Order {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(s) => Ok(Order::Fractional(s)),
            Raw::Tag(t) if t == "BV" => Ok(Order::Bv),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unknown order tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeminormEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: Method,
    pub s: Order,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
}

impl SeminormEstimate {
    fn deterministic(value: f64, method: Method, s: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            method,
            s: Order::Fractional(s),
            seed: None,
            budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub budget: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            budget: 1_000_000,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SeminormOptions {
    pub quad: QuadOptions,
    pub mc: McOptions,
}

impl Default for SeminormOptions {
    fn default() -> Self {
        Self {
            quad: QuadOptions {
                abs_tol: 1e-13,
                rel_tol: 1e-8,
                max_intervals: 4000,
            },
            mc: McOptions::default(),
        }
    }
}

fn check_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
    }
    Ok(())
}

/// `[u]` for `u = slope * x` on an interval of length `len`:
/// `2 |slope| len^{2-s} / ((1-s)(2-s))`.
pub fn gagliardo_linear_closed_form(slope: f64, len: f64, s: f64) -> Result<SeminormEstimate> {
    check_order(s)?;
    let v = 2.0 * slope.abs() * len.powf(2.0 - s) / ((1.0 - s) * (2.0 - s));
    Ok(SeminormEstimate::deterministic(v, Method::ClosedForm, s))
}

struct Increments<'a> {
    u: &'a TestFunction,
    jumps: Vec<Jump>,
    kinks: Vec<f64>,
    small: f64,
}

impl<'a> Increments<'a> {
    fn new(u: &'a TestFunction, len: f64) -> Self {
        Self {
            u,
            jumps: u.jumps1(),
            kinks: u.breakpoints1(),
            small: SMALL_LAG * len,
        }
    }

    /// `(u(y + t) - u(y)) / t`. For small `t` the smooth part comes from a
    /// two-point Gauss rule on `u'` over each smooth piece of `(y, y + t)`.
    fn quotient(&self, y: f64, t: f64) -> f64 {
        if t >= self.small {
            return (self.u.eval1(y + t) - self.u.eval1(y)) / t;
        }
        let end = y + t;
        let jumps: f64 = self
            .jumps
            .iter()
            .filter(|j| j.at > y && j.at <= end)
            .map(|j| j.height / t)
            .sum();
        jumps + self.smooth_part(y, t, self.kinks.iter().map(|p| p - y))
    }

    /// Smooth part of the small-lag quotient, with the pieces of `(0, t)` cut
    /// at the given offsets from `y`. Offsets keep piece lengths exact when
    /// `t` is far below `ulp(y)`.
    fn smooth_part(&self, y: f64, t: f64, cuts: impl Iterator<Item = f64>) -> f64 {
        let g = 0.5 / 3f64.sqrt();
        let mut q = 0.0;
        let mut piece = |a: f64, b: f64| {
            let (m, h) = (y + 0.5 * (a + b), b - a);
            q += h / t * 0.5 * (self.u.derivative1(m - g * h) + self.u.derivative1(m + g * h));
        };
        let mut cuts: Vec<f64> = cuts.filter(|c| *c > 0.0 && *c < t).collect();
        cuts.sort_by(f64::total_cmp);
        let mut lo = 0.0;
        for c in cuts {
            piece(lo, c);
            lo = c;
        }
        piece(lo, t);
        q
    }

    /// `int_a^{b-t} |u(y + t) - u(y)| / t dy`. At small lags each jump window
    /// `p - t < y <= p` is integrated in the offset `p - y`, since its
    /// floating-point width is unreliable once `t` nears `ulp(p)`.
    fn lag_mass(&self, a: f64, b: f64, t: f64, opts: QuadOptions) -> Result<f64> {
        let hi = b - t;
        if hi <= a {
            return Ok(0.0);
        }
        let mut inside: Vec<Jump> = self.jumps.iter().filter(|j| j.at > a && j.at < b).cloned().collect();
        inside.sort_by(|x, y| x.at.total_cmp(&y.at));
        let disjoint = inside.windows(2).all(|w| w[1].at - w[0].at > t);
        let breaks: Vec<f64> = self.kinks.iter().flat_map(|p| [*p, p - t]).collect();
        if t >= self.small || inside.is_empty() || !disjoint {
            return quad::integrate(|y| self.quotient(y, t).abs(), a, hi, &breaks, opts).map(|r| r.value);
        }
        let smooth = |y: f64| self.smooth_part(y, t, self.kinks.iter().map(|p| p - y)).abs();
        let mut total = 0.0;
        let mut lo = a;
        for j in &inside {
            let seg_hi = (j.at - t).min(hi);
            if seg_hi > lo {
                total += quad::integrate(smooth, lo, seg_hi, &breaks, opts)?.value;
            }
            let (t0, t1) = ((j.at + t - b).max(0.0), t.min(j.at - a));
            if t1 > t0 {
                let window = |tau: f64| {
                    let cuts = self.kinks.iter().map(|k| (k - j.at) + tau);
                    (j.height / t + self.smooth_part(j.at - tau, t, cuts)).abs()
                };
                total += quad::integrate(window, t0, t1, &[], opts)?.value;
            }
            lo = lo.max(j.at);
        }
        if hi > lo {
            total += quad::integrate(smooth, lo, hi, &breaks, opts)?.value;
        }
        Ok(total)
    }
}

/// `int_a^b int_a^b |u(x) - u(y)| / |x - y|^{1+s}` by adaptive quadrature in
/// the lag `t = |x - y|`, after the substitution `z = t^{1-s} / (1-s)`.
pub fn gagliardo_1d(u: &TestFunction, a: f64, b: f64, s: f64) -> Result<SeminormEstimate> {
    gagliardo_1d_with(u, a, b, s, SeminormOptions::default().quad)
}

pub fn gagliardo_1d_with(u: &TestFunction, a: f64, b: f64, s: f64, opts: QuadOptions) -> Result<SeminormEstimate> {
    check_order(s)?;
    if !(b > a) {
        return Err(Error::EmptyRegion);
    }
    if u.natural_dim().is_some_and(|d| d != 1) {
        return Err(Error::Precondition("one-dimensional seminorm of a multivariate function".into()));
    }
    let len = b - a;
    let inc = Increments::new(u, len);
    let pts: Vec<f64> = inc
        .kinks
        .iter()
        .copied()
        .filter(|p| *p > a && *p < b)
        .chain([a, b])
        .collect();
    let inner_opts = QuadOptions {
        abs_tol: opts.abs_tol * 1e-2,
        rel_tol: opts.rel_tol * 1e-2,
        max_intervals: opts.max_intervals,
    };
    let mut failure = None;
    let k = |t: f64| -> f64 {
        match inc.lag_mass(a, b, t, inner_opts) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let exponent = 1.0 / (1.0 - s);
    let t_of = |z: f64| ((1.0 - s) * z).powf(exponent);
    let z_of = |t: f64| t.powf(1.0 - s) / (1.0 - s);
    // The lag profile changes character where a shifted breakpoint crosses another one.
    let mut zbreaks = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            let d = (p - q).abs();
            if d > 0.0 && d < len {
                zbreaks.push(z_of(d));
            }
        }
    }
    let mut k = k;
    let result = quad::integrate(|z| k(t_of(z)), 0.0, z_of(len), &zbreaks, opts);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(SeminormEstimate::deterministic(
        2.0 * result?.value,
        Method::AdaptiveQuadrature1d,
        s,
    ))
}

/// `|u(x + rho e) - u(x)| / rho`, switching to the directional derivative at
/// the midpoint for lags below `small`.
fn quotient_2d(u: &TestFunction, x: [f64; 2], e: [f64; 2], rho: f64, small: f64) -> f64 {
    let y = [x[0] + rho * e[0], x[1] + rho * e[1]];
    if rho >= small {
        (u.eval(&y) - u.eval(&x)).abs() / rho
    } else {
        let m = [x[0] + 0.5 * rho * e[0], x[1] + 0.5 * rho * e[1]];
        let g = u.gradient(&m);
        (g[0] * e[0] + g[1] * e[1]).abs()
    }
}

fn rectangle(region: &Region) -> Result<Domain> {
    if region.dim() != 2 {
        return Err(Error::Precondition("two-dimensional region required".into()));
    }
    let (lo, hi) = (&region.lo, &region.hi);
    Ok(Domain::Polygon(Polygon2D::new(vec![
        [lo[0], lo[1]],
        [hi[0], lo[1]],
        [hi[0], hi[1]],
        [lo[0], hi[1]],
    ])?))
}

/// Stratified Monte Carlo estimate of the two-dimensional seminorm.
///
/// `x` is jittered over a `k x k` stratification of the bounding box, the
/// direction is uniform, and the lag is drawn with density proportional to
/// `rho^{-s}` so that each pair carries weight `|u(y) - u(x)| / rho` times a
/// constant. Each stratum owns its random stream, and stratum results are
/// reduced in index order, so the value does not depend on `workers`.
pub fn gagliardo_2d_mc(u: &TestFunction, domain: &Domain, s: f64, opts: McOptions) -> Result<SeminormEstimate> {
    check_order(s)?;
    if domain.dim() != 2 {
        return Err(Error::Precondition("Monte Carlo seminorm needs a two-dimensional domain".into()));
    }
    u.check_domain(domain)?;
    if opts.budget < 16 {
        return Err(Error::BudgetTooSmall {
            relative: f64::INFINITY,
            limit: MC_MAX_RELATIVE_ERROR,
        });
    }
    let bb = domain.bounding_box();
    let (w, h) = (bb.hi[0] - bb.lo[0], bb.hi[1] - bb.lo[1]);
    let rho_max = w.hypot(h);
    let small = SMALL_LAG * rho_max;
    let strata = ((opts.budget as f64 / 16.0).sqrt().floor() as usize).clamp(1, 64);
    let per = opts.budget / (strata * strata);
    let constant = bb.measure() * 2.0 * PI * rho_max.powf(1.0 - s) / (1.0 - s);
    let exponent = 1.0 / (1.0 - s);

    let stratum = |idx: usize| -> (f64, f64) {
        let (i, j) = (idx / strata, idx % strata);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(idx as u64);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..per {
            let x = [
                bb.lo[0] + w * (i as f64 + rng.random::<f64>()) / strata as f64,
                bb.lo[1] + h * (j as f64 + rng.random::<f64>()) / strata as f64,
            ];
            let theta = 2.0 * PI * rng.random::<f64>();
            let v = 1.0 - rng.random::<f64>();
            let rho = rho_max * v.powf(exponent);
            let e = [theta.cos(), theta.sin()];
            let y = [x[0] + rho * e[0], x[1] + rho * e[1]];
            let val = if rho > 0.0 && domain.contains(&x) && domain.contains(&y) {
                constant * quotient_2d(u, x, e, rho, small)
            } else {
                0.0
            };
            sum += val;
            sum2 += val * val;
        }
        let n = per as f64;
        let mean = sum / n;
        let var = ((sum2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
        (mean, var / n)
    };

    let parts: Vec<(f64, f64)> = if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::Io(e.to_string()))?;
        pool.install(|| (0..strata * strata).into_par_iter().map(stratum).collect())
    } else {
        (0..strata * strata).map(stratum).collect()
    };
    let cells = (strata * strata) as f64;
    let value = parts.iter().map(|p| p.0).sum::<f64>() / cells;
    let var = parts.iter().map(|p| p.1).sum::<f64>() / (cells * cells);
    if !value.is_finite() {
        return Err(Error::NonFinite("Monte Carlo seminorm".into()));
    }
    let std_error = var.sqrt();
    if value > 0.0 && std_error / value > MC_MAX_RELATIVE_ERROR {
        return Err(Error::BudgetTooSmall {
            relative: std_error / value,
            limit: MC_MAX_RELATIVE_ERROR,
        });
    }
    Ok(SeminormEstimate {
        value,
        std_error,
        method: Method::MonteCarloPairs,
        s: Order::Fractional(s),
        seed: Some(opts.seed),
        budget: Some(strata * strata * per),
    })
}

fn gauss_points(a: f64, b: f64, cells: usize, cuts: &[f64]) -> Vec<(f64, f64)> {
    let mut nodes: Vec<f64> = (0..=cells).map(|i| a + (b - a) * i as f64 / cells as f64).collect();
    nodes.extend(cuts.iter().copied().filter(|c| *c > a && *c < b));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let mut out = Vec::with_capacity(3 * nodes.len());
    for w in nodes.windows(2) {
        let c = 0.5 * (w[0] + w[1]);
        let r = 0.5 * (w[1] - w[0]);
        for (x, wt) in GL3_NODES.iter().zip(GL3_WEIGHTS) {
            out.push((c + r * x, wt * r));
        }
    }
    out
}

/// Deterministic tensor-product oracle for the seminorm on a rectangle:
/// `2 int_0^pi int |u(x + rho e) - u(x)| rho^{-1-s} dx drho dtheta`, with
/// `resolution` Gauss cells per direction in angle, lag and each axis of the
/// overlap rectangle.
pub fn gagliardo_2d_tensor(u: &TestFunction, region: &Region, s: f64, resolution: usize) -> Result<SeminormEstimate> {
    check_order(s)?;
    rectangle(region)?;
    let (w, h) = (region.hi[0] - region.lo[0], region.hi[1] - region.lo[1]);
    let small = SMALL_LAG * w.hypot(h);
    let corner = h.atan2(w);
    let thetas = gauss_points(0.0, PI, resolution, &[corner, 0.5 * PI, PI - corner]);
    let total: f64 = thetas
        .par_iter()
        .map(|&(theta, wt)| {
            let e = [theta.cos(), theta.sin()];
            let mut rho_max = f64::INFINITY;
            if e[0].abs() > 1e-300 {
                rho_max = rho_max.min(w / e[0].abs());
            }
            if e[1].abs() > 1e-300 {
                rho_max = rho_max.min(h / e[1].abs());
            }
            let zmax = rho_max.powf(1.0 - s) / (1.0 - s);
            let mut acc = 0.0;
            for (z, wz) in gauss_points(0.0, zmax, resolution, &[]) {
                let rho = ((1.0 - s) * z).powf(1.0 / (1.0 - s));
                let d = [rho * e[0], rho * e[1]];
                let x0 = [region.lo[0].max(region.lo[0] - d[0]), region.lo[1].max(region.lo[1] - d[1])];
                let x1 = [region.hi[0].min(region.hi[0] - d[0]), region.hi[1].min(region.hi[1] - d[1])];
                if x1[0] <= x0[0] || x1[1] <= x0[1] {
                    continue;
                }
                let mut inner = 0.0;
                for (xa, wa) in gauss_points(x0[0], x1[0], resolution, &[]) {
                    for (xb, wb) in gauss_points(x0[1], x1[1], resolution, &[]) {
                        inner += wa * wb * quotient_2d(u, [xa, xb], e, rho, small);
                    }
                }
                acc += wz * inner;
            }
            wt * acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(SeminormEstimate::deterministic(
        2.0 * total,
        Method::TensorQuadrature,
        s,
    ))
}

/// Seminorm on a box region: adaptive quadrature in 1D, Monte Carlo in 2D.
pub fn gagliardo_on_region(u: &TestFunction, region: &Region, s: f64, opts: &SeminormOptions) -> Result<SeminormEstimate> {
    match region.dim() {
        1 => gagliardo_1d_with(u, region.lo[0], region.hi[0], s, opts.quad),
        2 => gagliardo_2d_mc(u, &rectangle(region)?, s, opts.mc),
        d => Err(Error::Unsupported(format!("seminorm in dimension {d}"))),
    }
}

/// Seminorm on a domain: adaptive quadrature on intervals, Monte Carlo in 2D.
pub fn gagliardo(u: &TestFunction, domain: &Domain, s: f64, opts: &SeminormOptions) -> Result<SeminormEstimate> {
    u.check_domain(domain)?;
    match domain.dim() {
        1 => {
            let b = domain.as_box().expect("one-dimensional domains are intervals");
            gagliardo_1d_with(u, b.lo[0], b.hi[0], s, opts.quad)
        }
        2 => gagliardo_2d_mc(u, domain, s, opts.mc),
        d => Err(Error::Unsupported(format!("seminorm in dimension {d}"))),
    }
}

/// `Gamma(n / 2)` for a positive integer `n`.
fn gamma_half_integer(n: u32) -> f64 {
    let mut g = if n.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut x = if n.is_multiple_of(2) { 1.0 } else { 0.5 };
    while x < n as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

/// `int_{S^{d-1}} |e . w| dw = 2 pi^{(d-1)/2} / Gamma((d+1)/2)`.
pub fn bbm_constant(d: u32) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    Ok(2.0 * PI.powf((d as f64 - 1.0) / 2.0) / gamma_half_integer(d + 1))
}

/// `(s, (1-s) [u]_{W^{s,1}})` for each `s`.
pub fn bbm_limit_sweep(u: &TestFunction, domain: &Domain, s_list: &[f64], opts: &SeminormOptions) -> Result<Vec<(f64, f64)>> {
    s_list
        .iter()
        .map(|&s| Ok((s, (1.0 - s) * gagliardo(u, domain, s, opts)?.value)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareMeasurement {
    pub lambda: f64,
    pub s: f64,
    pub d: usize,
    pub oscillation: f64,
    pub seminorm: f64,
    pub measured_constant: f64,
}

fn cube_side(region: &Region) -> Result<f64> {
    let side = region.hi[0] - region.lo[0];
    if (0..region.dim()).any(|i| ((region.hi[i] - region.lo[i]) - side).abs() > 1e-12 * side.abs()) {
        return Err(Error::Geometry("region is not a cube".into()));
    }
    if !(side > 0.0) {
        return Err(Error::EmptyRegion);
    }
    Ok(side)
}

/// Smallest constant in `mean |u - (u)| <= C lambda^{s-d} (1-s) [u]` on the cube.
pub fn poincare_measure(u: &TestFunction, cube: &Region, s: f64, opts: &SeminormOptions) -> Result<PoincareMeasurement> {
    let lambda = cube_side(cube)?;
    let d = cube.dim();
    let avg = functions::average(u, cube)?;
    let oscillation = functions::integrate_abs_deviation(u, cube, avg)? / cube.measure();
    let seminorm = gagliardo_on_region(u, cube, s, opts)?.value;
    if seminorm == 0.0 {
        return Err(Error::ZeroSeminorm("Poincaré constant undefined for a constant function".into()));
    }
    Ok(PoincareMeasurement {
        lambda,
        s,
        d,
        oscillation,
        seminorm,
        measured_constant: oscillation / (lambda.powf(s - d as f64) * (1.0 - s) * seminorm),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvgChainCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub holds: bool,
}

/// `|(u)_E - (u)_F| <= C lambda^{s-d} (1-s) |G| / min(|E|, |F|) [u]_{W^{s,1}(G)}`.
/// Uses the measured Poincaré constant of `G` unless `constant` is given.
pub fn avg_chain_check(
    u: &TestFunction,
    e: &Region,
    f: &Region,
    g: &Region,
    s: f64,
    constant: Option<f64>,
    opts: &SeminormOptions,
) -> Result<AvgChainCheck> {
    if !e.interior_disjoint(f) {
        return Err(Error::Geometry("E and F overlap".into()));
    }
    if !g.contains_region(e) || !g.contains_region(f) {
        return Err(Error::Geometry("E and F must lie inside G".into()));
    }
    let lambda = cube_side(g)?;
    let d = g.dim() as f64;
    let lhs = (functions::average(u, e)? - functions::average(u, f)?).abs();
    let seminorm = gagliardo_on_region(u, g, s, opts)?.value;
    let constant = match constant {
        Some(c) => c,
        None => poincare_measure(u, g, s, opts)?.measured_constant,
    };
    let rhs = constant * lambda.powf(s - d) * (1.0 - s) * g.measure() / e.measure().min(f.measure()) * seminorm;
    Ok(AvgChainCheck {
        lhs,
        rhs,
        constant,
        holds: lhs <= rhs * (1.0 + 1e-12),
    })
}

/// `int |u - (u)_Omega| / [u]_BV`.
pub fn bv_poincare_measure(u: &TestFunction, domain: &Domain) -> Result<f64> {
    let tv = functions::tv_seminorm(u, domain)?;
    if tv == 0.0 {
        return Err(Error::ZeroSeminorm("total variation vanishes".into()));
    }
    let region = domain
        .as_box()
        .ok_or_else(|| Error::Unsupported(format!("BV Poincaré on {domain}")))?;
    let avg = functions::average(u, &region)?;
    Ok(functions::integrate_abs_deviation(u, &region, avg)? / tv)
}

/// `||xi u|| / ||u||` in the full `W^{s,1}` norm `[.] + ||.||_{L1}`.
pub fn cutoff_multiplication_check(
    u: &TestFunction,
    cutoff: functions::Cutoff,
    region: &Region,
    s: f64,
    opts: &SeminormOptions,
) -> Result<f64> {
    let norm = |v: &TestFunction| -> Result<f64> {
        Ok(gagliardo_on_region(v, region, s, opts)?.value + functions::l1_on_region(v, region)?)
    };
    let base = norm(u)?;
    if base == 0.0 {
        return Err(Error::ZeroSeminorm("W^{s,1} norm of u vanishes".into()));
    }
    Ok(norm(&u.clone().multiplied_by(cutoff))? / base)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `sum_{k=l}^{-2} [u]_{A_k cup A_{k+1}} <= 2 [u]_{(3^l, 1)}` for the one-dimensional layers.
pub fn layer_pair_summation_check(u: &TestFunction, l: i32, s: f64, opts: &SeminormOptions) -> Result<SummationCheck> {
    let layers = dyadic_layers(1, 1, l)?;
    let mut lhs = 0.0;
    for pair in layers.windows(2) {
        let lo = pair[0].slab().lo[0];
        let hi = pair[1].slab().hi[0];
        lhs += gagliardo_1d_with(u, lo, hi, s, opts.quad)?.value;
    }
    let rhs = 2.0 * gagliardo_1d_with(u, layers[0].slab().lo[0], 1.0, s, opts.quad)?.value;
    Ok(SummationCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-10),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::Cutoff;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn linear_closed_form() {
        let u = TestFunction::linear();
        for s in [0.5, 0.7, 0.9] {
            let exact = 2.0 / ((1.0 - s) * (2.0 - s));
            let v = gagliardo_1d(&u, 0.0, 1.0, s).unwrap();
            assert!(rel(v.value, exact) < 1e-6, "s={s} {}", v.value);
            assert_eq!(v.method, Method::AdaptiveQuadrature1d);
            assert!(rel(gagliardo_linear_closed_form(1.0, 1.0, s).unwrap().value, exact) < 1e-15);
        }
        assert!(rel(gagliardo_1d(&u, 0.0, 1.0, 0.5).unwrap().value, 8.0 / 3.0) < 1e-7);
        assert!(rel(gagliardo_1d(&u, 0.0, 1.0, 0.9).unwrap().value, 18.181_818_181_818_18) < 1e-6);
    }

    #[test]
    fn constant_has_zero_seminorm() {
        let v = gagliardo_1d(&TestFunction::constant(3.0), 0.0, 1.0, 0.5).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(gagliardo_1d(&TestFunction::linear(), 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn step_seminorm_closed_form() {
        // one unit jump at c in (0,1): 2 int_0^c int_c^1 (y-x)^{-1-s}
        for (c, s) in [(0.4, 0.6), (0.5, 0.9), (0.3, 0.95)] {
            let u = TestFunction::step(0.0, vec![Jump { at: c, height: 1.0 }]).unwrap();
            let f = |x: f64| x.powf(1.0 - s);
            let exact = 2.0 / (s * (1.0 - s)) * (f(c) + f(1.0 - c) - 1.0);
            let v = gagliardo_1d(&u, 0.0, 1.0, s).unwrap().value;
            assert!(rel(v, exact) < 1e-6, "s={s}: {v} {exact}");
        }
    }

    #[test]
    fn bbm_constants() {
        assert_eq!(bbm_constant(1).unwrap(), 2.0);
        assert!(rel(bbm_constant(2).unwrap(), 4.0) < 1e-15);
        assert!(rel(bbm_constant(3).unwrap(), 2.0 * PI) < 1e-15);
        assert!(bbm_constant(0).is_err());
    }

    #[test]
    fn bbm_sweep_linear() {
        let d = Domain::interval(0.5).unwrap();
        let sweep = bbm_limit_sweep(&TestFunction::linear(), &d, &[0.9, 0.95, 0.99], &SeminormOptions::default()).unwrap();
        assert!(sweep[0].1 < sweep[1].1 && sweep[1].1 < sweep[2].1);
        assert!(rel(sweep[2].1, 2.0 / (2.0 - 0.99)) < 1e-5);
        let zero = bbm_limit_sweep(&TestFunction::constant(1.0), &d, &[0.9], &SeminormOptions::default()).unwrap();
        assert_eq!(zero[0].1, 0.0);
    }

    #[test]
    fn poincare_linear() {
        let opts = SeminormOptions::default();
        let p = poincare_measure(&TestFunction::linear(), &Region::interval(0.0, 1.0), 0.5, &opts).unwrap();
        assert!(rel(p.measured_constant, 0.1875) < 1e-6);
        for lambda in [1.0 / 3.0, 3.0] {
            let u = TestFunction::linear_with(1.0 / lambda, 0.0, 0);
            let q = poincare_measure(&u, &Region::interval(0.0, lambda), 0.5, &opts).unwrap();
            assert!(rel(q.measured_constant, p.measured_constant) < 1e-5);
        }
        let err = poincare_measure(&TestFunction::constant(2.0), &Region::interval(0.0, 1.0), 0.5, &opts);
        assert!(matches!(err, Err(Error::ZeroSeminorm(_))));
    }

    #[test]
    fn poincare_odd_function_has_zero_mean() {
        let u = TestFunction::linear_with(1.0, -0.5, 0);
        let p = poincare_measure(&u, &Region::interval(0.0, 1.0), 0.5, &SeminormOptions::default()).unwrap();
        let l1 = functions::l1_on_region(&u, &Region::interval(0.0, 1.0)).unwrap();
        assert!((p.oscillation - l1).abs() < 1e-14);
    }

    #[test]
    fn average_chaining() {
        let opts = SeminormOptions::default();
        let u = TestFunction::linear();
        let (e, f, g) = (Region::interval(0.0, 0.5), Region::interval(0.5, 1.0), Region::interval(0.0, 1.0));
        let c = avg_chain_check(&u, &e, &f, &g, 0.5, None, &opts).unwrap();
        assert!((c.lhs - 0.5).abs() < 1e-14);
        assert!(rel(c.rhs, c.constant * 0.5 * 2.0 * 8.0 / 3.0) < 1e-6);
        assert!(c.holds);
        let far = avg_chain_check(&u, &Region::interval(0.0, 0.01), &Region::interval(0.95, 0.96), &g, 0.5, None, &opts).unwrap();
        assert!(far.holds);
        assert!(avg_chain_check(&u, &e, &g, &g, 0.5, None, &opts).is_err());
    }

    #[test]
    fn bv_poincare_examples() {
        let d = Domain::interval(0.5).unwrap();
        assert!(rel(bv_poincare_measure(&TestFunction::linear(), &d).unwrap(), 0.25) < 1e-12);
        let step = TestFunction::step(0.0, vec![Jump { at: 1.0, height: 1.0 }]).unwrap();
        assert!(rel(bv_poincare_measure(&step, &Domain::interval(1.0).unwrap()).unwrap(), 1.0) < 1e-12);
        let shifted = TestFunction::linear().shifted(4.0);
        assert!(rel(bv_poincare_measure(&shifted, &d).unwrap(), 0.25) < 1e-12);
        assert!(bv_poincare_measure(&TestFunction::constant(1.0), &d).is_err());
    }

    #[test]
    fn cutoff_ratios() {
        let opts = SeminormOptions::default();
        let u = TestFunction::linear();
        let unit = Region::interval(0.0, 1.0);
        assert!(rel(cutoff_multiplication_check(&u, Cutoff::One, &unit, 0.5, &opts).unwrap(), 1.0) < 1e-12);
        assert_eq!(cutoff_multiplication_check(&u, Cutoff::Zero, &unit, 0.5, &opts).unwrap(), 0.0);
        let xi = Cutoff::ClampedLinear { start: 0.2, end: 0.6 };
        let coarse = cutoff_multiplication_check(&u.clone().with_grid(512), xi, &unit, 0.5, &opts).unwrap();
        let fine = cutoff_multiplication_check(&u.with_grid(8192), xi, &unit, 0.5, &opts).unwrap();
        assert!(coarse.is_finite() && rel(coarse, fine) < 0.02);
    }

    #[test]
    fn layer_pairs() {
        let opts = SeminormOptions::default();
        for (_, u) in functions::battery_1d(0.5).unwrap() {
            let c = layer_pair_summation_check(&u, -4, 0.5, &opts).unwrap();
            assert!(c.holds, "{} > {}", c.lhs, c.rhs);
        }
    }

    #[test]
    fn mc_constant_is_zero() {
        let v = gagliardo_2d_mc(&TestFunction::constant(1.0), &Domain::unit_square(), 0.5, McOptions { budget: 10_000, ..Default::default() }).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn mc_is_deterministic_and_worker_independent() {
        let u = TestFunction::linear();
        let opts = McOptions {
            budget: 40_000,
            seed: 11,
            workers: 1,
        };
        let a = gagliardo_2d_mc(&u, &Domain::unit_square(), 0.5, opts).unwrap();
        let b = gagliardo_2d_mc(&u, &Domain::unit_square(), 0.5, opts).unwrap();
        let c = gagliardo_2d_mc(&u, &Domain::unit_square(), 0.5, McOptions { workers: 4, ..opts }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.value.to_bits(), c.value.to_bits());
    }

    #[test]
    fn mc_agrees_with_tensor_oracle() {
        let u = TestFunction::linear();
        let square = Region::rect([0.0, 0.0], [1.0, 1.0]);
        let oracle = gagliardo_2d_tensor(&u, &square, 0.5, 12).unwrap().value;
        let finer = gagliardo_2d_tensor(&u, &square, 0.5, 20).unwrap().value;
        assert!(rel(oracle, finer) < 1e-4, "{oracle} {finer}");
        let mc = gagliardo_2d_mc(&u, &Domain::unit_square(), 0.5, McOptions { budget: 200_000, seed: 3, workers: 2 }).unwrap();
        assert!((mc.value - finer).abs() < 3.0 * mc.std_error, "{} ± {} vs {finer}", mc.value, mc.std_error);
    }

    #[test]
    fn mc_budget_too_small() {
        let u = TestFunction::bump(vec![0.5, 0.5], 0.05, 1.0).unwrap();
        let r = gagliardo_2d_mc(&u, &Domain::unit_square(), 0.9, McOptions { budget: 64, seed: 1, workers: 1 });
        assert!(matches!(r, Err(Error::BudgetTooSmall { .. })));
    }

    #[test]
    fn order_serialization() {
        assert_eq!(serde_json::to_string(&Order::Bv).unwrap(), "\"BV\"");
        assert_eq!(serde_json::to_string(&Order::Fractional(0.5)).unwrap(), "0.5");
        let back: Order = serde_json::from_str("\"BV\"").unwrap();
        assert_eq!(back, Order::Bv);
    }
}
