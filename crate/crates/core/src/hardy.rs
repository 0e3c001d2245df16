//! Boundary-weighted Hardy integrals and their verification against the
//! `2^m`-envelope inequalities, series sums and failure constructions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{self, Descriptor, TestFunction};
use crate::geometry::{Domain, Region};
use crate::logweights::{self, depths, Tail, WeightChain};
use crate::quad::{self, QuadOptions};
use crate::seminorms::{self, Order, SeminormOptions};

/// Default divergence ceiling, as a multiple of the TV-based right-hand side.
pub const DEFAULT_CEILING_FACTOR: f64 = 1e6;

/// Number of `1/3`-graded breakpoints placed toward the boundary.
const GRADING_LEVELS: i32 = 24;

/// A single evaluation of the weighted integral
/// `int |u - c| / delta^sigma * chain(delta / R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyCase {
    pub u: TestFunction,
    pub domain: Domain,
    pub chain: WeightChain,
    /// `Bv` for the `1/delta` weight, `Fractional(s)` for `1/delta^s`.
    pub order: Order,
    /// Subtract the domain average of `u`.
    pub centered: bool,
    pub alpha: Option<f64>,
    /// Integrate over this sub-box only; it must sit on the lower face of
    /// the last coordinate, where `delta` is the height above that face.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
}

impl HardyCase {
    /// Centered in BV mode, uncentered for fractional orders.
    pub fn new(u: TestFunction, domain: Domain, chain: WeightChain, order: Order) -> Result<Self> {
        u.check_domain(&domain)?;
        domain.check_scale(chain.r())?;
        if let Order::Fractional(s) = order {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
            }
        }
        Ok(Self {
            u,
            domain,
            chain,
            order,
            centered: order == Order::Bv,
            alpha: None,
            region: None,
        })
    }

    pub fn centered(mut self, centered: bool) -> Self {
        self.centered = centered;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn restricted_to(mut self, region: Region) -> Result<Self> {
        let b = self
            .domain
            .as_box()
            .ok_or_else(|| Error::Unsupported(format!("restriction inside {}", self.domain)))?;
        let d = b.dim();
        if region.dim() != d || !b.contains_region(&region) {
            return Err(Error::Geometry("restriction region must lie inside the domain".into()));
        }
        if region.lo[d - 1] != b.lo[d - 1] {
            return Err(Error::Geometry("restriction region must touch the lower face".into()));
        }
        let height = region.hi[d - 1] - region.lo[d - 1];
        let mut clearance = b.hi[d - 1] - region.hi[d - 1];
        for i in 0..d - 1 {
            clearance = clearance.min(region.lo[i] - b.lo[i]).min(b.hi[i] - region.hi[i]);
        }
        if height > clearance {
            return Err(Error::Geometry(
                "restriction region is not dominated by the lower face".into(),
            ));
        }
        self.region = Some(region);
        Ok(self)
    }

    pub fn with_m(&self, m: u32) -> Result<Self> {
        let mut c = self.clone();
        c.chain = self.chain.with_m(m)?;
        Ok(c)
    }

    pub fn with_tail(&self, m: u32, tail: Tail) -> Result<Self> {
        let mut c = self.clone();
        c.chain = WeightChain::failure_regime(m, self.chain.r(), tail)?;
        Ok(c)
    }

    pub fn with_u(&self, u: TestFunction) -> Self {
        let mut c = self.clone();
        c.u = u;
        c
    }

    fn centering(&self) -> Result<f64> {
        if self.centered {
            functions::domain_average(&self.u, &self.domain)
        } else {
            Ok(0.0)
        }
    }

    /// `[u]_BV` on the domain, or on the restriction region.
    pub fn total_variation(&self) -> Result<f64> {
        match &self.region {
            Some(r) => functions::tv_on_region(&self.u, r),
            None => functions::tv_seminorm(&self.u, &self.domain),
        }
    }

    pub fn describe(&self) -> String {
        let kind = serde_json::to_value(&self.u.descriptor)
            .ok()
            .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_string))
            .unwrap_or_else(|| "function".into());
        format!("{kind}@{}", self.domain)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LhsOptions {
    pub quad: QuadOptions,
    /// Integrate only where `delta > cutoff`.
    pub cutoff: Option<f64>,
    /// Divergence ceiling; defaults to `DEFAULT_CEILING_FACTOR * 2^m * TV`.
    pub ceiling: Option<f64>,
    /// Gauss cells along each boundary slice in two dimensions.
    pub slice_cells: Option<usize>,
}

impl Default for LhsOptions {
    fn default() -> Self {
        Self {
            quad: QuadOptions {
                abs_tol: 1e-14,
                rel_tol: 1e-9,
                max_intervals: 4000,
            },
            cutoff: None,
            ceiling: None,
            slice_cells: None,
        }
    }
}

/// The set of points at distance `t` from one face, parametrized by `t`.
#[derive(Debug, Clone, Copy)]
enum Patch {
    /// A single point `origin + dir * t` on an interval.
    Point { origin: f64, dir: f64, extent: f64 },
    /// A segment at height `t` over the face `x[normal] = face`, spanning
    /// `[lo, hi]` along the other axis, shrunk by `t` at both ends when the
    /// neighbouring faces are closer.
    Slice {
        normal: usize,
        face: f64,
        dir: f64,
        lo: f64,
        hi: f64,
        shrink: bool,
        extent: f64,
    },
}

impl Patch {
    fn extent(&self) -> f64 {
        match *self {
            Patch::Point { extent, .. } | Patch::Slice { extent, .. } => extent,
        }
    }

    fn span(&self, t: f64) -> f64 {
        match *self {
            Patch::Point { .. } => 1.0,
            Patch::Slice { lo, hi, shrink, .. } => {
                let d = if shrink { 2.0 * t } else { 0.0 };
                (hi - lo - d).max(0.0)
            }
        }
    }
}

fn patches(case: &HardyCase) -> Result<Vec<Patch>> {
    let b = case
        .domain
        .as_box()
        .ok_or_else(|| Error::Unsupported(format!("Hardy integral on {}", case.domain)))?;
    if let Some(r) = &case.region {
        let d = r.dim();
        let extent = r.hi[d - 1] - r.lo[d - 1];
        return Ok(vec![if d == 1 {
            Patch::Point {
                origin: r.lo[0],
                dir: 1.0,
                extent,
            }
        } else {
            Patch::Slice {
                normal: 1,
                face: r.lo[1],
                dir: 1.0,
                lo: r.lo[0],
                hi: r.hi[0],
                shrink: false,
                extent,
            }
        }]);
    }
    match b.dim() {
        1 => {
            let half = 0.5 * (b.hi[0] - b.lo[0]);
            Ok(vec![
                Patch::Point {
                    origin: b.lo[0],
                    dir: 1.0,
                    extent: half,
                },
                Patch::Point {
                    origin: b.hi[0],
                    dir: -1.0,
                    extent: half,
                },
            ])
        }
        2 => {
            let (w, h) = (b.hi[0] - b.lo[0], b.hi[1] - b.lo[1]);
            let extent = 0.5 * w.min(h);
            let mut out = Vec::with_capacity(4);
            for (normal, face, dir) in [
                (1, b.lo[1], 1.0),
                (1, b.hi[1], -1.0),
                (0, b.lo[0], 1.0),
                (0, b.hi[0], -1.0),
            ] {
                let other = 1 - normal;
                out.push(Patch::Slice {
                    normal,
                    face,
                    dir,
                    lo: b.lo[other],
                    hi: b.hi[other],
                    shrink: true,
                    extent,
                });
            }
            Ok(out)
        }
        d => Err(Error::Unsupported(format!("Hardy integral in dimension {d}"))),
    }
}

/// `G(t)`: integral of `|u - c|` over the points of the patch at distance `t`.
struct Profile<'a> {
    u: &'a TestFunction,
    c: f64,
    cells: usize,
}

impl Profile<'_> {
    fn eval(&self, patch: &Patch, t: f64) -> f64 {
        match *patch {
            Patch::Point { origin, dir, .. } => (self.u.eval1(origin + dir * t) - self.c).abs(),
            Patch::Slice {
                normal,
                face,
                dir,
                lo,
                hi,
                shrink,
                ..
            } => {
                let (a, b) = if shrink { (lo + t, hi - t) } else { (lo, hi) };
                if b <= a {
                    return 0.0;
                }
                let height = face + dir * t;
                let point = |s: f64| {
                    if normal == 1 {
                        [s, height]
                    } else {
                        [height, s]
                    }
                };
                let breaks = if normal == 1 { self.u.breakpoints_axis0() } else { Vec::new() };
                functions::integrate_abs_1d(|s| self.u.eval(&point(s)) - self.c, a, b, self.cells, &breaks)
            }
        }
    }

    /// Distances at which `G` is not smooth.
    fn kinks(&self, patch: &Patch) -> Vec<f64> {
        let mut out = Vec::new();
        if let Patch::Point { origin, dir, .. } = *patch {
            out.extend(self.u.breakpoints1().iter().map(|p| (p - origin) * dir));
        }
        if let Descriptor::BoundaryPlateau { collar, band, .. } = self.u.descriptor {
            out.extend([collar, collar + band]);
        }
        out
    }
}

/// Change of variables that absorbs the singular part of the weight.
///
/// In BV mode with reference level `p` and effective power `b`,
/// `z = L_p(x)^{b-1} / (b-1)` (or `ln L_p(x)` when `b = 1`), `x = t/R`, turns
/// `(1/t) chain(t/R) dt` into `ratio dz` with `ratio` identically one up to
/// rounding. In fractional mode `z = t^{1-s}/(1-s)` leaves `chain(t/R) dz`.
#[derive(Debug, Clone, Copy)]
enum Substitution {
    Bv { p: usize, e: f64 },
    Fractional { s: f64 },
}

impl Substitution {
    fn new(chain: &WeightChain, order: Order) -> Self {
        match order {
            Order::Fractional(s) => Substitution::Fractional { s },
            Order::Bv => {
                let p = chain.depth_needed() as usize;
                let b = match chain.tail() {
                    Tail::Square => 2.0,
                    Tail::Power { beta } | Tail::RhoStar { beta } => beta,
                };
                Substitution::Bv { p, e: b - 1.0 }
            }
        }
    }

    /// Lower end of the `z` range for `t -> 0`.
    fn z_at_zero(&self) -> f64 {
        match *self {
            Substitution::Bv { e, .. } if e <= 0.0 => f64::NEG_INFINITY,
            _ => 0.0,
        }
    }

    fn z_of_t(&self, chain: &WeightChain, t: f64) -> f64 {
        match *self {
            Substitution::Fractional { s } => t.powf(1.0 - s) / (1.0 - s),
            Substitution::Bv { p, e } => {
                let a = depths(p as u32, t / chain.r())[p];
                if e == 0.0 {
                    -a
                } else {
                    (-e * a).exp() / e
                }
            }
        }
    }

    /// `(t, weight factor)` at `z`.
    fn t_of_z(&self, chain: &WeightChain, z: f64) -> (f64, f64) {
        match *self {
            Substitution::Fractional { s } => {
                let t = ((1.0 - s) * z).powf(1.0 / (1.0 - s));
                (t, chain.eval_unit(t / chain.r()))
            }
            Substitution::Bv { p, e } => {
                let mut a = vec![0.0; p + 2];
                a[p] = if e == 0.0 { -z } else { -(e * z).ln() / e };
                for j in (1..=p).rev() {
                    a[j - 1] = a[j].exp_m1();
                }
                a[p + 1] = a[p].ln_1p();
                let x = (-a[0]).exp();
                let ratio = (chain.log_reduced(&a, p) + (e + 1.0) * a[p]).exp();
                (chain.r() * x, if ratio.is_finite() { ratio } else { 1.0 })
            }
        }
    }
}

fn default_ceiling(case: &HardyCase) -> Result<f64> {
    let tv = case.total_variation()?;
    let scale = if tv > 0.0 {
        tv
    } else {
        functions::l1_norm(&case.u, &case.domain)?.max(1.0)
    };
    Ok(DEFAULT_CEILING_FACTOR * 2f64.powi(case.chain.m() as i32) * scale)
}

/// `int_Omega |u - c| / delta^sigma * chain(delta / R) dx`.
pub fn weighted_lhs(case: &HardyCase) -> Result<f64> {
    weighted_lhs_with(case, &LhsOptions::default())
}

pub fn weighted_lhs_with(case: &HardyCase, opts: &LhsOptions) -> Result<f64> {
    let c = case.centering()?;
    let profile = Profile {
        u: &case.u,
        c,
        cells: opts.slice_cells.unwrap_or_else(|| (case.u.grid_for(2) / 2).max(16)),
    };
    let sub = Substitution::new(&case.chain, case.order);
    let chain = case.chain;
    let mut ceiling = None;
    let mut total = 0.0;
    for patch in patches(case)? {
        let extent = patch.extent();
        let cut = opts.cutoff.unwrap_or(0.0);
        if cut >= extent {
            continue;
        }
        let z_hi = sub.z_of_t(&chain, extent);
        let z_lo = if cut > 0.0 { sub.z_of_t(&chain, cut) } else { sub.z_at_zero() };
        let mut breaks: Vec<f64> = (1..=GRADING_LEVELS).map(|j| extent * 3f64.powi(-j)).collect();
        breaks.extend(profile.kinks(&patch));
        let zbreaks: Vec<f64> = breaks
            .into_iter()
            .filter(|t| *t > cut && *t < extent)
            .map(|t| sub.z_of_t(&chain, t))
            .filter(|z| z.is_finite())
            .collect();
        let mut bad = None;
        let mut f = |z: f64| {
            let (t, w) = sub.t_of_z(&chain, z);
            let v = profile.eval(&patch, t) * w;
            if !v.is_finite() {
                bad.get_or_insert(t);
            }
            v
        };
        let part = if z_lo.is_finite() {
            quad::integrate(&mut f, z_lo, z_hi, &zbreaks, opts.quad).map(|r| r.value)
        } else {
            let limit = match ceiling {
                Some(v) => v,
                None => {
                    let v = match opts.ceiling {
                        Some(v) => v,
                        None => default_ceiling(case)?,
                    };
                    ceiling = Some(v);
                    v
                }
            };
            unbounded_tail(&mut f, z_hi, &zbreaks, opts.quad, total, limit)
        };
        if let Some(t) = bad {
            return Err(Error::NonFinite(format!("Hardy integrand at distance {t}")));
        }
        total += part?;
    }
    if let Some(limit) = ceiling {
        if total > limit {
            return Err(Error::Divergence { value: total, ceiling: limit });
        }
    }
    Ok(total)
}

/// Integrates `f` over `(-inf, z_hi]` by doubling windows, stopping when the
/// newest window adds nothing relative to the total or the running value
/// passes `ceiling`.
fn unbounded_tail(
    f: &mut impl FnMut(f64) -> f64,
    z_hi: f64,
    zbreaks: &[f64],
    opts: QuadOptions,
    carried: f64,
    ceiling: f64,
) -> Result<f64> {
    let mut lower = z_hi - 1.0;
    let mut value = quad::integrate(&mut *f, lower, z_hi, zbreaks, opts)?.value;
    let mut width = 1.0;
    let mut quiet = 0;
    for _ in 0..200 {
        let next = lower - width;
        let chunk = quad::integrate(&mut *f, next, lower, zbreaks, opts)?.value;
        value += chunk;
        lower = next;
        width *= 2.0;
        if carried + value > ceiling {
            return Err(Error::Divergence {
                value: carried + value,
                ceiling,
            });
        }
        if chunk.abs() <= 1e-13 * (carried + value).abs() || chunk == 0.0 {
            quiet += 1;
            if quiet == 2 {
                return Ok(value);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Divergence {
        value: carried + value,
        ceiling,
    })
}

/// `(cutoff, lhs)` for each cutoff: the integral restricted to `delta > cutoff`.
pub fn cutoff_sweep(case: &HardyCase, cutoffs: &[f64], opts: &LhsOptions) -> Result<Vec<(f64, f64)>> {
    cutoffs
        .iter()
        .map(|&eta| {
            let o = LhsOptions {
                cutoff: Some(eta),
                ..*opts
            };
            Ok((eta, weighted_lhs_with(case, &o)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub case: String,
    pub m: u32,
    pub s: Order,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub lhs: f64,
    pub rhs_components: BTreeMap<String, f64>,
    pub measured_constant: f64,
    pub constant_form: String,
    pub pass: bool,
    pub oracle: String,
}

fn main_case(u: &TestFunction, domain: &Domain, m: u32, r: f64) -> Result<HardyCase> {
    HardyCase::new(u.clone(), domain.clone(), WeightChain::square(m, r)?, Order::Bv)
}

/// `lhs / (2^m [u]_BV)` for the centered square-tail integral.
pub fn verify_main(u: &TestFunction, domain: &Domain, m: u32, r: f64) -> Result<VerificationReport> {
    verify_main_with(u, domain, m, r, &LhsOptions::default())
}

pub fn verify_main_with(u: &TestFunction, domain: &Domain, m: u32, r: f64, opts: &LhsOptions) -> Result<VerificationReport> {
    if m < 2 {
        return Err(Error::Precondition(format!("m = {m} below 2")));
    }
    let case = main_case(u, domain, m, r)?;
    let lhs = weighted_lhs_with(&case, opts)?;
    let tv = case.total_variation()?;
    let envelope = 2f64.powi(m as i32) * tv;
    let measured = if lhs == 0.0 { 0.0 } else { lhs / envelope };
    Ok(VerificationReport {
        case: case.describe(),
        m,
        s: Order::Bv,
        alpha: None,
        beta: None,
        lhs,
        rhs_components: BTreeMap::from([("tv".to_string(), tv), ("envelope".to_string(), envelope)]),
        measured_constant: measured,
        constant_form: "C*2^m*[u]_BV".into(),
        pass: measured.is_finite(),
        oracle: "quadrature".into(),
    })
}

/// Spearman rank correlation; zero when either sample is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for k in i..=j {
                r[idx[k]] = 0.5 * (i + j) as f64 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub reports: Vec<VerificationReport>,
    /// Largest measured constant across the sweep.
    pub bound: f64,
    /// Rank correlation of the measured constants with the swept variable.
    pub trend: f64,
    pub pass: bool,
}

impl SweepSummary {
    fn from_reports(reports: Vec<VerificationReport>, variable: impl Fn(&VerificationReport) -> f64) -> Self {
        let xs: Vec<f64> = reports.iter().map(&variable).collect();
        let ys: Vec<f64> = reports.iter().map(|r| r.measured_constant).collect();
        let bound = ys.iter().copied().fold(0.0, f64::max);
        let trend = spearman(&xs, &ys);
        let pass = reports.iter().all(|r| r.pass) && bound.is_finite() && trend <= 0.0;
        Self {
            reports,
            bound,
            trend,
            pass,
        }
    }
}

/// `verify_main` over a range of `m`; passes when every constant is finite
/// and the constants do not trend upward in `m`.
pub fn verify_main_sweep(u: &TestFunction, domain: &Domain, ms: &[u32], r: f64, opts: &LhsOptions) -> Result<SweepSummary> {
    let reports = ms
        .iter()
        .map(|&m| verify_main_with(u, domain, m, r, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepSummary::from_reports(reports, |r| r.m as f64))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IntermediateOptions {
    pub lhs: LhsOptions,
    pub seminorm: SeminormOptions,
    /// Poincaré constant for the explicit one-dimensional coefficients;
    /// measured from `u` when absent.
    pub c1_poin: Option<f64>,
}

/// `lhs / (2^m ((1-s)[u]_{W^{s,1}} + ||u||_{L1}))` for the fractional integral.
///
/// On intervals `(0, 2D)` the explicit bound
/// `C (2^{3s+m+1} + 2^{s+1})(1-s)[u] + 2^{m+2} 3^s D^{-s} ||u||` is also checked.
pub fn verify_intermediate(
    u: &TestFunction,
    domain: &Domain,
    s: f64,
    m: u32,
    r: f64,
    opts: &IntermediateOptions,
) -> Result<VerificationReport> {
    if !(0.5..1.0).contains(&s) {
        return Err(Error::Precondition(format!("s = {s} outside [1/2, 1)")));
    }
    if m < 2 {
        return Err(Error::Precondition(format!("m = {m} below 2")));
    }
    let case = HardyCase::new(u.clone(), domain.clone(), WeightChain::square(m, r)?, Order::Fractional(s))?;
    let lhs = weighted_lhs_with(&case, &opts.lhs)?;
    let l1 = functions::l1_norm(u, domain)?;
    let semi = seminorms::gagliardo(u, domain, s, &opts.seminorm)?.value;
    let pow = 2f64.powi(m as i32);
    let structural = pow * ((1.0 - s) * semi + l1);
    let measured = if lhs == 0.0 { 0.0 } else { lhs / structural };
    let mut rhs = BTreeMap::from([
        ("seminorm_term".to_string(), pow * (1.0 - s) * semi),
        ("l1_term".to_string(), pow * l1),
    ]);
    let mut pass = measured.is_finite();
    let mut form = "C*2^m*((1-s)[u]_W^{s,1} + ||u||_L1)".to_string();
    if let Domain::Interval { half_length } = domain {
        let c = match opts.c1_poin {
            Some(c) => c,
            None if semi > 0.0 => {
                seminorms::poincare_measure(u, &domain.as_box().expect("interval"), s, &opts.seminorm)?.measured_constant
            }
            None => 0.0,
        };
        let a = c * (2f64.powf(3.0 * s + m as f64 + 1.0) + 2f64.powf(s + 1.0)) * (1.0 - s) * semi;
        let b = 2f64.powi(m as i32 + 2) * 3f64.powf(s) / half_length.powf(s) * l1;
        rhs.insert("explicit_seminorm_term".into(), a);
        rhs.insert("explicit_l1_term".into(), b);
        rhs.insert("c1_poin".into(), c);
        pass &= lhs <= (a + b) * (1.0 + 1e-9);
        form.push_str("; explicit 1D coefficients");
    }
    Ok(VerificationReport {
        case: case.describe(),
        m,
        s: Order::Fractional(s),
        alpha: None,
        beta: None,
        lhs,
        rhs_components: rhs,
        measured_constant: measured,
        constant_form: form,
        pass,
        oracle: "quadrature".into(),
    })
}

/// `verify_intermediate` over a list of `s`.
pub fn verify_intermediate_sweep(
    u: &TestFunction,
    domain: &Domain,
    s_list: &[f64],
    m: u32,
    r: f64,
    opts: &IntermediateOptions,
) -> Result<SweepSummary> {
    let reports = s_list
        .iter()
        .map(|&s| verify_intermediate(u, domain, s, m, r, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut summary = SweepSummary::from_reports(reports, |_| 0.0);
    summary.pass = summary.reports.iter().all(|r| r.pass) && summary.bound.is_finite();
    Ok(summary)
}

/// The one-sided bound on `(0, 1)`:
/// `int_0^1 |u|/x^s chain(x/R) <= C (2^{3s+m} + 2^s)(1-s)[u] + 2^{m+1} 3^s ||u||`.
pub fn verify_unit_interval_explicit(
    u: &TestFunction,
    s: f64,
    m: u32,
    r: f64,
    c1_poin: f64,
    opts: &IntermediateOptions,
) -> Result<VerificationReport> {
    if !(0.5..1.0).contains(&s) {
        return Err(Error::Precondition(format!("s = {s} outside [1/2, 1)")));
    }
    let unit = Region::interval(0.0, 1.0);
    let case = HardyCase::new(
        u.clone(),
        Domain::interval(1.0)?,
        WeightChain::square(m, r)?,
        Order::Fractional(s),
    )?
    .restricted_to(unit.clone())?;
    let lhs = weighted_lhs_with(&case, &opts.lhs)?;
    let semi = seminorms::gagliardo_1d_with(u, 0.0, 1.0, s, opts.seminorm.quad)?.value;
    let l1 = functions::l1_on_region(u, &unit)?;
    let a = c1_poin * (2f64.powf(3.0 * s + m as f64) + 2f64.powf(s)) * (1.0 - s) * semi;
    let b = 2f64.powi(m as i32 + 1) * 3f64.powf(s) * l1;
    let total = a + b;
    Ok(VerificationReport {
        case: format!("{}:(0,1)", case.describe()),
        m,
        s: Order::Fractional(s),
        alpha: None,
        beta: None,
        lhs,
        rhs_components: BTreeMap::from([
            ("explicit_seminorm_term".to_string(), a),
            ("explicit_l1_term".to_string(), b),
            ("c1_poin".to_string(), c1_poin),
        ]),
        measured_constant: if lhs == 0.0 { 0.0 } else { lhs / total },
        constant_form: "C_1Poin*(2^{3s+m}+2^s)(1-s)[u] + 2^{m+1}3^s||u||".into(),
        pass: lhs <= total * (1.0 + 1e-9),
        oracle: "quadrature".into(),
    })
}

/// Largest measured Poincaré constant on `(0, 1)` across functions and orders.
pub fn measure_c1_poin(functions: &[TestFunction], s_list: &[f64], opts: &SeminormOptions) -> Result<f64> {
    let unit = Region::interval(0.0, 1.0);
    let mut best: f64 = 0.0;
    for u in functions {
        for &s in s_list {
            match seminorms::poincare_measure(u, &unit, s, opts) {
                Ok(p) => best = best.max(p.measured_constant),
                Err(Error::ZeroSeminorm(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(best)
}

/// `TensorProfile` on `(-2n, 2n) x (0, 2)` restricted to `(-n, n) x (0, 1)`,
/// uncentered, where `delta` is the height and every per-`m` integral is
/// `||profile||_L1 * L_m(1/R)`.
pub fn counterexample_case(n: u32, m: u32, r: f64) -> Result<HardyCase> {
    let nf = n as f64;
    let u = TestFunction::tensor_profile(0.0, 0.5 * nf, 1.0)?;
    let domain = Domain::axis_box(2, 2 * n, 2.0)?;
    HardyCase::new(u, domain, WeightChain::square(m, r)?, Order::Bv)?
        .centered(false)
        .restricted_to(Region::rect([-nf, 0.0], [nf, 1.0]))
}

/// `int |profile(x')| dx'` over the restriction width, for tensor cases.
pub fn profile_l1(case: &HardyCase) -> Option<f64> {
    let Descriptor::TensorProfile { .. } = case.u.descriptor else {
        return None;
    };
    let r = case.region.as_ref()?;
    let u = &case.u;
    Some(functions::integrate_abs_1d(
        |x| u.eval(&[x, 0.5 * (r.lo[1] + r.hi[1])]),
        r.lo[0],
        r.hi[0],
        u.grid_for(1),
        &[],
    ))
}

/// Closed form of the tensor counterexample: `||profile||_L1 * L_m(H/R)`
/// with `H` the restriction height. `None` when the case is not of that shape.
pub fn tensor_closed_form(case: &HardyCase) -> Option<f64> {
    if case.centered || case.order != Order::Bv || case.chain.tail() != Tail::Square {
        return None;
    }
    let r = case.region.as_ref()?;
    if r.dim() != 2 {
        return None;
    }
    let g = profile_l1(case)?;
    let x = (r.hi[1] - r.lo[1]) / case.chain.r();
    Some(g * logweights::eval_l(case.chain.m(), x).ok()?)
}

#[derive(Debug, Clone, Copy)]
pub struct SeriesOptions {
    pub lhs: LhsOptions,
    /// Stop once the tail bound falls below this.
    pub tol: f64,
    pub reference_alpha: f64,
    /// Witness threshold as a multiple of the reference total.
    pub witness_factor: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            lhs: LhsOptions::default(),
            tol: 1e-6,
            reference_alpha: 0.4,
            witness_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub m: u32,
    pub lhs: f64,
    pub term: f64,
    pub partial: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SeriesVerdict {
    Converged { m_stop: u32, total: f64, tail_bound: f64 },
    DivergenceWitness { m: u32, partial: f64, reference_total: f64 },
    Inconclusive { m_max: u32, partial: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    pub case: String,
    pub alpha: f64,
    pub terms: Vec<SeriesTerm>,
    pub verdict: SeriesVerdict,
    /// `max_m lhs_m / (2^m [u]_BV)` over the computed terms.
    pub measured_constant: f64,
    /// `4 alpha^2 / (1 - 2 alpha)` for `alpha < 1/2`.
    pub bound_factor: Option<f64>,
    /// `measured_constant * bound_factor * [u]_BV`.
    pub bound: Option<f64>,
    pub method: String,
}

/// Incremental `L_m(x)` for `m = 1, 2, ...`.
fn l_sequence(x: f64) -> impl Iterator<Item = f64> {
    std::iter::successors(Some(1.0 / (1.0 - x.ln())), |l| Some(1.0 / (1.0 - l.ln())))
}

/// Upper bound on `sup_t G(t)`, the boundary mass at any distance.
fn boundary_mass_bound(case: &HardyCase) -> Result<f64> {
    let c = case.centering()?;
    let b = case.region.clone().or_else(|| case.domain.as_box()).ok_or_else(|| {
        Error::Unsupported(format!("series on {}", case.domain))
    })?;
    let n = if b.dim() == 1 { 4096 } else { 256 };
    let mut sup: f64 = 0.0;
    if b.dim() == 1 {
        for i in 0..=n {
            let x = b.lo[0] + (b.hi[0] - b.lo[0]) * i as f64 / n as f64;
            sup = sup.max((case.u.eval1(x) - c).abs());
        }
    } else {
        for i in 0..=n {
            for j in 0..=n {
                let x = [
                    b.lo[0] + (b.hi[0] - b.lo[0]) * i as f64 / n as f64,
                    b.lo[1] + (b.hi[1] - b.lo[1]) * j as f64 / n as f64,
                ];
                sup = sup.max((case.u.eval(&x) - c).abs());
            }
        }
    }
    let span: f64 = patches(case)?.iter().map(|p| p.span(0.0)).sum();
    Ok(1.01 * sup * span)
}

/// `sum_{m >= 2} alpha^m lhs_m` with a Cauchy stop for `alpha < 1` and a
/// divergence witness once partial sums pass `witness_factor` times the
/// reference-alpha total.
pub fn series_sum(case: &HardyCase, alpha: f64, m_max: u32, opts: &SeriesOptions) -> Result<SeriesResult> {
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("alpha = {alpha} must be positive")));
    }
    if m_max < 2 {
        return Err(Error::Precondition(format!("m_max = {m_max} below 2")));
    }
    let closed = tensor_closed_form(case).is_some();
    let tv = case.total_variation()?;
    let reference = if alpha >= 1.0 && opts.reference_alpha < 1.0 {
        match series_sum(case, opts.reference_alpha, m_max.min(400), opts)?.verdict {
            SeriesVerdict::Converged { total, .. } => Some(total),
            _ => None,
        }
    } else {
        None
    };
    let gmax = if alpha < 1.0 { boundary_mass_bound(case)? } else { f64::INFINITY };
    let (g, x) = if closed {
        let r = case.region.as_ref().expect("closed form needs a region");
        (profile_l1(case).unwrap_or(0.0), (r.hi[1] - r.lo[1]) / case.chain.r())
    } else {
        (0.0, 1.0)
    };
    let mut closed_l = l_sequence(x).skip(1);
    let mut terms = Vec::new();
    let mut partial = 0.0;
    let mut measured: f64 = 0.0;
    let mut verdict = None;
    for m in 2..=m_max {
        let lhs = if closed {
            g * closed_l.next().expect("infinite sequence")
        } else {
            weighted_lhs_with(&case.with_m(m)?, &opts.lhs)?
        };
        let term = alpha.powi(m as i32) * lhs;
        partial += term;
        if tv > 0.0 {
            measured = measured.max(lhs / (2f64.powi(m as i32) * tv));
        }
        terms.push(SeriesTerm { m, lhs, term, partial });
        if let Some(reference_total) = reference {
            if reference_total > 0.0 && partial > opts.witness_factor * reference_total {
                verdict = Some(SeriesVerdict::DivergenceWitness {
                    m,
                    partial,
                    reference_total,
                });
                break;
            }
        }
        if alpha < 1.0 {
            let tail_bound = gmax * alpha.powi(m as i32 + 1) / (1.0 - alpha);
            if tail_bound < opts.tol {
                verdict = Some(SeriesVerdict::Converged {
                    m_stop: m,
                    total: partial,
                    tail_bound,
                });
                break;
            }
        }
    }
    let verdict = verdict.unwrap_or(SeriesVerdict::Inconclusive { m_max, partial });
    let bound_factor = (alpha < 0.5).then(|| 4.0 * alpha * alpha / (1.0 - 2.0 * alpha));
    Ok(SeriesResult {
        case: case.describe(),
        alpha,
        terms,
        verdict,
        measured_constant: measured,
        bound_factor,
        bound: bound_factor.map(|f| f * measured * tv),
        method: if closed { "closed_form" } else { "quadrature" }.into(),
    })
}

fn is_plateau(u: &TestFunction) -> bool {
    matches!(u.descriptor, Descriptor::BoundaryPlateau { .. })
}

/// Divergence probe for `beta <= 1`: the integral must pass its ceiling.
fn divergence_report(case: &HardyCase, beta: f64, opts: &LhsOptions) -> Result<VerificationReport> {
    let tv = case.total_variation()?;
    let envelope = 2f64.powi(case.chain.m() as i32) * tv;
    let (lhs, divergent) = match weighted_lhs_with(case, opts) {
        Err(Error::Divergence { value, .. }) => (value, true),
        Ok(v) => (v, false),
        Err(e) => return Err(e),
    };
    Ok(VerificationReport {
        case: case.describe(),
        m: case.chain.m(),
        s: Order::Bv,
        alpha: None,
        beta: Some(beta),
        lhs,
        rhs_components: BTreeMap::from([("tv".to_string(), tv), ("envelope".to_string(), envelope)]),
        measured_constant: lhs / envelope,
        constant_form: "divergent for beta <= 1".into(),
        pass: divergent,
        oracle: "divergence_witness".into(),
    })
}

/// Power tail `L_m^beta`. For `beta > 1` checks the reduction
/// `lhs_beta(m) <= C(beta - 1) lhs_square(m + 1)` and reports both `C(beta)`
/// and `C(beta - 1)`; for `beta <= 1` demands a divergence witness from a
/// boundary plateau.
pub fn corollary_beta_verify(
    u: &TestFunction,
    domain: &Domain,
    m: u32,
    r: f64,
    beta: f64,
    opts: &LhsOptions,
) -> Result<VerificationReport> {
    let case = HardyCase::new(
        u.clone(),
        domain.clone(),
        WeightChain::failure_regime(m, r, Tail::Power { beta })?,
        Order::Bv,
    )?;
    if beta <= 1.0 {
        if !is_plateau(u) {
            return Err(Error::Precondition("beta <= 1 needs a boundary plateau".into()));
        }
        return divergence_report(&case, beta, opts);
    }
    let lhs = weighted_lhs_with(&case, opts)?;
    let reduced = weighted_lhs_with(&case.with_m(m + 1)?.with_tail(m + 1, Tail::Square)?, opts)?;
    let c_theta = logweights::theta_domination_constant(beta - 1.0)?;
    let c_beta = logweights::theta_domination_constant(beta)?;
    let tv = case.total_variation()?;
    let envelope = 2f64.powi(m as i32) * tv;
    let measured = if lhs == 0.0 { 0.0 } else { lhs / envelope };
    Ok(VerificationReport {
        case: case.describe(),
        m,
        s: Order::Bv,
        alpha: None,
        beta: Some(beta),
        lhs,
        rhs_components: BTreeMap::from([
            ("tv".to_string(), tv),
            ("envelope".to_string(), envelope),
            ("square_lhs_m_plus_1".to_string(), reduced),
            ("c_beta_minus_1".to_string(), c_theta),
            ("c_beta".to_string(), c_beta),
            ("reduced_rhs".to_string(), c_theta * reduced),
        ]),
        measured_constant: measured,
        constant_form: "C(beta-1)*C*2^{m+1}*[u]_BV".into(),
        pass: measured.is_finite() && lhs <= c_theta * reduced * (1.0 + 1e-9),
        oracle: "quadrature".into(),
    })
}

/// `rho*` tail. For `beta > 1` checks `lhs(rho*, m) = lhs(L_{m+1}^beta)` to
/// `1e-10` and reports `lhs / (2^m [u]_BV)`; for `beta <= 1` demands a
/// divergence witness from a boundary plateau.
pub fn corollary_rho_verify(
    u: &TestFunction,
    domain: &Domain,
    m: u32,
    r: f64,
    beta: f64,
    opts: &LhsOptions,
) -> Result<VerificationReport> {
    let case = HardyCase::new(
        u.clone(),
        domain.clone(),
        WeightChain::failure_regime(m, r, Tail::RhoStar { beta })?,
        Order::Bv,
    )?;
    if beta <= 1.0 {
        if !is_plateau(u) {
            return Err(Error::Precondition("beta <= 1 needs a boundary plateau".into()));
        }
        return divergence_report(&case, beta, opts);
    }
    let lhs = weighted_lhs_with(&case, opts)?;
    let twin = weighted_lhs_with(&case.with_tail(m + 1, Tail::Power { beta })?, opts)?;
    let residual = if twin == 0.0 { (lhs - twin).abs() } else { ((lhs - twin) / twin).abs() };
    let tv = case.total_variation()?;
    let envelope = 2f64.powi(m as i32) * tv;
    let measured = if lhs == 0.0 { 0.0 } else { lhs / envelope };
    Ok(VerificationReport {
        case: case.describe(),
        m,
        s: Order::Bv,
        alpha: None,
        beta: Some(beta),
        lhs,
        rhs_components: BTreeMap::from([
            ("tv".to_string(), tv),
            ("envelope".to_string(), envelope),
            ("power_tail_lhs".to_string(), twin),
            ("identity_residual".to_string(), residual),
        ]),
        measured_constant: measured,
        constant_form: "C*2^m*[u]_BV".into(),
        pass: measured.is_finite() && residual < 1e-10,
        oracle: "quadrature".into(),
    })
}
