//! Iterated-logarithm weights `L_m`, the lattice sequence `Y_m`, the
//! exponent `rho*`, and the scalar inequalities relating them.
//!
//! Everything is evaluated through the depths `a_0 = -ln t`,
//! `a_j = ln(1 + a_{j-1})`, so that `L_j(t) = exp(-a_j)`. Depths stay finite
//! for any positive `t`, which keeps products of many small weights accurate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, QuadOptions};

/// Depths `a_0..=a_m` of `t` in `[0, 1]`. `a_0 = +inf` at `t = 0`.
pub fn depths(m: u32, t: f64) -> Vec<f64> {
    let mut a = Vec::with_capacity(m as usize + 1);
    a.push(-t.ln());
    for j in 1..=m as usize {
        a.push(a[j - 1].ln_1p());
    }
    a
}

fn check_unit(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
    }
    Ok(())
}

/// `L_m(t)` for `t` in `[0, 1]`, with `L_0(t) = t`.
pub fn eval_l(m: u32, t: f64) -> Result<f64> {
    check_unit(t)?;
    Ok((-depths(m, t)[m as usize]).exp())
}

/// Exact derivative `L_m'(t) = (1/t) L_1 ... L_{m-1} L_m^2` for `t` in `(0, 1]`.
pub fn eval_l_derivative(m: u32, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("t = {t} outside (0, 1]")));
    }
    let a = depths(m, t);
    let log: f64 = -a[1..m as usize].iter().sum::<f64>() - 2.0 * a[m as usize];
    Ok(log.exp() / t)
}

/// Tail factor applied to `L_m` in a weight chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tail {
    /// `L_m^2`.
    Square,
    /// `L_m^beta`.
    Power { beta: f64 },
    /// `L_m^{1 + rho*}` with `rho*` built from `beta`.
    RhoStar { beta: f64 },
}

impl Tail {
    /// Power carried by the reference level of the chain.
    pub fn beta(&self) -> f64 {
        match *self {
            Tail::Square => 2.0,
            Tail::Power { beta } | Tail::RhoStar { beta } => beta,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Tail::Square => "square".to_string(),
            Tail::Power { beta } => format!("power:{beta}"),
            Tail::RhoStar { beta } => format!("rho:{beta}"),
        }
    }
}

/// The weight `L_1(t/R) ... L_{m-1}(t/R) * tail(L_m(t/R))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightChain {
    m: u32,
    r: f64,
    tail: Tail,
}

impl WeightChain {
    /// Chain within the admissible parameter range: `Power` needs `beta > 0`,
    /// `RhoStar` needs `beta > 1`.
    pub fn new(m: u32, r: f64, tail: Tail) -> Result<Self> {
        if let Tail::RhoStar { beta } = tail {
            if !(beta > 1.0) {
                return Err(Error::Precondition(format!("rho* tail needs beta > 1, got {beta}")));
            }
        }
        Self::failure_regime(m, r, tail)
    }

    /// Chain that also admits `RhoStar` with `0 < beta <= 1`, for exhibiting
    /// divergence of the corresponding inequality.
    pub fn failure_regime(m: u32, r: f64, tail: Tail) -> Result<Self> {
        if m == 0 {
            return Err(Error::Precondition("chain length m must be at least 1".into()));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Precondition(format!("scale R must be positive, got {r}")));
        }
        match tail {
            Tail::Square => {}
            Tail::Power { beta } | Tail::RhoStar { beta } => {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::Precondition(format!("beta must be positive, got {beta}")));
                }
            }
        }
        Ok(Self { m, r, tail })
    }

    pub fn square(m: u32, r: f64) -> Result<Self> {
        Self::new(m, r, Tail::Square)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    pub fn with_m(&self, m: u32) -> Result<Self> {
        Self::failure_regime(m, self.r, self.tail)
    }

    /// Deepest level whose depth the chain reads.
    pub fn depth_needed(&self) -> u32 {
        match self.tail {
            Tail::RhoStar { .. } => self.m + 1,
            _ => self.m,
        }
    }

    /// Natural log of the chain from precomputed depths (`a.len() > depth_needed`).
    pub fn log_from_depths(&self, a: &[f64]) -> f64 {
        let m = self.m as usize;
        let head: f64 = a[1..m].iter().sum();
        let tail = match self.tail {
            Tail::Square => 2.0 * a[m],
            Tail::Power { beta } => beta * a[m],
            Tail::RhoStar { beta } => {
                if a[m] == 0.0 {
                    0.0
                } else {
                    a[m] + beta * a[m + 1] / a[m] * a[m]
                }
            }
        };
        -head - tail
    }

    /// `ln(chain) + sum_{j<p} a_j` for a reference level `p >= m`.
    ///
    /// The common head `L_1 ... L_{m-1}` cancels symbolically, so the result
    /// only reads depths at levels `m..=depth_needed()`, which stay finite
    /// where the lower levels overflow.
    pub fn log_reduced(&self, a: &[f64], p: usize) -> f64 {
        let m = self.m as usize;
        // tail = lead * a_m + rest; the a_m terms are combined before summing
        // so that nothing cancels when a_m is huge.
        let (lead, rest) = match self.tail {
            Tail::Square => (2.0, 0.0),
            Tail::Power { beta } => (beta, 0.0),
            Tail::RhoStar { beta } => {
                if a[m] == 0.0 {
                    (0.0, 0.0)
                } else {
                    (1.0, beta * a[m + 1] / a[m] * a[m])
                }
            }
        };
        if p > m {
            (1.0 - lead) * a[m] + a[m + 1..p].iter().sum::<f64>() - rest
        } else {
            -lead * a[m] - rest
        }
    }

    /// Chain value at `x = t / R` in `[0, 1]`.
    pub fn eval_unit(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let a = depths(self.depth_needed(), x.min(1.0));
        self.log_from_depths(&a).exp()
    }

    /// Chain value at distance `t` in `(0, R]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= self.r) {
            return Err(Error::Domain(format!("t = {t} outside (0, {}]", self.r)));
        }
        Ok(self.eval_unit(t / self.r))
    }

    /// `int_0^T (1/x) chain(x) dx = L_m(T/R)`; only defined for the square tail.
    pub fn antiderivative(&self, upper: f64) -> Result<f64> {
        if self.tail != Tail::Square {
            return Err(Error::Unsupported(format!(
                "closed-form antiderivative needs the square tail, got {}",
                self.tail.label()
            )));
        }
        if !(upper > 0.0 && upper <= self.r) {
            return Err(Error::Domain(format!("T = {upper} outside (0, {}]", self.r)));
        }
        eval_l(self.m, upper / self.r)
    }
}

/// Adaptive quadrature of `int_0^T (1/x) chain(x) dx` for any tail.
///
/// Integrates in `q = a_{p-1}(x/R)` where `p` is the reference level of the
/// chain. The Jacobian `1/x * prod_{j<p} L_j` is taken from the depths, and the
/// half-line in `q` is folded onto `(0, 1)` by `q = q0 + v / (1 - v)`.
pub fn chain_integral_quadrature(chain: &WeightChain, upper: f64, opts: QuadOptions) -> Result<f64> {
    if !(upper > 0.0 && upper <= chain.r()) {
        return Err(Error::Domain(format!("T = {upper} outside (0, {}]", chain.r())));
    }
    let p = chain.depth_needed() as usize;
    let q0 = depths(p as u32 - 1, upper / chain.r())[p - 1];
    let f = |v: f64| {
        let q = q0 + v / (1.0 - v);
        let jac = 1.0 / ((1.0 - v) * (1.0 - v));
        // Rebuild depths from level p-1 up and from p-1 down.
        let mut a = vec![0.0; p + 2];
        a[p - 1] = q;
        for j in (1..p).rev() {
            a[j - 1] = a[j].exp_m1();
        }
        for j in p..p + 2 {
            a[j] = a[j - 1].ln_1p();
        }
        chain.log_reduced(&a, p).exp() * jac
    };
    Ok(quad::integrate(f, 0.0, 1.0, &[], opts)?.value)
}

/// Central-difference estimate of `L_m'(t)` with step `h`.
pub fn eval_l_derivative_fd(m: u32, t: f64, h: f64) -> Result<f64> {
    Ok((eval_l(m, t + h)? - eval_l(m, t - h)?) / (2.0 * h))
}

fn check_lattice(k: i64) -> Result<()> {
    if k >= 0 {
        return Err(Error::Domain(format!("lattice index k = {k} must be <= -1")));
    }
    Ok(())
}

/// Depths of the lattice sequence: `a_1 = ln(-k)`, `a_j = ln(1 + a_{j-1})`,
/// so that `Y_j(k) = exp(-a_j)`. Index 0 is unused and set to `+inf`.
fn lattice_depths(m: u32, k: i64) -> Vec<f64> {
    let mut a = vec![f64::INFINITY, (-(k as f64)).ln()];
    for j in 2..=m as usize {
        a.push(a[j - 1].ln_1p());
    }
    a
}

/// `Y_1(k) = 1/(-k)`, `Y_m(k) = 1/(1 - ln Y_{m-1}(k))`.
pub fn eval_y(m: u32, k: i64) -> Result<f64> {
    check_lattice(k)?;
    if m == 0 {
        return Err(Error::Domain("m must be at least 1".into()));
    }
    Ok((-lattice_depths(m, k)[m as usize]).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `Y_m(k) - Y_m(k-1) >= Y_1(k) ... Y_{m-1}(k) Y_m(k)^2 / 2^{m+1}`.
///
/// The difference is formed from depth increments so that it keeps full
/// relative accuracy when `Y_m(k)` and `Y_m(k-1)` nearly coincide.
pub fn check_y_gap(m: u32, k: i64) -> Result<InequalityCheck> {
    check_lattice(k)?;
    if m < 2 {
        return Err(Error::Precondition(format!("gap inequality needs m >= 2, got {m}")));
    }
    let a = lattice_depths(m, k);
    let mut d = (1.0 / -(k as f64)).ln_1p();
    for j in 2..=m as usize {
        d = (d / (1.0 + a[j - 1])).ln_1p();
    }
    let mm = m as usize;
    let lhs = -(-a[mm]).exp() * (-d).exp_m1();
    let log_rhs = -a[1..mm].iter().sum::<f64>() - 2.0 * a[mm] - (m as f64 + 1.0) * std::f64::consts::LN_2;
    let rhs = log_rhs.exp();
    Ok(InequalityCheck {
        lhs,
        rhs,
        holds: lhs >= rhs,
    })
}

/// `L_m(x/R) < Y_m(k)` at `samples` points of `[3^k, 3^{k+1})` and just below
/// the right end.
pub fn check_l_below_y(m: u32, k: i64, r: f64, samples: usize) -> Result<bool> {
    check_lattice(k)?;
    if !(r > 1.0) {
        return Err(Error::Precondition(format!("R must exceed 1, got {r}")));
    }
    if samples == 0 {
        return Err(Error::Precondition("at least one sample required".into()));
    }
    let y = eval_y(m, k)?;
    let lo = 3f64.powi(k as i32);
    let hi = 3.0 * lo;
    let mut xs: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / samples as f64)
        .collect();
    xs.push(hi * (1.0 - 1e-12));
    for x in xs {
        if eval_l(m, x / r)? >= y {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `C(theta)` with `L_m^theta <= C L_{m+1}^2`: `(2/r)^2 e^{r-2}` where `r` is
/// `theta` for `theta <= 1` and otherwise the part of `theta` in `(0, 1]`
/// left after removing `ceil(theta) - 1`.
pub fn theta_domination_constant(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    let r = if theta <= 1.0 {
        theta
    } else {
        theta - (theta.ceil() - 1.0)
    };
    Ok((2.0 / r).powi(2) * (r - 2.0).exp())
}

/// Slack allowed in log space when comparing the two sides of the
/// theta-domination inequality, which is tight where `L_m = e^{-1}` and `theta = 1`.
pub const THETA_LOG_SLACK: f64 = 1e-12;

/// `L_m^theta(t) <= C(theta) L_{m+1}^2(t)` at every grid point in `(0, 1)`.
pub fn check_theta_domination(m: u32, theta: f64, grid: &[f64]) -> Result<bool> {
    let log_c = theta_domination_constant(theta)?.ln();
    for &t in grid {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Domain(format!("grid point t = {t} outside (0, 1)")));
        }
        let a = depths(m + 1, t);
        let gap = 2.0 * a[m as usize + 1] - theta * a[m as usize];
        if gap > log_c + THETA_LOG_SLACK {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `L_m(1/R) >= 1/((m+1) R)` for `R > 1`.
pub fn check_l_lower_bound_at_inv_r(m: u32, r: f64) -> Result<InequalityCheck> {
    if !(r > 1.0) {
        return Err(Error::Precondition(format!("R must exceed 1, got {r}")));
    }
    let lhs = eval_l(m, 1.0 / r)?;
    let rhs = 1.0 / ((m as f64 + 1.0) * r);
    Ok(InequalityCheck {
        lhs,
        rhs,
        holds: lhs >= rhs,
    })
}

/// `rho*(t) = beta ln(1 - ln L_m(t)) / ln(1 - ln L_{m-1}(t))`.
pub fn eval_rho_star(m: u32, beta: f64, t: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("m must be at least 1".into()));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("t = {t} outside (0, 1)")));
    }
    let a = depths(m + 1, t);
    Ok(beta * a[m as usize + 1] / a[m as usize])
}

/// Relative residual of `L_m^{1+rho*} = L_m L_{m+1}^beta` at `t`.
pub fn rho_star_identity_residual(m: u32, beta: f64, t: f64) -> Result<f64> {
    let rho = eval_rho_star(m, beta, t)?;
    let lm = eval_l(m, t)?;
    let lhs = lm.powf(1.0 + rho);
    let rhs = lm * eval_l(m + 1, t)?.powf(beta);
    Ok(((lhs - rhs) / rhs).abs())
}
