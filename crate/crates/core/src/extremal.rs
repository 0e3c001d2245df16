//! Derivative-free search for functions with large Hardy ratios, giving
//! empirical lower bounds on the constants.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{Bump, TestFunction};
use crate::geometry::Domain;
use crate::hardy::{self, IntermediateOptions, LhsOptions};
use crate::quad::QuadOptions;

/// Search-time relative quadrature tolerance; the incumbent is re-evaluated
/// one order tighter.
pub const SEARCH_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// `k` bumps, each given by its left end, relative width and (after the
    /// first) amplitude. With `free_amplitude` the first amplitude is a
    /// parameter too.
    BumpMixture { k: usize, free_amplitude: bool },
    /// Piecewise-linear profile through `knots` equispaced values in `[-1, 1]`.
    SplineProfile { knots: usize },
    /// A single function with no free parameters.
    Fixed { u: TestFunction },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricFamily {
    pub kind: FamilyKind,
    pub domain: Domain,
    pub bounds: Vec<(f64, f64)>,
}

impl ParametricFamily {
    pub fn bump_mixture(k: usize, domain: Domain) -> Result<Self> {
        Self::new(FamilyKind::BumpMixture { k, free_amplitude: false }, domain)
    }

    pub fn spline_profile(knots: usize, domain: Domain) -> Result<Self> {
        Self::new(FamilyKind::SplineProfile { knots }, domain)
    }

    pub fn fixed(u: TestFunction, domain: Domain) -> Result<Self> {
        u.check_domain(&domain)?;
        Self::new(FamilyKind::Fixed { u }, domain)
    }

    pub fn new(kind: FamilyKind, domain: Domain) -> Result<Self> {
        let bounds = match &kind {
            FamilyKind::BumpMixture { k, free_amplitude } => {
                if *k == 0 {
                    return Err(Error::Precondition("bump mixture needs k >= 1".into()));
                }
                let mut b = Vec::new();
                for i in 0..*k {
                    b.push((0.0, 0.9));
                    b.push((0.05, 1.0));
                    if i > 0 {
                        b.push((-1.0, 1.0));
                    } else if *free_amplitude {
                        b.push((0.5, 2.0));
                    }
                }
                b
            }
            FamilyKind::SplineProfile { knots } => {
                if *knots < 2 {
                    return Err(Error::Precondition("spline profile needs at least two knots".into()));
                }
                vec![(-1.0, 1.0); *knots]
            }
            FamilyKind::Fixed { .. } => Vec::new(),
        };
        if !matches!(kind, FamilyKind::Fixed { .. }) && domain.dim() != 1 {
            return Err(Error::Unsupported("parametric families live on intervals".into()));
        }
        Ok(Self { kind, domain, bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// The function at `params`, supported inside the domain.
    pub fn instantiate(&self, params: &[f64]) -> Result<TestFunction> {
        if params.len() != self.dim() {
            return Err(Error::Precondition(format!(
                "expected {} parameters, got {}",
                self.dim(),
                params.len()
            )));
        }
        match &self.kind {
            FamilyKind::Fixed { u } => Ok(u.clone()),
            FamilyKind::BumpMixture { k, free_amplitude } => {
                let b = self.domain.bounding_box();
                let (lo, hi) = (b.lo[0], b.hi[0]);
                let mut bumps = Vec::with_capacity(*k);
                let mut it = params.iter().copied();
                for i in 0..*k {
                    let a = it.next().expect("length checked");
                    let w = it.next().expect("length checked");
                    let amplitude = if i > 0 || *free_amplitude { it.next().expect("length checked") } else { 1.0 };
                    let left = lo + a * (hi - lo);
                    let right = left + w * (hi - left);
                    bumps.push(Bump {
                        center: vec![0.5 * (left + right)],
                        radius: 0.5 * (right - left),
                        amplitude,
                    });
                }
                if bumps.len() == 1 {
                    let b = bumps.pop().expect("one bump");
                    TestFunction::bump(b.center, b.radius, b.amplitude)
                } else {
                    TestFunction::bump_sum(bumps)
                }
            }
            FamilyKind::SplineProfile { knots } => {
                let b = self.domain.bounding_box();
                let xs: Vec<f64> = (0..*knots)
                    .map(|i| b.lo[0] + (b.hi[0] - b.lo[0]) * i as f64 / (*knots - 1) as f64)
                    .collect();
                TestFunction::piecewise_linear(xs, params.to_vec())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    Main { m: u32, r: f64 },
    Intermediate { s: f64, m: u32, r: f64 },
}

/// Measured constant of the objective's verifier at `params`, with relative
/// quadrature tolerance `tol`.
pub fn evaluate(family: &ParametricFamily, objective: Objective, params: &[f64], tol: f64) -> Result<f64> {
    let u = family.instantiate(params)?;
    let lhs = LhsOptions {
        quad: QuadOptions {
            rel_tol: tol,
            ..LhsOptions::default().quad
        },
        ..LhsOptions::default()
    };
    let report = match objective {
        Objective::Main { m, r } => hardy::verify_main_with(&u, &family.domain, m, r, &lhs)?,
        Objective::Intermediate { s, m, r } => {
            let opts = IntermediateOptions {
                lhs,
                c1_poin: Some(1.0),
                ..Default::default()
            };
            hardy::verify_intermediate(&u, &family.domain, s, m, r, &opts)?
        }
    };
    Ok(report.measured_constant)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalResult {
    pub family: FamilyKind,
    pub objective: Objective,
    pub best_params: Vec<f64>,
    pub best_ratio: f64,
    pub evaluations: usize,
    pub seed: u64,
    /// Coefficient of variation of the per-restart best ratios.
    pub restart_dispersion: f64,
    pub restart_best: Vec<f64>,
    /// Best-so-far ratio after each evaluation, per restart.
    pub traces: Vec<Vec<f64>>,
}

struct Run {
    best_x: Vec<f64>,
    best_f: f64,
    evaluations: usize,
    trace: Vec<f64>,
}

/// Bounded Nelder-Mead maximization of `f` from `x0`, clamping trial points
/// into the box, within `budget` evaluations.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: Vec<f64>, bounds: &[(f64, f64)], budget: usize) -> Run {
    let n = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let mut run = Run {
        best_x: x0.clone(),
        best_f: f64::NEG_INFINITY,
        evaluations: 0,
        trace: Vec::with_capacity(budget),
    };
    let eval = |x: &[f64], run: &mut Run| -> f64 {
        let v = f(x);
        let v = if v.is_finite() { v } else { f64::NEG_INFINITY };
        run.evaluations += 1;
        if v > run.best_f {
            run.best_f = v;
            run.best_x = x.to_vec();
        }
        run.trace.push(run.best_f);
        v
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(&x0, &mut run);
    simplex.push((x0.clone(), v0));
    for i in 0..n {
        let (lo, hi) = bounds[i];
        let step = 0.1 * (hi - lo);
        let mut x = x0.clone();
        x[i] = if x[i] + step <= hi { x[i] + step } else { x[i] - step };
        clamp(&mut x);
        let v = eval(&x, &mut run);
        simplex.push((x, v));
    }
    while run.evaluations < budget && n > 0 {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let spread = simplex[0].1 - simplex[n].1;
        let size: f64 = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread.abs() <= 1e-12 * simplex[0].1.abs() && size < 1e-9 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let towards = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect();
            clamp(&mut x);
            x
        };
        let xr = towards(1.0);
        let fr = eval(&xr, &mut run);
        if fr > simplex[0].1 {
            let xe = towards(2.0);
            let fe = eval(&xe, &mut run);
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
        } else if fr > simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr > worst.1 {
                let x = towards(0.5);
                let v = eval(&x, &mut run);
                (x, v)
            } else {
                let x = towards(-0.5);
                let v = eval(&x, &mut run);
                (x, v)
            };
            if fc > worst.1.max(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = best.iter().zip(&item.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    clamp(&mut x);
                    let v = eval(&x, &mut run);
                    *item = (x, v);
                    if run.evaluations >= budget {
                        break;
                    }
                }
            }
        }
    }
    run
}

/// Nelder-Mead with uniform random restarts. Each restart draws its start
/// from its own stream of `seed`, so restarts are independent of scheduling.
pub fn maximize_ratio(
    family: &ParametricFamily,
    objective: Objective,
    budget: usize,
    restarts: usize,
    seed: u64,
) -> Result<ExtremalResult> {
    if budget < 100 {
        return Err(Error::Precondition(format!("budget {budget} below 100 evaluations per restart")));
    }
    if restarts < 3 {
        return Err(Error::Precondition(format!("{restarts} restarts, need at least 3")));
    }
    let f = |x: &[f64]| evaluate(family, objective, x, SEARCH_TOL).unwrap_or(f64::NEG_INFINITY);
    let runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x0: Vec<f64> = family.bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect();
            nelder_mead(f, x0, &family.bounds, budget)
        })
        .collect();
    let restart_best: Vec<f64> = runs.iter().map(|r| r.best_f.max(0.0)).collect();
    if restart_best.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateFamily("every sampled ratio vanished".into()));
    }
    let winner = runs
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.best_f > runs[best].best_f { i } else { best });
    let best_params = runs[winner].best_x.clone();
    let best_ratio = evaluate(family, objective, &best_params, SEARCH_TOL / 10.0)?;
    let n = restart_best.len() as f64;
    let mean = restart_best.iter().sum::<f64>() / n;
    let var = restart_best.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(ExtremalResult {
        family: family.kind.clone(),
        objective,
        best_params,
        best_ratio,
        evaluations: runs.iter().map(|r| r.evaluations).sum::<usize>() + 1,
        seed,
        restart_dispersion: var.sqrt() / mean,
        restart_best,
        traces: runs.into_iter().map(|r| r.trace).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub m: u32,
    pub best_ratio: f64,
    pub normalized: f64,
}

/// `(m, best_ratio, best_ratio / 2^m)` for the main objective over `ms`.
pub fn constant_growth_profile(
    family: &ParametricFamily,
    ms: &[u32],
    r: f64,
    budget: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<GrowthRow>> {
    ms.iter()
        .map(|&m| {
            let res = maximize_ratio(family, Objective::Main { m, r }, budget, restarts, seed)?;
            Ok(GrowthRow {
                m,
                best_ratio: res.best_ratio,
                normalized: res.best_ratio / 2f64.powi(m as i32),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: f64 = std::f64::consts::E;

    fn interval() -> Domain {
        Domain::interval(1.0).unwrap()
    }

    #[test]
    fn singleton_family_reproduces_verifier() {
        let u = TestFunction::bump(vec![0.7], 0.4, 1.0).unwrap();
        let fam = ParametricFamily::fixed(u.clone(), interval()).unwrap();
        let obj = Objective::Main { m: 2, r: E };
        let res = maximize_ratio(&fam, obj, 100, 3, 1).unwrap();
        let direct = evaluate(&fam, obj, &[], SEARCH_TOL / 10.0).unwrap();
        assert_eq!(res.best_ratio, direct);
        assert_eq!(res.restart_dispersion, 0.0);
    }

    #[test]
    fn degenerate_family() {
        let fam = ParametricFamily::fixed(TestFunction::constant(2.0), interval()).unwrap();
        let r = maximize_ratio(&fam, Objective::Main { m: 2, r: E }, 100, 3, 0);
        assert!(matches!(r, Err(Error::DegenerateFamily(_))));
    }

    #[test]
    fn preconditions() {
        let fam = ParametricFamily::bump_mixture(1, interval()).unwrap();
        let obj = Objective::Main { m: 2, r: E };
        assert!(maximize_ratio(&fam, obj, 99, 3, 0).is_err());
        assert!(maximize_ratio(&fam, obj, 100, 2, 0).is_err());
    }

    #[test]
    fn instantiated_bumps_stay_inside() {
        let fam = ParametricFamily::bump_mixture(2, interval()).unwrap();
        let u = fam.instantiate(&[0.9, 1.0, 0.0, 0.05, -1.0]).unwrap();
        let tv = crate::functions::tv_seminorm(&u, &interval()).unwrap();
        assert!(tv > 0.0);
        assert_eq!(u.eval1(0.0), 0.0);
        assert_eq!(u.eval1(2.0), 0.0);
    }

    #[test]
    fn traces_are_monotone_and_deterministic() {
        let fam = ParametricFamily::bump_mixture(1, interval()).unwrap();
        let obj = Objective::Main { m: 2, r: E };
        let a = maximize_ratio(&fam, obj, 100, 3, 5).unwrap();
        let b = maximize_ratio(&fam, obj, 100, 3, 5).unwrap();
        assert_eq!(a, b);
        for t in &a.traces {
            assert!(t.windows(2).all(|w| w[1] >= w[0]));
        }
        let again = evaluate(&fam, obj, &a.best_params, SEARCH_TOL / 10.0).unwrap();
        assert!(((again - a.best_ratio) / a.best_ratio).abs() < 1e-9);
    }

    #[test]
    fn amplitude_is_irrelevant() {
        let fixed = ParametricFamily::bump_mixture(1, interval()).unwrap();
        let free = ParametricFamily::new(FamilyKind::BumpMixture { k: 1, free_amplitude: true }, interval()).unwrap();
        let obj = Objective::Main { m: 2, r: E };
        let a = evaluate(&fixed, obj, &[0.2, 0.5], SEARCH_TOL).unwrap();
        let b = evaluate(&free, obj, &[0.2, 0.5, 1.7], SEARCH_TOL).unwrap();
        assert!(((a - b) / a).abs() < 1e-9, "{a} {b}");
    }
}
