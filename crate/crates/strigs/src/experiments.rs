//! Ensemble simulation, rate fitting, and the statistical checks.
//!
//! Paths run concurrently with per-path seeds split from a master seed;
//! all reductions are pairwise in path-index order, so results are identical
//! for any worker count. Rate fits are ordinary least squares of
//! `log(metric)` on `log(t)` with one-sided acceptance: the observed decay
//! must be at least as fast as the claimed rate, up to a slack, because the
//! claims are upper rates rather than exact asymptotics.

use crate::dynamics::{
    self, integrate_observed, NoiseStream, SimState, SystemSpec,
};
use crate::energy::{self, log_gamma};
use crate::error::{Error, Result};
use crate::problems::ConvexProblem;
use crate::rng;
use crate::schedules::{DampingParams, DiffusionSchedule, EpsilonSchedule};
use crate::tikhonov::{self, DEFAULT_PATH_TOL};
use nalgebra::DVector;
use rayon::prelude::*;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// `f(X) - inf f`.
    FGap,
    /// `||X - x_eps||^2`.
    DistSq,
    /// `||Y||`.
    YNorm,
    /// The energy function.
    Energy,
}

impl Metric {
    pub fn label(&self) -> &'static str {
        match self {
            Metric::FGap => "f_gap",
            Metric::DistSq => "dist_sq",
            Metric::YNorm => "y_norm",
            Metric::Energy => "energy",
        }
    }

    pub const ALL: [Metric; 4] = [Metric::FGap, Metric::DistSq, Metric::YNorm, Metric::Energy];
}

/// Claimed decay exponent for a metric under the power schedule `t^-r`.
/// The velocity rate switches branch at `r = 2/3`.
pub fn expected_slope(metric: Metric, r: f64) -> f64 {
    match metric {
        Metric::FGap => -r,
        Metric::DistSq => -(2.0 - r) / 2.0,
        Metric::YNorm => {
            if r >= 2.0 / 3.0 {
                -(r + 2.0) / 4.0
            } else {
                -r
            }
        }
        Metric::Energy => -(r + 2.0) / 2.0,
    }
}

/// Pairwise sum in index order: deterministic and worker-count independent.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => {
            let (a, b) = v.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// Per-path metrics at the shared checkpoints plus their summary statistics.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub n_paths: usize,
    pub master_seed: u64,
    /// Checkpoint times actually realized (snapped to the step grid).
    pub checkpoints: Vec<f64>,
    /// `[metric][path][checkpoint]`, indexed by `Metric::ALL` order.
    pub per_path: [Vec<Vec<f64>>; 4],
    pub final_states: Vec<SimState>,
}

impl EnsembleResult {
    fn metric_index(metric: Metric) -> usize {
        Metric::ALL.iter().position(|&m| m == metric).unwrap()
    }

    pub fn paths(&self, metric: Metric) -> &Vec<Vec<f64>> {
        &self.per_path[Self::metric_index(metric)]
    }

    /// Per-checkpoint ensemble mean and standard error (sample std / sqrt n).
    pub fn mean_se(&self, metric: Metric) -> (Vec<f64>, Vec<f64>) {
        let paths = self.paths(metric);
        let n_cp = self.checkpoints.len();
        let mut means = Vec::with_capacity(n_cp);
        let mut ses = Vec::with_capacity(n_cp);
        let mut column = vec![0.0; self.n_paths];
        for k in 0..n_cp {
            for (i, p) in paths.iter().enumerate() {
                column[i] = p[k];
            }
            let (m, s) = mean_and_se(&column);
            means.push(m);
            ses.push(s);
        }
        (means, ses)
    }
}

/// Runs `n_paths` trajectories with seeds split from `master_seed` and
/// evaluates the metrics at every checkpoint. Fails if any path aborts on a
/// nonfinite state or a path solve stalls.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    spec: &SystemSpec,
    damping: &DampingParams,
    t1: f64,
    init: &SimState,
    t_end: f64,
    h: f64,
    n_paths: usize,
    master_seed: u64,
    checkpoints: &[f64],
) -> Result<EnsembleResult> {
    if n_paths == 0 {
        return Err(Error::InvalidParam("n_paths must be >= 1".into()));
    }
    let per_path: Vec<Result<([Vec<f64>; 4], Vec<f64>, SimState)>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let seed = rng::path_seed(master_seed, i as u64);
            let traj = dynamics::integrate(spec, init, t_end, h, seed, checkpoints);
            if let Some(fail) = traj.abort {
                return Err(Error::NonFiniteState {
                    t: fail.t,
                    step: fail.step,
                });
            }
            let cps = energy::trajectory_energies(
                &spec.problem,
                damping,
                &spec.eps.clone().ok_or_else(|| {
                    Error::UnsupportedSchedule("ensemble metrics need an epsilon schedule".into())
                })?,
                t1,
                &traj,
                DEFAULT_PATH_TOL,
            )?;
            let times: Vec<f64> = cps.iter().map(|c| c.report.t).collect();
            let mut f_gap = Vec::with_capacity(cps.len());
            let mut dist = Vec::with_capacity(cps.len());
            let mut y_norm = Vec::with_capacity(cps.len());
            let mut en = Vec::with_capacity(cps.len());
            for c in &cps {
                f_gap.push(spec.problem.eval(&c.x) - spec.problem.inf_value());
                dist.push((&c.x - &c.path.x).norm_squared());
                y_norm.push(c.y.norm());
                en.push(c.report.energy);
            }
            Ok(([f_gap, dist, y_norm, en], times, traj.last().clone()))
        })
        .collect();

    let mut metrics: [Vec<Vec<f64>>; 4] = Default::default();
    let mut finals = Vec::with_capacity(n_paths);
    let mut times: Option<Vec<f64>> = None;
    for res in per_path {
        let (m, t, last) = res?;
        if times.is_none() {
            times = Some(t);
        }
        for (slot, col) in metrics.iter_mut().zip(m.into_iter()) {
            slot.push(col);
        }
        finals.push(last);
    }
    Ok(EnsembleResult {
        n_paths,
        master_seed,
        checkpoints: times.unwrap(),
        per_path: metrics,
        final_states: finals,
    })
}

// ---------------------------------------------------------------------------
// Rate fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RateFit {
    pub metric: Metric,
    pub window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub expected_slope: f64,
    pub slack: f64,
    pub pass: bool,
    /// Some values hit the positivity floor before the log.
    pub floored: bool,
    pub n_points: usize,
}

/// Positivity floor applied before taking logs; exact zeros occur on
/// deterministic quadratic runs.
pub const METRIC_FLOOR: f64 = 1e-30;

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = pairwise_sum(&lx) / n;
    let my = pairwise_sum(&ly) / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Fits the decay exponent of `values` over checkpoints inside `window` and
/// compares one-sidedly against `expected` (pass when
/// `slope <= expected + slack`).
pub fn fit_rate(
    times: &[f64],
    values: &[f64],
    metric: Metric,
    window: (f64, f64),
    expected: f64,
    slack: f64,
) -> Result<RateFit> {
    assert_eq!(times.len(), values.len());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut floored = false;
    for (&t, &v) in times.iter().zip(values) {
        if t < window.0 || t > window.1 {
            continue;
        }
        let v = if v > METRIC_FLOOR {
            v
        } else {
            floored = true;
            METRIC_FLOOR
        };
        xs.push(t);
        ys.push(v);
    }
    if xs.len() < 8 {
        return Err(Error::WindowTooSmall(format!(
            "{} checkpoints in [{}, {}], need >= 8",
            xs.len(),
            window.0,
            window.1
        )));
    }
    let (slope, intercept, r_squared) = fit_loglog(&xs, &ys);
    Ok(RateFit {
        metric,
        window,
        slope,
        intercept,
        r_squared,
        expected_slope: expected,
        slack,
        pass: slope <= expected + slack,
        floored,
        n_points: xs.len(),
    })
}

// ---------------------------------------------------------------------------
// Bound comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct BoundCheckPoint {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Compares the ensemble-mean energy with a bound curve evaluated at the same
/// checkpoints: pass when `mean <= bound + 3 se` pointwise.
pub fn check_expectation_bound(result: &EnsembleResult, bound: &[f64]) -> Vec<BoundCheckPoint> {
    let (means, ses) = result.mean_se(Metric::Energy);
    result
        .checkpoints
        .iter()
        .zip(means.iter().zip(ses.iter().zip(bound)))
        .map(|(&t, (&mean, (&se, &b)))| BoundCheckPoint {
            t,
            mean,
            se,
            bound: b,
            ok: mean <= b + 3.0 * se,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Martingale checks
// ---------------------------------------------------------------------------

/// Accumulated stochastic-integral proxy of one path:
/// `sum_k gamma(t_k)/gamma(T) < V(t_k), sigma(t_k) dW_k >` over steps past t1.
#[allow(clippy::too_many_arguments)]
pub fn martingale_proxy(
    spec: &SystemSpec,
    damping: &DampingParams,
    t1: f64,
    init: &SimState,
    t_end: f64,
    h: f64,
    stream: NoiseStream,
) -> Result<f64> {
    let eps_sched = spec
        .eps
        .clone()
        .ok_or_else(|| Error::UnsupportedSchedule("martingale proxy needs eps".into()))?;
    let problem = spec.problem.clone();
    let lg_end = log_gamma(damping, &eps_sched, t1, t_end);
    let mut acc = 0.0;
    let mut warm: Option<DVector<f64>> = None;
    let mut solver_err = None;
    let traj = integrate_observed(spec, init, t_end, h, stream, &[], |ctx| {
        if ctx.t < t1 || solver_err.is_some() {
            return;
        }
        let eps = eps_sched.eval(ctx.t);
        let x_eps = match problem.regularized_argmin(eps) {
            Some(x) => x,
            None => {
                let pt =
                    tikhonov::solve_x_eps_iterative(&problem, eps, warm.as_ref(), DEFAULT_PATH_TOL);
                if !pt.converged {
                    solver_err = Some(Error::SolverFailure(format!(
                        "path solve stalled at t = {}",
                        ctx.t
                    )));
                    return;
                }
                pt.x
            }
        };
        warm = Some(x_eps.clone());
        let v = energy::v_eval(damping, &eps_sched, ctx.t, ctx.x, ctx.y, &x_eps);
        let pushed = spec.sigma.apply(ctx.t, ctx.dw);
        let lg = log_gamma(damping, &eps_sched, t1, ctx.t);
        acc += (lg - lg_end).exp() * v.dot(&pushed);
    });
    if let Some(e) = solver_err {
        return Err(e);
    }
    if let Some(fail) = traj.abort {
        return Err(Error::NonFiniteState {
            t: fail.t,
            step: fail.step,
        });
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct MartingaleCheck {
    pub mean: f64,
    pub se: f64,
    pub ok: bool,
    pub samples: Vec<f64>,
}

/// Ensemble mean of the stochastic-integral proxy; ok when `|mean| <= 3 se`.
#[allow(clippy::too_many_arguments)]
pub fn martingale_mean_check(
    spec: &SystemSpec,
    damping: &DampingParams,
    t1: f64,
    init: &SimState,
    t_end: f64,
    h: f64,
    n_paths: usize,
    master_seed: u64,
) -> Result<MartingaleCheck> {
    if n_paths < 32 {
        return Err(Error::InvalidParam(
            "martingale check needs n_paths >= 32".into(),
        ));
    }
    let samples: Vec<Result<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let seed = rng::path_seed(master_seed, i as u64);
            martingale_proxy(spec, damping, t1, init, t_end, h, NoiseStream::new(seed))
        })
        .collect();
    let samples: Result<Vec<f64>> = samples.into_iter().collect();
    let samples = samples?;
    let (mean, se) = mean_and_se(&samples);
    Ok(MartingaleCheck {
        mean,
        se,
        ok: mean.abs() <= 3.0 * se,
        samples,
    })
}

/// Antithetic cancellation of the linear noise functional
/// `sum_k w_k . dW_k` with weights frozen along the noiseless reference path
/// (`w_k = gamma ratio * sigma^T V_ref`). Linearity makes each `(W, -W)` pair
/// cancel exactly; returns the largest absolute pair sum, which must be 0.0.
#[allow(clippy::too_many_arguments)]
pub fn antithetic_pair_cancellation(
    spec: &SystemSpec,
    damping: &DampingParams,
    t1: f64,
    init: &SimState,
    t_end: f64,
    h: f64,
    n_pairs: usize,
    master_seed: u64,
) -> Result<f64> {
    let eps_sched = spec
        .eps
        .clone()
        .ok_or_else(|| Error::UnsupportedSchedule("antithetic check needs eps".into()))?;
    let problem = spec.problem.clone();
    let lg_end = log_gamma(damping, &eps_sched, t1, t_end);

    // Reference weights from the noiseless path, one vector per step.
    let silent = SystemSpec {
        sigma: DiffusionSchedule::zero(spec.dim()),
        ..spec.clone()
    };
    let mut weights: Vec<(usize, DVector<f64>)> = Vec::new();
    let mut warm: Option<DVector<f64>> = None;
    let mut solver_err = None;
    let ref_traj = integrate_observed(
        &silent,
        init,
        t_end,
        h,
        NoiseStream::new(0),
        &[],
        |ctx| {
            if ctx.t < t1 || solver_err.is_some() {
                return;
            }
            let eps = eps_sched.eval(ctx.t);
            let x_eps = match problem.regularized_argmin(eps) {
                Some(x) => x,
                None => {
                    let pt = tikhonov::solve_x_eps_iterative(
                        &problem,
                        eps,
                        warm.as_ref(),
                        DEFAULT_PATH_TOL,
                    );
                    if !pt.converged {
                        solver_err = Some(Error::SolverFailure(format!(
                            "path solve stalled at t = {}",
                            ctx.t
                        )));
                        return;
                    }
                    pt.x
                }
            };
            warm = Some(x_eps.clone());
            let v = energy::v_eval(damping, &eps_sched, ctx.t, ctx.x, ctx.y, &x_eps);
            // sigma is self-adjoint here (scaled identity / diagonal), so
            // sigma^T V = sigma V.
            let w = spec.sigma.apply(ctx.t, &v);
            let lg = log_gamma(damping, &eps_sched, t1, ctx.t);
            weights.push((ctx.step, &w * (lg - lg_end).exp()));
        },
    );
    if let Some(e) = solver_err {
        return Err(e);
    }
    if ref_traj.abort.is_some() {
        return Err(Error::SolverFailure("reference path aborted".into()));
    }

    let dim = spec.dim();
    let sqrt_h = h.sqrt();
    let functional = |stream: NoiseStream| -> f64 {
        let mut acc = 0.0;
        for (step, w) in &weights {
            let mut dot = 0.0;
            for j in 0..dim {
                dot += w[j] * stream.normal(*step as u64, j as u64) * sqrt_h;
            }
            acc += dot;
        }
        acc
    };

    let mut worst: f64 = 0.0;
    for i in 0..n_pairs {
        let seed = rng::path_seed(master_seed, i as u64);
        let plus = functional(NoiseStream::new(seed));
        let minus = functional(NoiseStream::antithetic(seed));
        worst = worst.max((plus + minus).abs());
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Minimum-norm selection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MinNormCheck {
    pub mean_dist: f64,
    pub max_path_dist: f64,
    pub threshold: f64,
    pub ok: bool,
}

/// Distance of the final ensemble-mean state (and of every single path) to
/// the minimum-norm minimizer.
pub fn min_norm_convergence_check(
    final_states: &[SimState],
    problem: &ConvexProblem,
    threshold: f64,
) -> Result<MinNormCheck> {
    let xstar = problem
        .min_norm_minimizer()
        .ok_or_else(|| Error::InvalidParam("problem has no known minimum-norm minimizer".into()))?;
    if final_states.is_empty() {
        return Err(Error::InvalidParam("no paths".into()));
    }
    let dim = problem.dim();
    let mut mean = DVector::zeros(dim);
    for s in final_states {
        mean += &s.x;
    }
    mean /= final_states.len() as f64;
    let mean_dist = (&mean - xstar).norm();
    let max_path_dist = final_states
        .iter()
        .map(|s| (&s.x - xstar).norm())
        .fold(0.0f64, f64::max);
    Ok(MinNormCheck {
        mean_dist,
        max_path_dist,
        threshold,
        ok: mean_dist <= threshold && max_path_dist <= 3.0 * threshold,
    })
}

// ---------------------------------------------------------------------------
// Baseline comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BaselineRow {
    pub kind: &'static str,
    pub f_gap_end: f64,
    pub slope: Option<f64>,
}

/// Runs the named systems on identical noise and reports the final function
/// gap and the fitted decay exponent, side by side. Observational: no
/// pass/fail semantics.
#[allow(clippy::too_many_arguments)]
pub fn compare_baselines(
    problem: &Arc<ConvexProblem>,
    eps_sched: &EpsilonSchedule,
    damping: &DampingParams,
    sigma: &DiffusionSchedule,
    init: &SimState,
    t_end: f64,
    h: f64,
    seed: u64,
    checkpoints: &[f64],
    fit_window: (f64, f64),
) -> Vec<BaselineRow> {
    use dynamics::SystemKind;
    let r = eps_sched.power_r().unwrap_or(1.0);
    let kinds = vec![
        SystemKind::Strigs {
            delta: damping.delta,
        },
        SystemKind::Savd { alpha: 3.0 },
        SystemKind::Sgf,
        SystemKind::HeavyBall { mu: 1.0 },
        SystemKind::StrigsGen {
            alpha: damping.delta,
            q: 0.5 * r,
            a: 1.0,
            p: r,
        },
    ];
    kinds
        .into_iter()
        .map(|kind| {
            let spec = SystemSpec {
                kind,
                problem: problem.clone(),
                eps: Some(eps_sched.clone()),
                sigma: sigma.clone(),
            };
            let traj = dynamics::integrate(&spec, init, t_end, h, seed, checkpoints);
            let (times, gaps): (Vec<f64>, Vec<f64>) = traj
                .states
                .iter()
                .map(|s| (s.t, problem.eval(&s.x) - problem.inf_value()))
                .unzip();
            let f_gap_end = *gaps.last().unwrap_or(&f64::NAN);
            let slope = if traj.is_complete() {
                fit_rate(&times, &gaps, Metric::FGap, fit_window, -r, 0.15)
                    .ok()
                    .map(|f| f.slope)
            } else {
                None
            };
            BaselineRow {
                kind: kind.label(),
                f_gap_end,
                slope,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{log_checkpoints, SystemKind};
    use crate::problems::make_shifted_quadratic;
    use crate::schedules::{exp_diffusion, power_epsilon};

    fn quad_spec(dim: usize, sigma: DiffusionSchedule) -> (SystemSpec, DampingParams, f64) {
        let p = make_shifted_quadratic(DVector::from_element(dim, 0.5)).unwrap();
        let eps = power_epsilon(1.0, 1.0).unwrap();
        let damping = DampingParams::preset().with_t1(9.0);
        let spec = SystemSpec {
            kind: SystemKind::Strigs {
                delta: damping.delta,
            },
            problem: Arc::new(p),
            eps: Some(eps),
            sigma,
        };
        (spec, damping, 9.0)
    }

    #[test]
    fn expected_slopes_follow_piecewise_rule() {
        assert_eq!(expected_slope(Metric::FGap, 1.0), -1.0);
        assert_eq!(expected_slope(Metric::DistSq, 0.5), -0.75);
        assert_eq!(expected_slope(Metric::YNorm, 1.0), -0.75);
        // Below the 2/3 breakpoint the velocity rate is -r.
        assert_eq!(expected_slope(Metric::YNorm, 0.5), -0.5);
        assert_eq!(expected_slope(Metric::YNorm, 2.0 / 3.0), -(2.0 / 3.0 + 2.0) / 4.0);
    }

    #[test]
    fn fit_recovers_synthetic_power_laws() {
        let times: Vec<f64> = (0..100).map(|k| 10f64.powf(k as f64 / 33.0)).collect();
        let vals: Vec<f64> = times.iter().map(|t| 3.7 / (t * t)).collect();
        let fit = fit_rate(&times, &vals, Metric::FGap, (1.0, 1e3), -2.0, 0.1).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-6, "slope {}", fit.slope);
        assert!(fit.pass);
        assert!(fit.r_squared > 1.0 - 1e-12);

        let flat: Vec<f64> = times.iter().map(|_| 0.42).collect();
        let fit = fit_rate(&times, &flat, Metric::FGap, (1.0, 1e3), 0.0, 0.1).unwrap();
        assert!(fit.slope.abs() < 1e-10);
    }

    #[test]
    fn fit_floors_nonpositive_values_and_flags() {
        let times: Vec<f64> = (0..20).map(|k| 10f64.powf(k as f64 / 6.0)).collect();
        let mut vals: Vec<f64> = times.iter().map(|t| 1.0 / t).collect();
        vals[10] = 0.0;
        let fit = fit_rate(&times, &vals, Metric::FGap, (1.0, 2e3), -1.0, 0.5).unwrap();
        assert!(fit.floored);
    }

    #[test]
    fn fit_rejects_small_windows() {
        let times = vec![1.0, 2.0, 3.0];
        let vals = vec![1.0, 0.5, 0.33];
        assert!(matches!(
            fit_rate(&times, &vals, Metric::FGap, (1.0, 3.0), -1.0, 0.1),
            Err(Error::WindowTooSmall(_))
        ));
    }

    #[test]
    fn deterministic_ensemble_paths_are_identical_with_zero_se() {
        let (spec, damping, t1) = quad_spec(2, DiffusionSchedule::zero(2));
        let init = SimState::new(1.0, DVector::zeros(2), DVector::zeros(2));
        let cps = log_checkpoints(1.0, 50.0, 16);
        let res = run_ensemble(&spec, &damping, t1, &init, 50.0, 0.01, 4, 7, &cps).unwrap();
        let (_, ses) = res.mean_se(Metric::FGap);
        assert!(ses.iter().all(|&s| s == 0.0));
        for p in res.paths(Metric::Energy) {
            assert_eq!(p, &res.paths(Metric::Energy)[0]);
        }
    }

    #[test]
    fn single_path_means_equal_the_path() {
        let (spec, damping, t1) = quad_spec(2, DiffusionSchedule::zero(2));
        let init = SimState::new(1.0, DVector::zeros(2), DVector::zeros(2));
        let cps = log_checkpoints(1.0, 30.0, 8);
        let res = run_ensemble(&spec, &damping, t1, &init, 30.0, 0.01, 1, 3, &cps).unwrap();
        let (means, ses) = res.mean_se(Metric::FGap);
        assert_eq!(means, res.paths(Metric::FGap)[0]);
        assert!(ses.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn standard_error_shrinks_with_path_count() {
        let sigma = exp_diffusion(1.0, 0.5, 2).unwrap();
        let (spec, damping, t1) = quad_spec(2, sigma);
        let init = SimState::new(1.0, DVector::zeros(2), DVector::zeros(2));
        let cps = vec![20.0];
        let small = run_ensemble(&spec, &damping, t1, &init, 20.0, 0.01, 64, 11, &cps).unwrap();
        let large = run_ensemble(&spec, &damping, t1, &init, 20.0, 0.01, 256, 11, &cps).unwrap();
        let (_, se_small) = small.mean_se(Metric::FGap);
        let (_, se_large) = large.mean_se(Metric::FGap);
        let k = se_small.last().unwrap() / se_large.last().unwrap();
        // 1/sqrt(n) predicts 2; allow a generous band.
        assert!(k > 2.0 / 1.5 && k < 2.0 * 1.5, "ratio {k}");
    }

    #[test]
    fn ensemble_reduction_is_worker_count_independent() {
        let sigma = exp_diffusion(1.0, 0.5, 2).unwrap();
        let (spec, damping, t1) = quad_spec(2, sigma);
        let init = SimState::new(1.0, DVector::zeros(2), DVector::zeros(2));
        let cps = log_checkpoints(1.0, 20.0, 8);
        let run = || {
            run_ensemble(&spec, &damping, t1, &init, 20.0, 0.01, 8, 5, &cps)
                .unwrap()
                .mean_se(Metric::Energy)
        };
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let (m1, s1) = pool1.install(run);
        let (m4, s4) = pool4.install(run);
        for (a, b) in m1.iter().zip(&m4) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in s1.iter().zip(&s4) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn martingale_proxy_is_zero_without_noise() {
        let (spec, damping, t1) = quad_spec(2, DiffusionSchedule::zero(2));
        let init = SimState::new(1.0, DVector::zeros(2), DVector::zeros(2));
        let v = martingale_proxy(
            &spec,
            &damping,
            t1,
            &init,
            50.0,
            0.01,
            NoiseStream::new(3),
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn antithetic_pairs_cancel_exactly() {
        let sigma = exp_diffusion(1.0, 0.5, 2).unwrap();
        let (spec, damping, t1) = quad_spec(2, sigma);
        let init = SimState::new(1.0, DVector::zeros(2), DVector::zeros(2));
        let worst =
            antithetic_pair_cancellation(&spec, &damping, t1, &init, 40.0, 0.01, 8, 17).unwrap();
        assert_eq!(worst, 0.0);
    }

    #[test]
    fn min_norm_check_near_stationary_start() {
        let p = make_shifted_quadratic(DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let finals = vec![SimState::new(
            100.0,
            DVector::from_vec(vec![0.999, 0.0]),
            DVector::zeros(2),
        )];
        let chk = min_norm_convergence_check(&finals, &p, 0.05).unwrap();
        assert!(chk.ok);
        let chk = min_norm_convergence_check(&finals, &p, 1e-5).unwrap();
        assert!(!chk.ok);
    }
}
