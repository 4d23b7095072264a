//! Energy function, integrating factor, and the decay-bound machinery.
//!
//! Everything here evaluates the Lyapunov apparatus along trajectories:
//!
//! ```text
//! phi_t(x)   = f(x) + (eps(t)/2)||x||^2
//! V(t,x,y)   = lambda sqrt(eps(t)) (x - x_eps(t)) + y
//! E(t,x,y)   = phi_t(x) - phi_t(x_eps(t)) + (1/2)||V(t,x,y)||^2
//!
//! mu(t)      = -epsdot/(2 eps) + (delta - lambda) sqrt(eps)
//! gamma(t)   = exp( int_{t1}^t mu(s) ds )
//! G(t)       = (a+c) lambda epsdot^2 / eps^{3/2} - epsdot
//! ```
//!
//! For the power schedule `eps(t) = t^-r` the integrating factor has the
//! closed form
//!
//! ```text
//! gamma(t) = (t/t1)^{r/2} exp( delta0 (t^{(2-r)/2} - t1^{(2-r)/2}) ),
//! delta0   = 2 (delta - lambda) / (2 - r),
//! ```
//!
//! and the decay bound on the expected energy reads
//!
//! ```text
//! E[E(t)] <= gamma(t1)/gamma(t) E[E(t1)]
//!            + (1/gamma(t)) int_{t1}^t (||x*||^2/2) G gamma ds
//!            + sigma term,
//! ```
//!
//! with the sigma term either the plain tail integral of `||sigma||_HS^2`
//! or, under the stronger integrability condition, the gamma-weighted tail
//! divided by `gamma(t)`.
//!
//! gamma grows like `exp(delta0 t^{(2-r)/2})`, so all ratios are computed in
//! log space; only differences of log-gamma are ever exponentiated.

use crate::error::{Error, Result};
use crate::problems::ConvexProblem;
use crate::quad;
use crate::schedules::{DampingParams, DiffusionSchedule, EpsilonSchedule};
use crate::tikhonov::{self, PathPoint};
use nalgebra::DVector;

// ---------------------------------------------------------------------------
// Pointwise evaluations
// ---------------------------------------------------------------------------

/// `V(t,x,y) = lambda sqrt(eps(t)) (x - x_eps) + y`.
pub fn v_eval(
    damping: &DampingParams,
    eps_sched: &EpsilonSchedule,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    x_eps: &DVector<f64>,
) -> DVector<f64> {
    let w = damping.lambda * eps_sched.eval(t).sqrt();
    let mut v = x - x_eps;
    v *= w;
    v += y;
    v
}

/// Energy and companion quantities at one checkpoint.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub t: f64,
    /// `phi_t(x) - phi_t(x_eps)`, clamped at zero (the minimizer side can
    /// round negative at the 1e-18 scale).
    pub phi_gap: f64,
    pub v_norm_sq: f64,
    pub energy: f64,
    pub gamma: f64,
    pub log_gamma: f64,
    pub mu_val: f64,
    pub g_val: f64,
    /// Filled by the bound evaluators when requested.
    pub bound: Option<f64>,
}

/// Evaluates the energy at `(t, x, y)` given the solved path point for time
/// `t`. `t1` anchors the integrating factor.
pub fn energy_eval(
    problem: &ConvexProblem,
    damping: &DampingParams,
    eps_sched: &EpsilonSchedule,
    t1: f64,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    path_point: &PathPoint,
) -> EnergyReport {
    let eps = eps_sched.eval(t);
    let phi_x = tikhonov::phi_eval(problem, eps, x);
    let phi_xe = tikhonov::phi_eval(problem, eps, &path_point.x);
    let phi_gap = (phi_x - phi_xe).max(0.0);
    let v = v_eval(damping, eps_sched, t, x, y, &path_point.x);
    let v_norm_sq = v.norm_squared();
    let m = mu_gamma_g(damping, eps_sched, t1, t);
    EnergyReport {
        t,
        phi_gap,
        v_norm_sq,
        energy: phi_gap + 0.5 * v_norm_sq,
        gamma: m.gamma,
        log_gamma: m.log_gamma,
        mu_val: m.mu,
        g_val: m.g,
        bound: None,
    }
}

/// `mu`, `gamma` (with its logarithm) and the forcing coefficient `G`.
#[derive(Debug, Clone, Copy)]
pub struct MuGammaG {
    pub mu: f64,
    pub gamma: f64,
    pub log_gamma: f64,
    pub g: f64,
}

/// Log of the integrating factor anchored at `t1`; negative for `t < t1`.
pub fn log_gamma(damping: &DampingParams, eps_sched: &EpsilonSchedule, t1: f64, t: f64) -> f64 {
    match eps_sched {
        EpsilonSchedule::Power { r, .. } => {
            let delta0 = 2.0 * (damping.delta - damping.lambda) / (2.0 - r);
            let half = 0.5 * (2.0 - r);
            0.5 * r * (t / t1).ln() + delta0 * (t.powf(half) - t1.powf(half))
        }
        EpsilonSchedule::Custom { .. } => {
            if t == t1 {
                return 0.0;
            }
            let mu = |s: f64| {
                -eps_sched.deriv(s) / (2.0 * eps_sched.eval(s))
                    + (damping.delta - damping.lambda) * eps_sched.eval(s).sqrt()
            };
            let (lo, hi, sign) = if t > t1 { (t1, t, 1.0) } else { (t, t1, -1.0) };
            sign * quad::simpson_log(mu, lo, hi, quad::nodes_for_span(lo, hi, 256))
        }
    }
}

pub fn mu_gamma_g(
    damping: &DampingParams,
    eps_sched: &EpsilonSchedule,
    t1: f64,
    t: f64,
) -> MuGammaG {
    let eps = eps_sched.eval(t);
    let deps = eps_sched.deriv(t);
    let mu = -deps / (2.0 * eps) + (damping.delta - damping.lambda) * eps.sqrt();
    let g = (damping.a + damping.c) * damping.lambda * deps * deps / eps.powf(1.5) - deps;
    let lg = log_gamma(damping, eps_sched, t1, t);
    MuGammaG {
        mu,
        gamma: lg.exp(),
        log_gamma: lg,
        g,
    }
}

// ---------------------------------------------------------------------------
// Bound constants (power schedule)
// ---------------------------------------------------------------------------

/// Constants entering the power-schedule rate bound.
#[derive(Debug, Clone, Copy)]
pub struct BoundConstants {
    /// `(a + c) lambda`.
    pub lambda0: f64,
    /// `2 (delta - lambda) / (2 - r)`.
    pub delta0: f64,
    /// `(t1^{r/2} exp(delta0 t1^{(2-r)/2}))^{-1}`.
    pub c1: f64,
    pub rho: f64,
    /// Smallest time past which the comparison inequality
    /// `(lambda0 r + 1/rho) / s^{(2-r)/2} <= (delta - lambda)/rho - 1`
    /// holds, so the `r/(2 rho)` budget applies from `max(t1, s_star)` on.
    pub s_star: f64,
}

impl BoundConstants {
    pub fn new(damping: &DampingParams, r: f64, t1: f64) -> Result<Self> {
        if !(r > 0.0 && r < 2.0) {
            return Err(Error::InvalidParam(format!("need 0 < r < 2, got {r}")));
        }
        let gap = damping.delta - damping.lambda;
        if !(gap > 0.0) {
            return Err(Error::InvalidParam("lambda >= delta".into()));
        }
        let delta0 = 2.0 * gap / (2.0 - r);
        let lambda0 = (damping.a + damping.c) * damping.lambda;
        let c1 = 1.0 / (t1.powf(0.5 * r) * (delta0 * t1.powf(0.5 * (2.0 - r))).exp());
        if !(c1 > 0.0) {
            return Err(Error::InvalidParam(
                "C1 underflowed to zero; t1 too large for this precision".into(),
            ));
        }
        let slack = gap / damping.rho - 1.0;
        debug_assert!(slack > 0.0, "rho < delta/(a+1) implies rho < delta - lambda");
        let s_star = ((lambda0 * r + 1.0 / damping.rho) / slack).powf(2.0 / (2.0 - r));
        Ok(Self {
            lambda0,
            delta0,
            c1,
            rho: damping.rho,
            s_star,
        })
    }
}

// ---------------------------------------------------------------------------
// Expectation bound
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct BoundValue {
    pub value: f64,
    /// All quadratures agreed under refinement doubling.
    pub resolved: bool,
}

/// Right side of the energy decay bound at time `t`, anchored by the energy
/// `e_at_t1` at `t1`.
///
/// `strong` selects the gamma-weighted sigma tail divided by `gamma(t)`;
/// otherwise the plain integral of the squared Hilbert-Schmidt norm is added.
/// Tail integrals run to `sigma_horizon` (the diffusion must be negligible
/// past it for the bound to be meaningful).
#[allow(clippy::too_many_arguments)]
pub fn expectation_bound(
    xstar_norm: f64,
    damping: &DampingParams,
    eps_sched: &EpsilonSchedule,
    sigma: &DiffusionSchedule,
    t1: f64,
    t: f64,
    e_at_t1: f64,
    strong: bool,
    sigma_horizon: f64,
) -> BoundValue {
    assert!(t >= t1, "bound is defined for t >= t1");
    let lg_t = log_gamma(damping, eps_sched, t1, t);
    let term_init = e_at_t1 * (-lg_t).exp();

    let half_xs2 = 0.5 * xstar_norm * xstar_norm;
    let forcing = |s: f64| {
        let m = mu_gamma_g(damping, eps_sched, t1, s);
        half_xs2 * m.g * (m.log_gamma - lg_t).exp()
    };
    let q_forcing = if t > t1 {
        quad::simpson_log_checked(forcing, t1, t, quad::nodes_for_span(t1, t, 128))
    } else {
        quad::QuadResult {
            value: 0.0,
            resolved: true,
        }
    };

    let horizon = sigma_horizon.max(t);
    let q_sigma = if sigma.is_zero() {
        quad::QuadResult {
            value: 0.0,
            resolved: true,
        }
    } else if strong {
        let weighted = |s: f64| {
            let lg_s = log_gamma(damping, eps_sched, t1, s);
            sigma.hs_norm_sq(s) * (lg_s - lg_t).exp()
        };
        quad::simpson_log_checked(weighted, t1, horizon, quad::nodes_for_span(t1, horizon, 128))
    } else {
        quad::simpson_log_checked(
            |s| sigma.hs_norm_sq(s),
            t1,
            horizon,
            quad::nodes_for_span(t1, horizon, 128),
        )
    };

    BoundValue {
        value: term_init + q_forcing.value + q_sigma.value,
        resolved: q_forcing.resolved && q_sigma.resolved,
    }
}

// ---------------------------------------------------------------------------
// Pathwise estimates
// ---------------------------------------------------------------------------

/// The two pathwise consequences of the energy definition:
/// `f(x) - inf f <= E + (eps/2)||x*||^2` and `||x - x_eps||^2 <= 2 E / eps`.
#[derive(Debug, Clone, Copy)]
pub struct LemmaCheck {
    pub f_gap: f64,
    pub f_budget: f64,
    pub f_gap_ok: bool,
    pub dist_sq: f64,
    pub dist_budget: f64,
    pub dist_ok: bool,
}

pub fn lemma_estimates(
    problem: &ConvexProblem,
    eps_sched: &EpsilonSchedule,
    report: &EnergyReport,
    x: &DVector<f64>,
    x_eps: &DVector<f64>,
    xstar_norm: f64,
) -> LemmaCheck {
    let eps = eps_sched.eval(report.t);
    let tol = 1e-9 * (1.0 + report.energy.abs());
    let f_gap = problem.eval(x) - problem.inf_value();
    let f_budget = report.energy + 0.5 * eps * xstar_norm * xstar_norm;
    let dist_sq = (x - x_eps).norm_squared();
    let dist_budget = 2.0 * report.energy / eps;
    LemmaCheck {
        f_gap,
        f_budget,
        f_gap_ok: f_gap <= f_budget + tol,
        dist_sq,
        dist_budget,
        dist_ok: dist_sq <= dist_budget + tol,
    }
}

// ---------------------------------------------------------------------------
// Trajectory evaluation
// ---------------------------------------------------------------------------

/// Energy evaluated at every stored checkpoint of a trajectory, with
/// warm-started path solves.
#[derive(Debug, Clone)]
pub struct EnergyCheckpoint {
    pub report: EnergyReport,
    pub path: PathPoint,
    /// State snapshot the report was computed from.
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

pub fn trajectory_energies(
    problem: &ConvexProblem,
    damping: &DampingParams,
    eps_sched: &EpsilonSchedule,
    t1: f64,
    traj: &crate::dynamics::Trajectory,
    tol: f64,
) -> Result<Vec<EnergyCheckpoint>> {
    let mut out = Vec::with_capacity(traj.states.len());
    let mut warm: Option<DVector<f64>> = None;
    for s in &traj.states {
        let pt = tikhonov::solve_at_time(problem, eps_sched, s.t, warm.as_ref(), tol)?;
        if !pt.converged {
            return Err(Error::SolverFailure(format!(
                "path solve at t = {} stalled at residual {}",
                s.t, pt.residual
            )));
        }
        warm = Some(pt.x.clone());
        let report = energy_eval(problem, damping, eps_sched, t1, s.t, &s.x, &s.y, &pt);
        out.push(EnergyCheckpoint {
            report,
            path: pt,
            x: s.x.clone(),
            y: s.y.clone(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scaled-energy monitor
// ---------------------------------------------------------------------------

/// One row of the `t^{(r+2)/2} E(t)` boundedness monitor.
#[derive(Debug, Clone, Copy)]
pub struct ScaledEnergyPoint {
    pub t: f64,
    pub energy: f64,
    /// `t^{(r+2)/2} E(t)`.
    pub t_pow_e: f64,
    /// `r ||x*||^2 / (2 rho)`, the persistent part of the budget
    /// (`r/(2 rho)` when `||x*|| = 1`).
    pub const_term: f64,
    /// Exponentially vanishing carry-over of the anchor energy.
    pub init_term: f64,
    /// Gamma-weighted diffusion trace carried to time `t`.
    pub trace_term: f64,
    /// Whether `t_pow_e` sits within the deterministic budget; meaningful for
    /// noiseless runs (the martingale fluctuation is not included).
    pub within: bool,
}

#[derive(Debug, Clone)]
pub struct ScaledEnergyMonitor {
    pub constants: BoundConstants,
    /// Anchor time actually used: first checkpoint at or past
    /// `max(t1, s_star)`.
    pub anchor_t: f64,
    pub points: Vec<ScaledEnergyPoint>,
}

/// Evaluates the scaled-energy identity along checkpoint energies
/// (`points` as `(t, E)` pairs, increasing in `t`).
pub fn scaled_energy_monitor(
    points: &[(f64, f64)],
    xstar_norm: f64,
    damping: &DampingParams,
    eps_sched: &EpsilonSchedule,
    sigma: &DiffusionSchedule,
    t1: f64,
) -> Result<ScaledEnergyMonitor> {
    let r = eps_sched.power_r().ok_or_else(|| {
        Error::UnsupportedSchedule("scaled-energy monitor needs the power schedule".into())
    })?;
    let constants = BoundConstants::new(damping, r, t1)?;
    let t1_eff = t1.max(constants.s_star);
    let anchor_idx = points
        .iter()
        .position(|&(t, _)| t >= t1_eff)
        .ok_or_else(|| {
            Error::WindowTooSmall(format!(
                "no checkpoint at or past t = {t1_eff} (monitor threshold)"
            ))
        })?;
    let (anchor_t, anchor_e) = points[anchor_idx];
    let lg_anchor = log_gamma(damping, eps_sched, t1, anchor_t);
    let const_term = r * xstar_norm * xstar_norm / (2.0 * constants.rho);
    let pow = 0.5 * (r + 2.0);

    let mut out = Vec::with_capacity(points.len() - anchor_idx);
    for &(t, e) in &points[anchor_idx..] {
        let lg_t = log_gamma(damping, eps_sched, t1, t);
        let t_pow = t.powf(pow);
        let init_term = t_pow * anchor_e * (lg_anchor - lg_t).exp();
        let trace_term = if sigma.is_zero() || t == anchor_t {
            0.0
        } else {
            let weighted = |s: f64| {
                let lg_s = log_gamma(damping, eps_sched, t1, s);
                0.5 * sigma.hs_norm_sq(s) * (lg_s - lg_t).exp()
            };
            t_pow * quad::simpson_log(weighted, anchor_t, t, quad::nodes_for_span(anchor_t, t, 128))
        };
        let t_pow_e = t_pow * e;
        let budget = const_term + init_term + trace_term;
        out.push(ScaledEnergyPoint {
            t,
            energy: e,
            t_pow_e,
            const_term,
            init_term,
            trace_term,
            within: t_pow_e <= budget * 1.01 + 1e-12,
        });
    }
    Ok(ScaledEnergyMonitor {
        constants,
        anchor_t,
        points: out,
    })
}

// ---------------------------------------------------------------------------
// Discrete Gronwall consistency
// ---------------------------------------------------------------------------

/// Finite-difference form of `d(gamma E) <= gamma G ||x*||^2 / 2 dt` between
/// consecutive checkpoints, everything scaled by `gamma(t_mid)` so only
/// log-gamma differences are exponentiated.
#[derive(Debug, Clone, Copy)]
pub struct GronwallPoint {
    pub t_mid: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Local magnitude used for the relative tolerance.
    pub scale: f64,
    pub ok: bool,
}

/// Checks the inequality at every consecutive checkpoint pair past `t1` with
/// a 1e-2 relative tolerance against the local scale (covers the Euler and
/// midpoint-quotient errors).
pub fn gronwall_check(
    points: &[(f64, f64)],
    xstar_norm: f64,
    damping: &DampingParams,
    eps_sched: &EpsilonSchedule,
    t1: f64,
) -> Vec<GronwallPoint> {
    let mut out = Vec::new();
    for w in points.windows(2) {
        let (ta, ea) = w[0];
        let (tb, eb) = w[1];
        if ta < t1 || tb <= ta {
            continue;
        }
        let t_mid = 0.5 * (ta + tb);
        let dt = tb - ta;
        let lg_mid = log_gamma(damping, eps_sched, t1, t_mid);
        let lg_a = log_gamma(damping, eps_sched, t1, ta);
        let lg_b = log_gamma(damping, eps_sched, t1, tb);
        let lhs = (eb * (lg_b - lg_mid).exp() - ea * (lg_a - lg_mid).exp()) / dt;
        let m = mu_gamma_g(damping, eps_sched, t1, t_mid);
        let rhs = 0.5 * m.g * xstar_norm * xstar_norm;
        let e_mid = 0.5 * (ea + eb);
        let scale = rhs.abs() + m.mu.abs() * e_mid + (eb - ea).abs() / dt;
        out.push(GronwallPoint {
            t_mid,
            lhs,
            rhs,
            scale,
            ok: lhs <= rhs + 1e-2 * scale + 1e-300,
        });
    }
    out
}
