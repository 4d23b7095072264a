//! Drift/diffusion fields and the Euler-Maruyama integrator.
//!
//! The central system couples position and velocity through a vanishing
//! viscous damping tied to the Tikhonov weight:
//!
//! ```text
//! dX = Y dt
//! dY = ( -delta sqrt(eps(t)) Y - grad f(X) - eps(t) X ) dt + sigma(t) dW
//! ```
//!
//! Baselines share the harness: its deterministic limit, inertial dynamics
//! with `alpha/t` damping (with and without the Tikhonov force), the heavy
//! ball with constant damping `2 sqrt(mu)`, the first-order gradient flow,
//! and the generalized power-damping variant
//! `dY = (-(alpha/t^q) Y - grad f(X) - (a/t^p) X) dt + sigma dW`.
//!
//! Discretization is explicit Euler-Maruyama on a uniform step. The noise is
//! state-independent, so Milstein coincides with Euler-Maruyama and order-1
//! strong accuracy is the ceiling either way; `step_size_sweep` and the
//! high-resolution RK4 reference quantify the discretization error.
//!
//! Brownian increments come from a counter-based generator keyed by
//! `(seed, step_index, coordinate)`: trajectories are reproducible bit for
//! bit, independent across seeds, and unaffected by checkpoint thinning.

use crate::error::{Error, Result};
use crate::problems::ConvexProblem;
use crate::rng;
use crate::schedules::{DampingParams, DiffusionSchedule, EpsilonSchedule};
use nalgebra::DVector;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// System specification
// ---------------------------------------------------------------------------

/// Which dynamics to integrate, with kind-specific constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemKind {
    /// Stochastic Tikhonov-regularized inertial system (damping `delta sqrt(eps)`).
    Strigs { delta: f64 },
    /// Same drift with the diffusion forced to zero.
    TrigsDeterministic { delta: f64 },
    /// Inertial dynamics with `alpha/t` damping, no Tikhonov force.
    Savd { alpha: f64 },
    /// `alpha/t` damping plus the Tikhonov force `eps(t) x`.
    AvdTikhonov { alpha: f64 },
    /// Constant damping `2 sqrt(mu)`.
    HeavyBall { mu: f64 },
    /// First-order stochastic gradient flow; the noise enters `dX`.
    Sgf,
    /// Generalized power dampings `alpha/t^q` and Tikhonov weight `a/t^p`.
    StrigsGen { alpha: f64, q: f64, a: f64, p: f64 },
}

impl SystemKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Strigs { .. } => "strigs",
            Self::TrigsDeterministic { .. } => "trigs_deterministic",
            Self::Savd { .. } => "savd",
            Self::AvdTikhonov { .. } => "avd_tikhonov",
            Self::HeavyBall { .. } => "heavy_ball",
            Self::Sgf => "sgf",
            Self::StrigsGen { .. } => "strigs_gen",
        }
    }

    pub fn is_first_order(&self) -> bool {
        matches!(self, Self::Sgf)
    }
}

/// A fully specified system: dynamics kind, objective, schedules.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub problem: Arc<ConvexProblem>,
    pub eps: Option<EpsilonSchedule>,
    pub sigma: DiffusionSchedule,
}

impl SystemSpec {
    pub fn strigs(
        problem: Arc<ConvexProblem>,
        eps: EpsilonSchedule,
        damping: &DampingParams,
        sigma: DiffusionSchedule,
    ) -> Self {
        Self {
            kind: SystemKind::Strigs {
                delta: damping.delta,
            },
            problem,
            eps: Some(eps),
            sigma,
        }
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn eps_at(&self, t: f64) -> f64 {
        self.eps
            .as_ref()
            .map(|e| e.eval(t))
            .expect("system kind requires an epsilon schedule")
    }

    fn eps_sqrt_at(&self, t: f64) -> f64 {
        self.eps
            .as_ref()
            .map(|e| e.sqrt_eval(t))
            .expect("system kind requires an epsilon schedule")
    }
}

/// State of the integrator at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub x: DVector<f64>,
    /// Velocity; identically zero for first-order kinds.
    pub y: DVector<f64>,
}

impl SimState {
    pub fn new(t: f64, x: DVector<f64>, y: DVector<f64>) -> Self {
        Self { t, x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite()) && self.y.iter().all(|v| v.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Drift
// ---------------------------------------------------------------------------

/// Drift field `(dx, dy)` at the given state.
pub fn drift(spec: &SystemSpec, s: &SimState) -> (DVector<f64>, DVector<f64>) {
    let mut dx = DVector::zeros(spec.dim());
    let mut dy = DVector::zeros(spec.dim());
    drift_into(spec, s.t, &s.x, &s.y, &mut dx, &mut dy);
    (dx, dy)
}

/// Allocation-free drift; `dx`/`dy` are overwritten.
pub fn drift_into(
    spec: &SystemSpec,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    dx: &mut DVector<f64>,
    dy: &mut DVector<f64>,
) {
    match spec.kind {
        SystemKind::Strigs { delta } | SystemKind::TrigsDeterministic { delta } => {
            let eps = spec.eps_at(t);
            dx.copy_from(y);
            spec.problem.grad_into(x, dy);
            *dy *= -1.0;
            dy.axpy(-delta * spec.eps_sqrt_at(t), y, 1.0);
            dy.axpy(-eps, x, 1.0);
        }
        SystemKind::Savd { alpha } => {
            dx.copy_from(y);
            spec.problem.grad_into(x, dy);
            *dy *= -1.0;
            dy.axpy(-alpha / t, y, 1.0);
        }
        SystemKind::AvdTikhonov { alpha } => {
            let eps = spec.eps_at(t);
            dx.copy_from(y);
            spec.problem.grad_into(x, dy);
            *dy *= -1.0;
            dy.axpy(-alpha / t, y, 1.0);
            dy.axpy(-eps, x, 1.0);
        }
        SystemKind::HeavyBall { mu } => {
            dx.copy_from(y);
            spec.problem.grad_into(x, dy);
            *dy *= -1.0;
            dy.axpy(-2.0 * mu.sqrt(), y, 1.0);
        }
        SystemKind::Sgf => {
            spec.problem.grad_into(x, dx);
            *dx *= -1.0;
            dy.fill(0.0);
        }
        SystemKind::StrigsGen { alpha, q, a, p } => {
            dx.copy_from(y);
            spec.problem.grad_into(x, dy);
            *dy *= -1.0;
            dy.axpy(-alpha * t.powf(-q), y, 1.0);
            dy.axpy(-a * t.powf(-p), x, 1.0);
        }
    }
}

/// One joint-Lipschitz sample for the drift: the squared drift difference
/// against `max(1 + 3 delta^2 eps, 3 (eps^2 + L^2)) * ||z1 - z2||^2`, where
/// the `1 +` carries the `dx = y` block.
#[derive(Debug, Clone, Copy)]
pub struct LipschitzWitness {
    pub lhs: f64,
    pub bound: f64,
    pub ok: bool,
}

pub fn drift_lipschitz_witness(
    spec: &SystemSpec,
    t: f64,
    z1: (&DVector<f64>, &DVector<f64>),
    z2: (&DVector<f64>, &DVector<f64>),
) -> LipschitzWitness {
    let delta = match spec.kind {
        SystemKind::Strigs { delta } | SystemKind::TrigsDeterministic { delta } => delta,
        _ => panic!("drift Lipschitz witness is defined for the Tikhonov-damped kind"),
    };
    let dim = spec.dim();
    let (mut dx1, mut dy1) = (DVector::zeros(dim), DVector::zeros(dim));
    let (mut dx2, mut dy2) = (DVector::zeros(dim), DVector::zeros(dim));
    drift_into(spec, t, z1.0, z1.1, &mut dx1, &mut dy1);
    drift_into(spec, t, z2.0, z2.1, &mut dx2, &mut dy2);
    let lhs = (&dx1 - &dx2).norm_squared() + (&dy1 - &dy2).norm_squared();
    let eps = spec.eps_at(t);
    let lip = spec.problem.lipschitz();
    let coeff = (1.0 + 3.0 * delta * delta * eps).max(3.0 * (eps * eps + lip * lip));
    let dist_sq = (z1.0 - z2.0).norm_squared() + (z1.1 - z2.1).norm_squared();
    let bound = coeff * dist_sq;
    LipschitzWitness {
        lhs,
        bound,
        ok: lhs <= bound * (1.0 + 1e-12),
    }
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

/// One explicit Euler-Maruyama step. `noise` holds unit-variance normals;
/// the step applies the `sqrt(h)` scaling before the diffusion operator.
pub fn em_step(spec: &SystemSpec, s: &SimState, h: f64, noise: &DVector<f64>) -> Result<SimState> {
    let (dx, dy) = drift(spec, s);
    let mut next = SimState {
        t: s.t + h,
        x: &s.x + &dx * h,
        y: &s.y + &dy * h,
    };
    let scaled = noise * h.sqrt();
    if spec.kind.is_first_order() {
        spec.sigma.apply_add(s.t, &scaled, &mut next.x);
    } else {
        spec.sigma.apply_add(s.t, &scaled, &mut next.y);
    }
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFiniteState { t: next.t, step: 0 })
    }
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Diagnostic attached to a trajectory that hit a nonfinite state.
#[derive(Debug, Clone, Copy)]
pub struct NonFiniteAbort {
    pub t: f64,
    pub step: usize,
}

/// Time-gridded samples of one sample path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seed: u64,
    pub step_h: f64,
    /// States at the requested checkpoints (snapped to the step grid) plus
    /// both endpoints, strictly increasing in time.
    pub states: Vec<SimState>,
    /// Set when integration aborted; `states` then holds the partial path.
    pub abort: Option<NonFiniteAbort>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &SimState {
        self.states.last().expect("trajectory holds the endpoints")
    }

    pub fn is_complete(&self) -> bool {
        self.abort.is_none()
    }
}

/// Log-spaced checkpoint times covering `[t0, t_end]` with `per_decade`
/// points per decade; both endpoints included.
pub fn log_checkpoints(t0: f64, t_end: f64, per_decade: usize) -> Vec<f64> {
    assert!(t_end > t0 && t0 > 0.0 && per_decade > 0);
    let decades = (t_end / t0).log10();
    let n = (decades * per_decade as f64).ceil() as usize;
    let mut out: Vec<f64> = (0..=n)
        .map(|k| t0 * 10f64.powf(decades * k as f64 / n as f64))
        .collect();
    out[0] = t0;
    *out.last_mut().unwrap() = t_end;
    out
}

/// Noise stream identity: the seed plus an optional global sign flip for
/// antithetic pairs.
#[derive(Debug, Clone, Copy)]
pub struct NoiseStream {
    pub seed: u64,
    pub negate: bool,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            negate: false,
        }
    }

    pub fn antithetic(seed: u64) -> Self {
        Self { seed, negate: true }
    }

    #[inline]
    pub fn normal(&self, step: u64, coord: u64) -> f64 {
        let z = rng::standard_normal(self.seed, step, coord);
        if self.negate {
            -z
        } else {
            z
        }
    }
}

/// Per-step context handed to integration observers.
pub struct StepContext<'a> {
    /// Time at the start of the step.
    pub t: f64,
    /// State at the start of the step.
    pub x: &'a DVector<f64>,
    pub y: &'a DVector<f64>,
    /// Brownian increment applied during this step (already `sqrt(h)`-scaled,
    /// before the diffusion operator).
    pub dw: &'a DVector<f64>,
    pub step: usize,
}

/// Integrates on the uniform grid `t0 + k h`, storing snapshots at the
/// checkpoint times (snapped to the grid) and at both endpoints. A nonfinite
/// state aborts and returns the partial trajectory with a diagnostic.
pub fn integrate(
    spec: &SystemSpec,
    init: &SimState,
    t_end: f64,
    h: f64,
    seed: u64,
    checkpoints: &[f64],
) -> Trajectory {
    integrate_observed(spec, init, t_end, h, NoiseStream::new(seed), checkpoints, |_| {})
}

/// [`integrate`] with an explicit noise stream and a per-step observer; the
/// observer sees every step in order, which the martingale accumulators use.
pub fn integrate_observed<F: FnMut(&StepContext<'_>)>(
    spec: &SystemSpec,
    init: &SimState,
    t_end: f64,
    h: f64,
    noise: NoiseStream,
    checkpoints: &[f64],
    mut observe: F,
) -> Trajectory {
    assert!(t_end > init.t, "t_end must exceed the initial time");
    assert!(h > 0.0, "step must be positive");
    let dim = spec.dim();
    let n_steps = ((t_end - init.t) / h).round().max(1.0) as usize;

    // Snap checkpoint times to step indices; always keep both endpoints.
    let mut snap: Vec<usize> = checkpoints
        .iter()
        .map(|&c| (((c - init.t) / h).round().max(0.0) as usize).min(n_steps))
        .collect();
    snap.push(0);
    snap.push(n_steps);
    snap.sort_unstable();
    snap.dedup();

    let mut states = Vec::with_capacity(snap.len());
    let mut next_snap = snap.iter().copied().peekable();

    let mut x = init.x.clone();
    let mut y = init.y.clone();
    let mut dx = DVector::zeros(dim);
    let mut dy = DVector::zeros(dim);
    let mut dw = DVector::zeros(dim);
    let sqrt_h = h.sqrt();

    let record = |k: usize, x: &DVector<f64>, y: &DVector<f64>, states: &mut Vec<SimState>| {
        states.push(SimState {
            t: init.t + k as f64 * h,
            x: x.clone(),
            y: y.clone(),
        });
    };

    if next_snap.peek() == Some(&0) {
        record(0, &x, &y, &mut states);
        next_snap.next();
    }

    for k in 0..n_steps {
        let t = init.t + k as f64 * h;
        drift_into(spec, t, &x, &y, &mut dx, &mut dy);

        // Draw the Brownian increment unless the diffusion scale is exactly
        // zero at this time; the counter-based draws are keyed by step index,
        // so skipping never shifts later increments.
        let scale = spec.sigma.identity_scale(t);
        let noisy = scale != Some(0.0);
        if noisy {
            for j in 0..dim {
                dw[j] = noise.normal(k as u64, j as u64) * sqrt_h;
            }
        } else {
            dw.fill(0.0);
        }

        observe(&StepContext {
            t,
            x: &x,
            y: &y,
            dw: &dw,
            step: k,
        });

        x.axpy(h, &dx, 1.0);
        y.axpy(h, &dy, 1.0);
        if noisy {
            if spec.kind.is_first_order() {
                spec.sigma.apply_add(t, &dw, &mut x);
            } else {
                spec.sigma.apply_add(t, &dw, &mut y);
            }
        }

        let finite = x.iter().all(|v| v.is_finite()) && y.iter().all(|v| v.is_finite());
        if !finite {
            return Trajectory {
                seed: noise.seed,
                step_h: h,
                states,
                abort: Some(NonFiniteAbort { t: t + h, step: k }),
            };
        }

        if next_snap.peek() == Some(&(k + 1)) {
            record(k + 1, &x, &y, &mut states);
            next_snap.next();
        }
    }

    Trajectory {
        seed: noise.seed,
        step_h: h,
        states,
        abort: None,
    }
}

// ---------------------------------------------------------------------------
// Discretization control
// ---------------------------------------------------------------------------

/// Deterministic reference integration (diffusion ignored): classic RK4 at a
/// fixed step, for bounding the Euler error on smooth problems.
pub fn rk4_reference(spec: &SystemSpec, init: &SimState, t_end: f64, h: f64) -> SimState {
    assert!(t_end > init.t && h > 0.0);
    let dim = spec.dim();
    let n_steps = ((t_end - init.t) / h).round().max(1.0) as usize;
    let h = (t_end - init.t) / n_steps as f64;

    let mut x = init.x.clone();
    let mut y = init.y.clone();
    let mut k1x = DVector::zeros(dim);
    let mut k1y = DVector::zeros(dim);
    let mut k2x = DVector::zeros(dim);
    let mut k2y = DVector::zeros(dim);
    let mut k3x = DVector::zeros(dim);
    let mut k3y = DVector::zeros(dim);
    let mut k4x = DVector::zeros(dim);
    let mut k4y = DVector::zeros(dim);
    let mut xt = DVector::zeros(dim);
    let mut yt = DVector::zeros(dim);

    let stage = |xt: &mut DVector<f64>,
                     yt: &mut DVector<f64>,
                     x: &DVector<f64>,
                     y: &DVector<f64>,
                     kx: &DVector<f64>,
                     ky: &DVector<f64>,
                     w: f64| {
        xt.copy_from(x);
        xt.axpy(w, kx, 1.0);
        yt.copy_from(y);
        yt.axpy(w, ky, 1.0);
    };

    for k in 0..n_steps {
        let t = init.t + k as f64 * h;
        drift_into(spec, t, &x, &y, &mut k1x, &mut k1y);
        stage(&mut xt, &mut yt, &x, &y, &k1x, &k1y, 0.5 * h);
        drift_into(spec, t + 0.5 * h, &xt, &yt, &mut k2x, &mut k2y);
        stage(&mut xt, &mut yt, &x, &y, &k2x, &k2y, 0.5 * h);
        drift_into(spec, t + 0.5 * h, &xt, &yt, &mut k3x, &mut k3y);
        stage(&mut xt, &mut yt, &x, &y, &k3x, &k3y, h);
        drift_into(spec, t + h, &xt, &yt, &mut k4x, &mut k4y);
        for i in 0..dim {
            x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            y[i] += h / 6.0 * (k1y[i] + 2.0 * k2y[i] + 2.0 * k3y[i] + k4y[i]);
        }
    }
    SimState { t: t_end, x, y }
}

/// Deviation between trajectories at consecutive step sizes.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub h_coarse: f64,
    pub h_fine: f64,
    /// Max over shared checkpoints of the joint-state sup-norm deviation.
    pub deviation: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub converged: bool,
    /// Log-log slope of the deviation against the coarse step; order-1
    /// discretizations sit near 1.
    pub order_estimate: Option<f64>,
}

/// Runs the deterministic system at each step in `h_list` (descending) and
/// compares consecutive-resolution trajectories at shared checkpoints.
pub fn step_size_sweep(
    spec: &SystemSpec,
    init: &SimState,
    t_end: f64,
    h_list: &[f64],
    seed: u64,
    checkpoints: &[f64],
) -> SweepReport {
    assert!(
        h_list.windows(2).all(|w| w[0] > w[1]),
        "h_list must be strictly descending"
    );
    // Snap the comparison times onto the coarsest grid once, so every
    // resolution stores states at the same instants (steps that divide the
    // coarsest step land on them exactly).
    let h_max = h_list[0];
    let mut shared: Vec<f64> = checkpoints
        .iter()
        .map(|&c| init.t + ((c - init.t) / h_max).round().max(0.0) * h_max)
        .filter(|&c| c <= t_end)
        .collect();
    shared.push(t_end);
    shared.sort_by(|a, b| a.partial_cmp(b).unwrap());
    shared.dedup();

    let trajs: Vec<Trajectory> = h_list
        .iter()
        .map(|&h| integrate(spec, init, t_end, h, seed, &shared))
        .collect();

    let mut entries = Vec::new();
    for w in trajs.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        if !coarse.is_complete() || !fine.is_complete() {
            entries.push(SweepEntry {
                h_coarse: coarse.step_h,
                h_fine: fine.step_h,
                deviation: f64::INFINITY,
                converged: false,
            });
            continue;
        }
        let mut deviation = 0.0f64;
        let mut scale = 1.0f64;
        for cs in &coarse.states {
            if let Some(fs) = fine
                .states
                .iter()
                .find(|fs| (fs.t - cs.t).abs() <= 0.25 * fine.step_h)
            {
                let d = (&cs.x - &fs.x).amax().max((&cs.y - &fs.y).amax());
                deviation = deviation.max(d);
                scale = scale.max(cs.x.amax()).max(cs.y.amax());
            }
        }
        entries.push(SweepEntry {
            h_coarse: coarse.step_h,
            h_fine: fine.step_h,
            deviation,
            converged: deviation < 1e-4 * (1.0 + scale),
        });
    }

    let converged = entries.last().map_or(false, |e| e.converged);
    let finite: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.deviation.is_finite() && e.deviation > 0.0)
        .map(|e| (e.h_coarse.ln(), e.deviation.ln()))
        .collect();
    let order_estimate = if finite.len() >= 2 {
        let n = finite.len() as f64;
        let mx = finite.iter().map(|p| p.0).sum::<f64>() / n;
        let my = finite.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = finite.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = finite.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    SweepReport {
        entries,
        converged,
        order_estimate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_shifted_quadratic;
    use crate::schedules::{power_epsilon, DiffusionSchedule};

    fn quad_spec_1d(delta: f64, sigma: DiffusionSchedule) -> SystemSpec {
        // f(x) = x^2/2 via shifted quadratic with p = 0.
        let p = make_shifted_quadratic(DVector::from_vec(vec![0.0])).unwrap();
        SystemSpec {
            kind: SystemKind::Strigs { delta },
            problem: Arc::new(p),
            eps: Some(power_epsilon(1.0, 1.0).unwrap()),
            sigma,
        }
    }

    #[test]
    fn drift_vanishes_at_regularized_minimizer() {
        let p = make_shifted_quadratic(DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let spec = SystemSpec {
            kind: SystemKind::Strigs { delta: 2.0 },
            problem: Arc::new(p.clone()),
            eps: Some(power_epsilon(1.0, 1.0).unwrap()),
            sigma: DiffusionSchedule::zero(2),
        };
        // At t = 4 the weight is 0.25 and x_eps = (0.8, 0).
        let s = SimState::new(4.0, p.regularized_argmin(0.25).unwrap(), DVector::zeros(2));
        let (dx, dy) = drift(&spec, &s);
        assert_eq!(dx, DVector::zeros(2));
        assert!(dy.norm() < 1e-15);
    }

    #[test]
    fn drift_hand_value() {
        // f = x^2/2, d=1, x=1, y=0, t=4, r=1, delta=2: dy = -1 - 0.25.
        let spec = quad_spec_1d(2.0, DiffusionSchedule::zero(1));
        let s = SimState::new(
            4.0,
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
        );
        let (_, dy) = drift(&spec, &s);
        assert!((dy[0] + 1.25).abs() < 1e-15);
    }

    #[test]
    fn savd_drift_is_pure_damping_at_stationary_gradient() {
        let p = make_shifted_quadratic(DVector::from_vec(vec![0.0])).unwrap();
        let spec = SystemSpec {
            kind: SystemKind::Savd { alpha: 3.0 },
            problem: Arc::new(p),
            eps: None,
            sigma: DiffusionSchedule::zero(1),
        };
        // grad f = 0 at x = 0: dy = -(alpha/t) y = -1 at t = 3, y = 1.
        let s = SimState::new(
            3.0,
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
        );
        let (_, dy) = drift(&spec, &s);
        assert!((dy[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn em_step_hand_value() {
        let spec = quad_spec_1d(2.0, DiffusionSchedule::zero(1));
        let s = SimState::new(
            4.0,
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
        );
        let next = em_step(&spec, &s, 0.1, &DVector::zeros(1)).unwrap();
        assert!((next.t - 4.1).abs() < 1e-15);
        assert!((next.x[0] - 1.0).abs() < 1e-15);
        assert!((next.y[0] + 0.125).abs() < 1e-15);
    }

    #[test]
    fn em_step_continuity_in_h() {
        let spec = quad_spec_1d(2.0, DiffusionSchedule::scaled_identity(1, |_| 0.5));
        let s = SimState::new(
            4.0,
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.3]),
        );
        let noise = DVector::from_vec(vec![0.7]);
        let mut prev = f64::INFINITY;
        for &h in &[1e-1, 1e-2, 1e-3, 1e-4] {
            let next = em_step(&spec, &s, h, &noise).unwrap();
            let d = (&next.x - &s.x).norm() + (&next.y - &s.y).norm();
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn integrate_is_deterministic_in_seed() {
        let spec = quad_spec_1d(2.0, DiffusionSchedule::scaled_identity(1, |t: f64| (-t).exp()));
        let init = SimState::new(
            1.0,
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
        );
        let cps = log_checkpoints(1.0, 100.0, 16);
        let a = integrate(&spec, &init, 100.0, 0.01, 7, &cps);
        let b = integrate(&spec, &init, 100.0, 0.01, 7, &cps);
        assert_eq!(a.states.len(), b.states.len());
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa.x[0].to_bits(), sb.x[0].to_bits());
            assert_eq!(sa.y[0].to_bits(), sb.y[0].to_bits());
        }
        let c = integrate(&spec, &init, 100.0, 0.01, 8, &cps);
        assert_ne!(
            a.last().x[0].to_bits(),
            c.last().x[0].to_bits(),
            "different seeds must differ"
        );
    }

    #[test]
    fn zero_sigma_makes_seed_irrelevant_and_matches_deterministic_kind() {
        let strigs = quad_spec_1d(2.0, DiffusionSchedule::zero(1));
        let trigs = SystemSpec {
            kind: SystemKind::TrigsDeterministic { delta: 2.0 },
            ..strigs.clone()
        };
        let init = SimState::new(
            1.0,
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
        );
        let cps = log_checkpoints(1.0, 50.0, 8);
        let a = integrate(&strigs, &init, 50.0, 0.01, 1, &cps);
        let b = integrate(&strigs, &init, 50.0, 0.01, 99, &cps);
        let c = integrate(&trigs, &init, 50.0, 0.01, 5, &cps);
        for ((sa, sb), sc) in a.states.iter().zip(&b.states).zip(&c.states) {
            assert_eq!(sa.x[0].to_bits(), sb.x[0].to_bits());
            assert_eq!(sa.x[0].to_bits(), sc.x[0].to_bits());
        }
    }

    #[test]
    fn checkpoint_thinning_does_not_change_the_path() {
        let spec = quad_spec_1d(2.0, DiffusionSchedule::scaled_identity(1, |t: f64| (-0.1 * t).exp()));
        let init = SimState::new(
            1.0,
            DVector::from_vec(vec![1.0]),
            DVector::zeros(1),
        );
        let dense = integrate(&spec, &init, 20.0, 0.01, 3, &log_checkpoints(1.0, 20.0, 64));
        let sparse = integrate(&spec, &init, 20.0, 0.01, 3, &[10.0]);
        let d_end = dense.last();
        let s_end = sparse.last();
        assert_eq!(d_end.x[0].to_bits(), s_end.x[0].to_bits());
        assert_eq!(d_end.y[0].to_bits(), s_end.y[0].to_bits());
    }

    #[test]
    fn heavy_ball_matches_exponential_rate_and_closed_form() {
        // mu = 1 on f = x^2/2 from (x, y) = (1, 0) at t0 = 1:
        // x(t) = t e^{1-t} solves xdd + 2 xd + x = 0 with these data.
        let p = make_shifted_quadratic(DVector::from_vec(vec![0.0])).unwrap();
        let spec = SystemSpec {
            kind: SystemKind::HeavyBall { mu: 1.0 },
            problem: Arc::new(p.clone()),
            eps: None,
            sigma: DiffusionSchedule::zero(1),
        };
        let init = SimState::new(
            1.0,
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
        );
        let traj = integrate(&spec, &init, 31.0, 0.002, 0, &[10.0]);
        assert!(traj.is_complete());

        let mid = &traj.states[traj.states.len() - 2];
        let exact_mid = mid.t * (1.0 - mid.t).exp();
        assert!(
            (mid.x[0] - exact_mid).abs() < 1e-2 * exact_mid.abs(),
            "Euler vs closed form at t = {}: {} vs {exact_mid}",
            mid.t,
            mid.x[0]
        );

        let t_span: f64 = 30.0;
        let f_end = p.eval(&traj.last().x);
        let f_start = p.eval(&init.x);
        assert!(f_end <= (-0.5 * t_span).exp() * f_start);
    }

    #[test]
    fn strigs_gen_with_aliased_powers_reproduces_strigs() {
        let p = Arc::new(make_shifted_quadratic(DVector::from_vec(vec![0.7, -0.2])).unwrap());
        let eps = power_epsilon(1.0, 1.0).unwrap();
        let sigma = DiffusionSchedule::scaled_identity(2, |t: f64| (-t).exp());
        let strigs = SystemSpec {
            kind: SystemKind::Strigs { delta: 2.0 },
            problem: p.clone(),
            eps: Some(eps.clone()),
            sigma: sigma.clone(),
        };
        let gen = SystemSpec {
            kind: SystemKind::StrigsGen {
                alpha: 2.0,
                q: 0.5,
                a: 1.0,
                p: 1.0,
            },
            problem: p,
            eps: None,
            sigma,
        };
        let init = SimState::new(1.0, DVector::from_vec(vec![1.0, 1.0]), DVector::zeros(2));
        let cps = log_checkpoints(1.0, 30.0, 8);
        let a = integrate(&strigs, &init, 30.0, 0.01, 11, &cps);
        let b = integrate(&gen, &init, 30.0, 0.01, 11, &cps);
        for (sa, sb) in a.states.iter().zip(&b.states) {
            for i in 0..2 {
                assert_eq!(sa.x[i].to_bits(), sb.x[i].to_bits());
                assert_eq!(sa.y[i].to_bits(), sb.y[i].to_bits());
            }
        }
    }

    #[test]
    fn lipschitz_witness_zero_distance_and_block_structure() {
        let spec = quad_spec_1d(2.0, DiffusionSchedule::zero(1));
        let x = DVector::from_vec(vec![0.4]);
        let y = DVector::from_vec(vec![-0.3]);
        let w = drift_lipschitz_witness(&spec, 2.0, (&x, &y), (&x, &y));
        assert_eq!(w.lhs, 0.0);
        assert!(w.ok);

        // Pure y-perturbation: lhs = (1 + delta^2 eps) dy^2 <= bound.
        let y2 = DVector::from_vec(vec![0.9]);
        let w = drift_lipschitz_witness(&spec, 2.0, (&x, &y), (&x, &y2));
        assert!(w.ok);
    }

    #[test]
    fn lipschitz_witness_random_sweep() {
        let spec = quad_spec_1d(2.0, DiffusionSchedule::zero(1));
        let mut rng = crate::rng::SeqRng::new(99);
        for _ in 0..10_000 {
            let t = rng.uniform_in(1.0, 1000.0);
            let mk = |rng: &mut crate::rng::SeqRng| {
                (
                    DVector::from_vec(vec![rng.normal() * 5.0]),
                    DVector::from_vec(vec![rng.normal() * 5.0]),
                )
            };
            let (x1, y1) = mk(&mut rng);
            let (x2, y2) = mk(&mut rng);
            let w = drift_lipschitz_witness(&spec, t, (&x1, &y1), (&x2, &y2));
            assert!(w.ok, "lhs {} > bound {}", w.lhs, w.bound);
        }
    }

    #[test]
    fn sweep_shows_first_order_decay_on_linear_problem() {
        let spec = quad_spec_1d(2.0, DiffusionSchedule::zero(1));
        let init = SimState::new(1.0, DVector::from_vec(vec![1.0]), DVector::zeros(1));
        let cps = log_checkpoints(1.0, 50.0, 16);
        let h_list: Vec<f64> = (0..8).map(|k| 0.08 / (1 << k) as f64).collect();
        let report = step_size_sweep(&spec, &init, 50.0, &h_list, 0, &cps);
        assert!(report.converged, "{:?}", report.entries);
        let slope = report.order_estimate.unwrap();
        assert!((slope - 1.0).abs() <= 0.2, "order estimate {slope}");
    }

    #[test]
    fn sweep_flags_unstable_step() {
        // h far beyond the stability limit of the undamped-frequency scale.
        let spec = quad_spec_1d(2.0, DiffusionSchedule::zero(1));
        let init = SimState::new(1.0, DVector::from_vec(vec![1.0]), DVector::zeros(1));
        let report = step_size_sweep(&spec, &init, 400.0, &[3.0, 2.9], 0, &[200.0]);
        assert!(!report.converged);
    }

    #[test]
    fn stationary_sweep_has_zero_deviation() {
        // p = 0 quadratic from the origin stays exactly at the origin.
        let spec = quad_spec_1d(2.0, DiffusionSchedule::zero(1));
        let init = SimState::new(1.0, DVector::zeros(1), DVector::zeros(1));
        let report = step_size_sweep(&spec, &init, 10.0, &[0.1, 0.05], 0, &[5.0]);
        assert_eq!(report.entries[0].deviation, 0.0);
    }

    #[test]
    fn rk4_reference_agrees_with_heavy_ball_closed_form() {
        let p = make_shifted_quadratic(DVector::from_vec(vec![0.0])).unwrap();
        let spec = SystemSpec {
            kind: SystemKind::HeavyBall { mu: 1.0 },
            problem: Arc::new(p),
            eps: None,
            sigma: DiffusionSchedule::zero(1),
        };
        let init = SimState::new(1.0, DVector::from_vec(vec![1.0]), DVector::zeros(1));
        let end = rk4_reference(&spec, &init, 6.0, 1e-3);
        let exact = 6.0 * (1.0f64 - 6.0).exp();
        assert!((end.x[0] - exact).abs() < 1e-10, "{} vs {exact}", end.x[0]);
    }

    #[test]
    fn nonfinite_abort_returns_partial_trajectory() {
        // Blow the state up with an unstable step on a stiff quadratic.
        let p = make_shifted_quadratic(DVector::from_vec(vec![0.0])).unwrap();
        let spec = SystemSpec {
            kind: SystemKind::HeavyBall { mu: 1e-12 },
            problem: Arc::new(p),
            eps: None,
            sigma: DiffusionSchedule::zero(1),
        };
        let init = SimState::new(1.0, DVector::from_vec(vec![1e300]), DVector::zeros(1));
        let traj = integrate(&spec, &init, 1e4, 3.0, 0, &[100.0]);
        assert!(!traj.is_complete());
        assert!(traj.abort.is_some());
    }
}
