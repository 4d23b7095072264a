//! The regularization path `x_eps = argmin phi_eps` for
//! `phi_eps(x) = f(x) + (eps/2) ||x||^2`.
//!
//! `phi_eps` is eps-strongly convex with an `(L + eps)`-Lipschitz gradient,
//! so the path point is computed either from the problem's closed form or by
//! Nesterov-accelerated gradient descent with the strongly convex momentum
//! coefficient and a restart on objective increase. The stopping rule
//!
//! ```text
//! ||grad phi_eps(x)|| <= tol * eps
//! ```
//!
//! guarantees `||x - x_eps|| <= tol` by strong convexity.
//!
//! The path moves continuously in `t`; its speed obeys
//!
//! ```text
//! || d/dt x_eps(t) || <= -(deps/dt / eps) * ||x_eps(t)||,
//! ```
//!
//! which the slope check verifies against central finite differences.

use crate::error::{Error, Result};
use crate::problems::ConvexProblem;
use crate::schedules::EpsilonSchedule;
use nalgebra::DVector;

/// Default gradient-dominance tolerance for path solves.
pub const DEFAULT_PATH_TOL: f64 = 1e-9;

const MAX_ITERS: usize = 2_000_000;

/// One solved point of the regularization path.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub t: f64,
    pub eps: f64,
    pub x: DVector<f64>,
    /// `||grad f(x) + eps x||` at the returned iterate.
    pub residual: f64,
    pub solver_iters: usize,
    /// False when the iteration budget ran out; the best iterate is still
    /// returned.
    pub converged: bool,
}

/// `phi_eps(x) = f(x) + (eps/2)||x||^2`.
pub fn phi_eval(problem: &ConvexProblem, eps: f64, x: &DVector<f64>) -> f64 {
    problem.eval(x) + 0.5 * eps * x.norm_squared()
}

fn phi_grad(problem: &ConvexProblem, eps: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
    problem.grad_into(x, out);
    out.axpy(eps, x, 1.0);
}

/// Solves for `x_eps`, preferring the problem's closed form. `warm_start`
/// seeds the iterative solver; along a time grid pass the previous path point
/// to cut iterations by orders of magnitude.
pub fn solve_x_eps(
    problem: &ConvexProblem,
    eps: f64,
    warm_start: Option<&DVector<f64>>,
    tol: f64,
) -> Result<PathPoint> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParam(format!("eps must be positive, got {eps}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParam(format!("tol must be positive, got {tol}")));
    }
    if let Some(x) = problem.regularized_argmin(eps) {
        let mut g = DVector::zeros(problem.dim());
        phi_grad(problem, eps, &x, &mut g);
        return Ok(PathPoint {
            t: f64::NAN,
            eps,
            residual: g.norm(),
            solver_iters: 0,
            converged: true,
            x,
        });
    }
    Ok(solve_x_eps_iterative(problem, eps, warm_start, tol))
}

/// Accelerated gradient solve that ignores any closed form; used by the
/// oracle-equivalence checks and by problems without one.
pub fn solve_x_eps_iterative(
    problem: &ConvexProblem,
    eps: f64,
    warm_start: Option<&DVector<f64>>,
    tol: f64,
) -> PathPoint {
    let dim = problem.dim();
    let lip = problem.lipschitz() + eps;
    let step = 1.0 / lip;
    let kappa = lip / eps;
    let sqrt_kappa = kappa.sqrt();
    let beta = (sqrt_kappa - 1.0) / (sqrt_kappa + 1.0);
    let target = tol * eps;

    let mut x = warm_start.cloned().unwrap_or_else(|| DVector::zeros(dim));
    let mut y = x.clone();
    let mut g = DVector::zeros(dim);
    let mut phi_best = phi_eval(problem, eps, &x);

    let mut iters = 0;
    let mut converged = false;
    while iters < MAX_ITERS {
        phi_grad(problem, eps, &y, &mut g);
        let res = g.norm();
        if res <= target {
            x.copy_from(&y);
            converged = true;
            break;
        }
        // x_next = y - step * g
        let mut x_next = y.clone();
        x_next.axpy(-step, &g, 1.0);

        let phi_next = phi_eval(problem, eps, &x_next);
        if phi_next > phi_best {
            // Restart momentum from the best point so the strongly convex
            // momentum cannot overshoot indefinitely.
            y.copy_from(&x);
        } else {
            phi_best = phi_next;
            // y = x_next + beta (x_next - x)
            y.copy_from(&x_next);
            y.axpy(-beta, &x, 1.0);
            y.axpy(beta, &x_next, 1.0);
            x.copy_from(&x_next);
        }
        iters += 1;
    }
    if !converged {
        // Return the best iterate, flagged.
        phi_grad(problem, eps, &x, &mut g);
    }
    let residual = g.norm();
    PathPoint {
        t: f64::NAN,
        eps,
        x,
        residual,
        solver_iters: iters,
        converged,
    }
}

/// Solves the path point at time `t` under the schedule.
pub fn solve_at_time(
    problem: &ConvexProblem,
    eps_sched: &EpsilonSchedule,
    t: f64,
    warm_start: Option<&DVector<f64>>,
    tol: f64,
) -> Result<PathPoint> {
    let mut pt = solve_x_eps(problem, eps_sched.eval(t), warm_start, tol)?;
    pt.t = t;
    Ok(pt)
}

/// The path speed bounds: `tight = -(deps/eps) ||x_eps||` and, when `x*` is
/// known, the coarser `-(deps/eps) ||x*||`.
#[derive(Debug, Clone)]
pub struct PathDerivativeBound {
    pub tight: f64,
    pub coarse: Option<f64>,
    pub point: PathPoint,
}

pub fn path_derivative_bound(
    problem: &ConvexProblem,
    eps_sched: &EpsilonSchedule,
    t: f64,
    warm_start: Option<&DVector<f64>>,
) -> Result<PathDerivativeBound> {
    let point = solve_at_time(problem, eps_sched, t, warm_start, DEFAULT_PATH_TOL)?;
    if !point.converged {
        return Err(Error::SolverFailure(format!(
            "path solve at t = {t} stopped at residual {}",
            point.residual
        )));
    }
    let rate = -eps_sched.deriv(t) / eps_sched.eval(t);
    let tight = rate * point.x.norm();
    let coarse = problem.min_norm_minimizer().map(|xs| rate * xs.norm());
    Ok(PathDerivativeBound {
        tight,
        coarse,
        point,
    })
}

/// Central finite difference of the path against the analytic speed bound.
#[derive(Debug, Clone, Copy)]
pub struct SlopeCheck {
    pub fd_norm: f64,
    pub bound: f64,
    pub ok: bool,
}

pub fn path_slope_check(
    problem: &ConvexProblem,
    eps_sched: &EpsilonSchedule,
    t: f64,
    h: f64,
) -> Result<SlopeCheck> {
    if !(t - h > eps_sched.t0()) {
        return Err(Error::InvalidParam(format!(
            "need t - h > t0 for the centered difference (t = {t}, h = {h})"
        )));
    }
    let tol = DEFAULT_PATH_TOL.min(h * 1e-3);
    let plus = solve_at_time(problem, eps_sched, t + h, None, tol)?;
    let minus = solve_at_time(problem, eps_sched, t - h, Some(&plus.x), tol)?;
    let fd_norm = (&plus.x - &minus.x).norm() / (2.0 * h);
    let bound = path_derivative_bound(problem, eps_sched, t, Some(&plus.x))?.tight;
    Ok(SlopeCheck {
        fd_norm,
        bound,
        ok: fd_norm <= bound * 1.05,
    })
}
