//! Simulation and verification lab for stochastic Tikhonov-regularized
//! inertial gradient dynamics.
//!
//! The crate integrates the second-order SDE
//!
//! ```text
//! dX = Y dt
//! dY = ( -delta sqrt(eps(t)) Y - grad f(X) - eps(t) X ) dt + sigma(t) dW
//! ```
//!
//! on finite-dimensional convex problems, evaluates the associated Lyapunov
//! energy and its decay bounds, validates the damping-parameter feasibility
//! conditions, and estimates convergence rates from single paths and Monte
//! Carlo ensembles. As `eps(t) -> 0` the trajectory tracks the Tikhonov path
//! `x_eps(t)` and selects the minimum-norm minimizer of `f`.
//!
//! Module map:
//!
//! * [`problems`] — convex objectives with analytic gradients and ground truth
//! * [`schedules`] — `eps(t)`, `sigma(t)`, damping constants and feasibility
//! * [`tikhonov`] — the regularization path solver and its speed bounds
//! * [`dynamics`] — drift fields and the Euler-Maruyama integrator
//! * [`energy`] — Lyapunov energy, integrating factor, decay bounds, monitors
//! * [`experiments`] — ensembles, rate fits, martingale and selection checks
//! * [`config`] / [`pipeline`] — run configuration and the CLI pipelines

pub mod config;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod output;
pub mod pipeline;
pub mod problems;
pub mod quad;
pub mod rng;
pub mod schedules;
pub mod tikhonov;

pub use error::{Error, Result};
