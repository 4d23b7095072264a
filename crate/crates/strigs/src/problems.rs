//! Convex test objectives with analytic ground truth.
//!
//! Every problem is convex, continuously differentiable with an L-Lipschitz
//! gradient, and carries its infimal value, its minimum-norm minimizer `x*`
//! when analytically known, and the closed-form regularized minimizer
//!
//! ```text
//! x_eps = argmin { f(x) + (eps/2) ||x||^2 }
//! ```
//!
//! when one exists. The Lipschitz constant is always supplied analytically,
//! never estimated, because it enters the drift-regularity checks.
//!
//! Problems are immutable after construction and safe to share across
//! concurrent trajectory workers.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};

#[derive(Debug, Clone)]
enum Objective {
    /// `f(x) = 1/2 ||x - p||^2`.
    ShiftedQuadratic { p: DVector<f64> },
    /// `f(x) = 1/2 ||A x - b||^2` with possibly rank-deficient A.
    LeastSquares {
        a: DMatrix<f64>,
        b: DVector<f64>,
        ata: DMatrix<f64>,
        atb: DVector<f64>,
    },
    /// `f(x) = H(||x||)` with the scalar Huber function of threshold kappa.
    HuberNorm { kappa: f64 },
    /// `f(x) = s * ln( sum_i exp(x_i/s) + exp(-x_i/s) )`, a smoothed max-norm.
    LogSumExp { smoothing: f64 },
}

/// Gradient oracle for a convex objective satisfying the smoothness
/// assumptions of the dynamics.
#[derive(Debug, Clone)]
pub struct ConvexProblem {
    dim: usize,
    lipschitz: f64,
    inf_value: f64,
    min_norm_minimizer: Option<DVector<f64>>,
    has_closed_form_argmin: bool,
    objective: Objective,
}

impl ConvexProblem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Analytic Lipschitz constant of the gradient.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `inf f` over the whole space.
    pub fn inf_value(&self) -> f64 {
        self.inf_value
    }

    /// Minimum-norm element of `argmin f`, when analytically known.
    pub fn min_norm_minimizer(&self) -> Option<&DVector<f64>> {
        self.min_norm_minimizer.as_ref()
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match &self.objective {
            Objective::ShiftedQuadratic { p } => 0.5 * (x - p).norm_squared(),
            Objective::LeastSquares { a, b, .. } => 0.5 * (a * x - b).norm_squared(),
            Objective::HuberNorm { kappa } => {
                let n = x.norm();
                if n <= *kappa {
                    0.5 * n * n
                } else {
                    kappa * n - 0.5 * kappa * kappa
                }
            }
            Objective::LogSumExp { smoothing } => {
                // s * ln sum_i (e^{x_i/s} + e^{-x_i/s}), stabilized by the
                // largest exponent.
                let s = *smoothing;
                let m = x.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())) / s;
                let sum: f64 = x
                    .iter()
                    .map(|&v| (v / s - m).exp() + (-v / s - m).exp())
                    .sum();
                s * (m + sum.ln())
            }
        }
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.grad_into(x, &mut out);
        out
    }

    /// Allocation-free gradient for integrator hot loops.
    pub fn grad_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        match &self.objective {
            Objective::ShiftedQuadratic { p } => {
                out.copy_from(x);
                *out -= p;
            }
            Objective::LeastSquares { ata, atb, .. } => {
                out.gemv(1.0, ata, x, 0.0);
                *out -= atb;
            }
            Objective::HuberNorm { kappa } => {
                let n = x.norm();
                out.copy_from(x);
                if n > *kappa {
                    *out *= kappa / n;
                }
            }
            Objective::LogSumExp { smoothing } => {
                let s = *smoothing;
                let m = x.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())) / s;
                let mut z = 0.0;
                for &v in x.iter() {
                    z += (v / s - m).exp() + (-v / s - m).exp();
                }
                for i in 0..self.dim {
                    let w_plus = (x[i] / s - m).exp();
                    let w_minus = (-x[i] / s - m).exp();
                    out[i] = (w_plus - w_minus) / z;
                }
            }
        }
    }

    /// Closed-form `argmin { f + (eps/2)||.||^2 }`, when available.
    pub fn regularized_argmin(&self, eps: f64) -> Option<DVector<f64>> {
        if !(eps > 0.0) {
            return None;
        }
        match &self.objective {
            Objective::ShiftedQuadratic { p } => Some(p / (1.0 + eps)),
            Objective::LeastSquares { ata, atb, .. } => {
                let mut m = ata.clone();
                for i in 0..self.dim {
                    m[(i, i)] += eps;
                }
                Cholesky::new(m).map(|ch| ch.solve(atb))
            }
            _ => None,
        }
    }

    pub fn has_closed_form_argmin(&self) -> bool {
        self.has_closed_form_argmin
    }
}

/// `f(x) = 1/2 ||x - p||^2`: L = 1, inf = 0, `x* = p`,
/// `x_eps = p / (1 + eps)`.
pub fn make_shifted_quadratic(p: DVector<f64>) -> Result<ConvexProblem> {
    if p.is_empty() {
        return Err(Error::DimensionMismatch("p must have dimension >= 1".into()));
    }
    Ok(ConvexProblem {
        dim: p.len(),
        lipschitz: 1.0,
        inf_value: 0.0,
        min_norm_minimizer: Some(p.clone()),
        has_closed_form_argmin: true,
        objective: Objective::ShiftedQuadratic { p },
    })
}

/// `f(x) = 1/2 ||A x - b||^2`: L is the largest eigenvalue of `A^T A`,
/// `x*` the pseudoinverse solution, `x_eps = (A^T A + eps I)^{-1} A^T b`.
/// Rank-deficient A realizes a nonunique solution set whose minimum-norm
/// element the dynamics must select.
pub fn make_least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<ConvexProblem> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "A has {} rows but b has {} entries",
            a.nrows(),
            b.len()
        )));
    }
    if a.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidParam("A must be nonzero".into()));
    }
    let dim = a.ncols();
    let ata = a.transpose() * &a;
    let atb = a.transpose() * &b;
    let lipschitz = ata
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v));
    // Minimum-norm least-squares solution via SVD with a rank cutoff well
    // above roundoff.
    let svd = a.clone().svd(true, true);
    let xstar = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidParam(format!("SVD solve failed: {e}")))?;
    let inf_value = 0.5 * (&a * &xstar - &b).norm_squared();
    Ok(ConvexProblem {
        dim,
        lipschitz,
        inf_value,
        min_norm_minimizer: Some(xstar),
        has_closed_form_argmin: true,
        objective: Objective::LeastSquares { a, b, ata, atb },
    })
}

/// Kinds accepted by [`make_smoothed_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothedNormKind {
    /// Huber function of the Euclidean norm; the smoothing parameter is the
    /// quadratic/linear threshold.
    Huber,
    /// Log-sum-exp over the symmetric anchor set `{+e_i, -e_i}`; the
    /// smoothing parameter is the temperature.
    LogSumExp,
}

/// Non-quadratic smooth instances. No closed-form regularized minimizer is
/// published, so these exercise the iterative path solver. Both are centered
/// at the origin, hence `x* = 0` by symmetry.
pub fn make_smoothed_norm(kind: SmoothedNormKind, smoothing: f64, dim: usize) -> Result<ConvexProblem> {
    if !(smoothing > 0.0) {
        return Err(Error::InvalidParam(format!(
            "smoothing parameter must be positive, got {smoothing}"
        )));
    }
    if dim == 0 {
        return Err(Error::DimensionMismatch("dim must be >= 1".into()));
    }
    match kind {
        SmoothedNormKind::Huber => Ok(ConvexProblem {
            dim,
            // Moreau envelope of kappa*||.|| with parameter 1: gradient is
            // 1-Lipschitz.
            lipschitz: 1.0,
            inf_value: 0.0,
            min_norm_minimizer: Some(DVector::zeros(dim)),
            has_closed_form_argmin: false,
            objective: Objective::HuberNorm { kappa: smoothing },
        }),
        SmoothedNormKind::LogSumExp => {
            let s = smoothing;
            // f(0) = s ln(2 dim); Hessian is bounded by (1/s) I.
            Ok(ConvexProblem {
                dim,
                lipschitz: 1.0 / s,
                inf_value: s * (2.0 * dim as f64).ln(),
                min_norm_minimizer: Some(DVector::zeros(dim)),
                has_closed_form_argmin: false,
                objective: Objective::LogSumExp { smoothing: s },
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeqRng;

    fn random_vec(rng: &mut SeqRng, dim: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| rng.normal() * scale)
    }

    fn central_diff_grad(p: &ConvexProblem, x: &DVector<f64>) -> DVector<f64> {
        let h = 1e-6;
        DVector::from_fn(p.dim(), |i, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (p.eval(&xp) - p.eval(&xm)) / (2.0 * h)
        })
    }

    fn all_problems() -> Vec<ConvexProblem> {
        vec![
            make_shifted_quadratic(DVector::from_vec(vec![1.0, 0.0])).unwrap(),
            make_least_squares(
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
                DVector::from_vec(vec![1.0, 1.0]),
            )
            .unwrap(),
            make_smoothed_norm(SmoothedNormKind::Huber, 1.0, 3).unwrap(),
            make_smoothed_norm(SmoothedNormKind::LogSumExp, 0.5, 3).unwrap(),
        ]
    }

    #[test]
    fn shifted_quadratic_examples() {
        let p = make_shifted_quadratic(DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(p.lipschitz(), 1.0);
        assert_eq!(p.inf_value(), 0.0);
        let g = p.grad(&DVector::zeros(2));
        assert_eq!(g, DVector::from_vec(vec![-1.0, 0.0]));

        let xe = p.regularized_argmin(0.25).unwrap();
        assert!((xe - DVector::from_vec(vec![0.8, 0.0])).norm() < 1e-15);

        // || x_eps - p || = eps/(1+eps) * ||p||
        for &eps in &[1.0, 0.1, 1e-3, 1e-6] {
            let xe = p.regularized_argmin(eps).unwrap();
            let expect = eps / (1.0 + eps);
            let pvec = DVector::from_vec(vec![1.0, 0.0]);
            assert!(((xe - &pvec).norm() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn least_squares_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let p = make_least_squares(a, b).unwrap();
        // Solution set is {(1, y)}; minimum-norm element (1, 0).
        let xs = p.min_norm_minimizer().unwrap();
        assert!((xs - DVector::from_vec(vec![1.0, 0.0])).norm() < 1e-10);
        assert!((p.inf_value() - 0.5).abs() < 1e-15);

        let xe = p.regularized_argmin(0.1).unwrap();
        assert!((xe - DVector::from_vec(vec![1.0 / 1.1, 0.0])).norm() < 1e-12);

        let ident = make_least_squares(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![2.0, 3.0]),
        )
        .unwrap();
        assert!((ident.lipschitz() - 1.0).abs() < 1e-12);
        assert_eq!(ident.inf_value(), 0.0);
        assert!(
            (ident.min_norm_minimizer().unwrap() - DVector::from_vec(vec![2.0, 3.0])).norm()
                < 1e-10
        );
    }

    #[test]
    fn least_squares_rejects_bad_input() {
        assert!(make_least_squares(DMatrix::zeros(2, 2), DVector::zeros(2)).is_err());
        assert!(make_least_squares(
            DMatrix::identity(3, 2),
            DVector::zeros(2)
        )
        .is_err());
    }

    #[test]
    fn huber_gradient_regions() {
        let p = make_smoothed_norm(SmoothedNormKind::Huber, 1.0, 1).unwrap();
        let g = p.grad(&DVector::from_vec(vec![0.5]));
        assert!((g[0] - 0.5).abs() < 1e-15, "quadratic region slope");
        let g = p.grad(&DVector::from_vec(vec![3.0]));
        assert!((g[0] - 1.0).abs() < 1e-15, "linear region slope");
        assert!(p.regularized_argmin(0.1).is_none());
        assert!(make_smoothed_norm(SmoothedNormKind::Huber, 0.0, 1).is_err());
    }

    #[test]
    fn log_sum_exp_symmetric_gradient_vanishes_at_origin() {
        let p = make_smoothed_norm(SmoothedNormKind::LogSumExp, 0.5, 4).unwrap();
        assert!(p.grad(&DVector::zeros(4)).norm() < 1e-15);
        assert!((p.eval(&DVector::zeros(4)) - p.inf_value()).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = SeqRng::new(2024);
        for p in all_problems() {
            for _ in 0..100 {
                let x = random_vec(&mut rng, p.dim(), 2.0);
                let g = p.grad(&x);
                let fd = central_diff_grad(&p, &x);
                let denom = g.norm().max(1.0);
                assert!(
                    (g - fd).norm() / denom < 1e-5,
                    "finite-difference mismatch for {:?}",
                    p
                );
            }
        }
    }

    #[test]
    fn gradient_is_lipschitz_and_function_convex_on_samples() {
        let mut rng = SeqRng::new(77);
        for p in all_problems() {
            for _ in 0..200 {
                let x = random_vec(&mut rng, p.dim(), 3.0);
                let y = random_vec(&mut rng, p.dim(), 3.0);
                let lhs = (p.grad(&x) - p.grad(&y)).norm();
                assert!(
                    lhs <= p.lipschitz() * (&x - &y).norm() * (1.0 + 1e-12),
                    "Lipschitz violated"
                );
                let mid = (&x + &y) * 0.5;
                assert!(
                    p.eval(&mid) <= 0.5 * p.eval(&x) + 0.5 * p.eval(&y) + 1e-12,
                    "midpoint convexity violated"
                );
            }
        }
    }

    #[test]
    fn minimizer_is_stationary_and_attains_inf() {
        for p in all_problems() {
            if let Some(xs) = p.min_norm_minimizer() {
                assert!(p.grad(xs).norm() < 1e-10);
                assert!((p.eval(xs) - p.inf_value()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn regularized_path_norm_monotone_and_below_xstar() {
        for p in all_problems() {
            if !p.has_closed_form_argmin() {
                continue;
            }
            let xs_norm = p.min_norm_minimizer().unwrap().norm();
            // Ascending eps grid: ||x_eps|| must be nonincreasing and never
            // exceed ||x*||.
            let grid: Vec<f64> = (0..40)
                .map(|k| 10f64.powf(-6.0 + 6.0 * k as f64 / 39.0))
                .collect();
            let mut prev_norm = f64::INFINITY;
            for &eps in &grid {
                let n = p.regularized_argmin(eps).unwrap().norm();
                assert!(n <= prev_norm + 1e-12, "norm not nonincreasing in eps");
                prev_norm = n;
                assert!(n <= xs_norm + 1e-12, "||x_eps|| exceeds ||x*||");
            }
        }
    }
}
