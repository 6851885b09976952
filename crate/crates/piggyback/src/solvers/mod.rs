//! Concrete iteration maps with their derivative packets: forward-backward,
//! Douglas-Rachford, ADMM (through its dual Douglas-Rachford form) and the
//! Heavy-Ball method.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::sets::{operator_norm, JacobianElement};

mod admm;
mod douglas_rachford;
mod forward_backward;
mod heavy_ball;

pub use admm::{
    admm_as_dual_dr, admm_run, admm_step, dual_dr_to_admm, AdmmSpec, AdmmState, ArgminJacobian,
    DualProxF, DualProxG,
};
pub use douglas_rachford::DouglasRachford;
pub use forward_backward::ForwardBackward;
pub use heavy_ball::{GradientDescent, HbInit, HeavyBall};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("step size alpha = {alpha} outside (0, {max})")]
    InvalidStepSize { alpha: f64, max: f64 },
    #[error("contraction certification failed: measured A-block norm {measured}")]
    RhoCertification { measured: f64 },
    #[error("momentum beta = {beta} at or above the stability bound {bound}")]
    InvalidMomentum { beta: f64, bound: f64 },
    #[error("inner solve failed: {0}")]
    InnerSolve(String),
}

/// Gradient of a smooth-in-`x` term `f(x, theta)` with the elements of the
/// generalized Jacobian of the gradient, jointly in `(x, theta)`.
pub trait GradientOracle: Sync {
    fn eval(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64>;
    /// Candidate `[A | B]` with `A = d(grad)/dx` and `B = d(grad)/dtheta`,
    /// smallest branch indices first.
    fn jacobians(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Vec<JacobianElement>;
    /// Lipschitz constant of the gradient in `x`.
    fn lipschitz(&self) -> f64;
    /// Strong convexity modulus in `x`; zero when merely convex.
    fn strong_convexity(&self) -> f64 {
        0.0
    }
}

/// Proximal map of a convex-in-`x` term `g(x, theta)` at step `alpha`, with
/// the elements of its generalized Jacobian in `(input, theta)`.
pub trait ProxOracle: Sync {
    fn eval(&self, u: &DVector<f64>, alpha: f64, theta: &DVector<f64>) -> DVector<f64>;
    fn jacobians(&self, u: &DVector<f64>, alpha: f64, theta: &DVector<f64>)
        -> Vec<JacobianElement>;
    fn strong_convexity(&self) -> f64 {
        0.0
    }
}

/// Largest measured operator norm over the `A` blocks of a factor list.
pub fn measured_rho(elements: &[JacobianElement]) -> f64 {
    elements
        .iter()
        .map(|e| operator_norm(&e.a))
        .fold(0.0, f64::max)
}

/// Gradient of `scale / 2 * |A x - b|^2`: `scale * (A^T A x - A^T b)`,
/// independent of theta.
pub struct LeastSquaresGradient {
    q: DMatrix<f64>,
    atb: DVector<f64>,
    scale: f64,
    lipschitz: f64,
    mu: f64,
    param_dim: usize,
}

impl LeastSquaresGradient {
    pub fn new(design: &DMatrix<f64>, observations: &DVector<f64>, scale: f64, param_dim: usize) -> Self {
        let q = design.tr_mul(design);
        let atb = design.tr_mul(observations);
        let lipschitz = scale * operator_norm(&q);
        // Smallest eigenvalue of Q via the shifted power iteration bound:
        // lambda_min(Q) = |Q|_op - |(|Q|_op I - Q)|_op for symmetric PSD Q.
        let l = operator_norm(&q);
        let shifted = DMatrix::identity(q.nrows(), q.ncols()) * l - &q;
        let mu = scale * (l - operator_norm(&shifted)).max(0.0);
        LeastSquaresGradient {
            q,
            atb,
            scale,
            lipschitz,
            mu,
            param_dim,
        }
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.q
    }
}

impl GradientOracle for LeastSquaresGradient {
    fn eval(&self, x: &DVector<f64>, _theta: &DVector<f64>) -> DVector<f64> {
        (&self.q * x - &self.atb) * self.scale
    }

    fn jacobians(&self, _x: &DVector<f64>, _theta: &DVector<f64>) -> Vec<JacobianElement> {
        vec![JacobianElement::new(
            &self.q * self.scale,
            DMatrix::zeros(self.q.nrows(), self.param_dim),
        )]
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn strong_convexity(&self) -> f64 {
        self.mu
    }
}
