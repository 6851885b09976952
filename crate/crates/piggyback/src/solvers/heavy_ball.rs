//! Heavy-Ball iteration on the doubled state and a plain gradient-descent
//! companion over the same gradient oracle.
//!
//! `F((x, y), theta) = (x - alpha grad f(x, theta) + beta (x - y), x)`.
//! The derivative packet has the block structure
//! `[ (1 + beta) I - alpha H, -beta I ; I, 0 ]` over the gradient-Jacobian
//! candidates `H`; no contraction certificate is claimed, the packet is
//! set-valued at kinks and products of its elements may expand.

use nalgebra::{DMatrix, DVector};

use super::{GradientOracle, SolverError};
use crate::engine::{FixedPointProblem, InitJacobian, Initializer, StepJacobian};
use crate::sets::JacobianElement;

/// Initialization of the doubled state.
#[derive(Debug, Clone)]
pub enum HbInit {
    /// `x_0(theta) = y_0(theta) = theta` (state dimension equals parameter
    /// dimension); the initialization Jacobian stacks two identities.
    IdentityInTheta,
    /// Fixed theta-independent start.
    Point(DVector<f64>),
}

type Schedule = Box<dyn Fn(usize, usize) -> usize + Send + Sync>;

pub struct HeavyBall<G> {
    pub grad: G,
    pub alpha: f64,
    pub beta: f64,
    init: HbInit,
    dim: usize,
    param_dim: usize,
    schedule: Option<Schedule>,
}

impl<G: GradientOracle> HeavyBall<G> {
    /// Stability bound on the momentum:
    /// `beta < (mu / (2 L) + sqrt(mu^2 / (4 L^2) + 2)) / 2`.
    pub fn momentum_bound(mu: f64, l: f64) -> f64 {
        let r = mu / (2.0 * l);
        0.5 * (r + (r * r + 2.0).sqrt())
    }

    pub fn new(
        grad: G,
        alpha: f64,
        beta: f64,
        init: HbInit,
        dim: usize,
        param_dim: usize,
    ) -> Result<Self, SolverError> {
        let bound = Self::momentum_bound(grad.strong_convexity(), grad.lipschitz());
        if !(beta > 0.0 && beta < bound) {
            return Err(SolverError::InvalidMomentum { beta, bound });
        }
        if alpha <= 0.0 {
            return Err(SolverError::InvalidStepSize {
                alpha,
                max: f64::INFINITY,
            });
        }
        Ok(HeavyBall {
            grad,
            alpha,
            beta,
            init,
            dim,
            param_dim,
            schedule: None,
        })
    }

    /// Override the kink tie-breaking with an explicit per-iteration branch
    /// schedule `(k, num_factors) -> index`.
    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    fn split<'a>(&self, z: &'a DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            DVector::from_column_slice(&z.as_slice()[..self.dim]),
            DVector::from_column_slice(&z.as_slice()[self.dim..]),
        )
    }
}

impl<G: GradientOracle> FixedPointProblem for HeavyBall<G> {
    fn dims(&self) -> (usize, usize) {
        (2 * self.dim, self.param_dim)
    }

    fn init(&self, theta: &DVector<f64>) -> Initializer {
        match &self.init {
            HbInit::IdentityInTheta => {
                assert_eq!(self.dim, self.param_dim);
                let mut x0 = DVector::zeros(2 * self.dim);
                let mut j0 = DMatrix::zeros(2 * self.dim, self.param_dim);
                for i in 0..self.dim {
                    x0[i] = theta[i];
                    x0[self.dim + i] = theta[i];
                    j0[(i, i)] = 1.0;
                    j0[(self.dim + i, i)] = 1.0;
                }
                Initializer {
                    x0,
                    jacobian: InitJacobian::Dense(j0),
                }
            }
            HbInit::Point(z0) => Initializer {
                x0: z0.clone(),
                jacobian: InitJacobian::Zero,
            },
        }
    }

    fn step(&self, z: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let (x, y) = self.split(z);
        let g = self.grad.eval(&x, theta);
        let x_next = &x - g * self.alpha + (&x - &y) * self.beta;
        let mut out = DVector::zeros(2 * self.dim);
        out.rows_mut(0, self.dim).copy_from(&x_next);
        out.rows_mut(self.dim, self.dim).copy_from(&x);
        out
    }

    fn step_jacobians(&self, z: &DVector<f64>, theta: &DVector<f64>) -> Vec<StepJacobian> {
        let d = self.dim;
        let (x, _) = self.split(z);
        self.grad
            .jacobians(&x, theta)
            .into_iter()
            .map(|gj| {
                let mut a = DMatrix::zeros(2 * d, 2 * d);
                // Top-left: (1 + beta) I - alpha H, top-right: -beta I.
                for i in 0..d {
                    for j in 0..d {
                        a[(i, j)] = -self.alpha * gj.a[(i, j)];
                    }
                    a[(i, i)] += 1.0 + self.beta;
                    a[(i, d + i)] = -self.beta;
                    a[(d + i, i)] = 1.0;
                }
                let mut b = DMatrix::zeros(2 * d, self.param_dim);
                for i in 0..d {
                    for j in 0..self.param_dim {
                        b[(i, j)] = -self.alpha * gj.b[(i, j)];
                    }
                }
                StepJacobian::Dense(JacobianElement::new(a, b))
            })
            .collect()
    }

    fn select(&self, k: usize, num_factors: usize) -> usize {
        match &self.schedule {
            Some(schedule) => schedule(k, num_factors).min(num_factors.saturating_sub(1)),
            None => 0,
        }
    }
}

/// Fixed-step gradient descent `x_{k+1} = x - alpha grad f(x, theta)` with
/// the packet `{ [I - alpha H | -alpha B] }`, same initialization options
/// and scheduling hook as [`HeavyBall`].
pub struct GradientDescent<G> {
    pub grad: G,
    pub alpha: f64,
    init: HbInit,
    dim: usize,
    param_dim: usize,
    schedule: Option<Schedule>,
}

impl<G: GradientOracle> GradientDescent<G> {
    pub fn new(grad: G, alpha: f64, init: HbInit, dim: usize, param_dim: usize) -> Self {
        GradientDescent {
            grad,
            alpha,
            init,
            dim,
            param_dim,
            schedule: None,
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = Some(schedule);
        self
    }
}

impl<G: GradientOracle> FixedPointProblem for GradientDescent<G> {
    fn dims(&self) -> (usize, usize) {
        (self.dim, self.param_dim)
    }

    fn init(&self, theta: &DVector<f64>) -> Initializer {
        match &self.init {
            HbInit::IdentityInTheta => {
                assert_eq!(self.dim, self.param_dim);
                Initializer {
                    x0: theta.clone(),
                    jacobian: InitJacobian::Dense(DMatrix::identity(self.dim, self.param_dim)),
                }
            }
            HbInit::Point(x0) => Initializer {
                x0: x0.clone(),
                jacobian: InitJacobian::Zero,
            },
        }
    }

    fn step(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        x - self.grad.eval(x, theta) * self.alpha
    }

    fn step_jacobians(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Vec<StepJacobian> {
        let eye = DMatrix::identity(self.dim, self.dim);
        self.grad
            .jacobians(x, theta)
            .into_iter()
            .map(|gj| {
                StepJacobian::Dense(JacobianElement::new(
                    &eye - &gj.a * self.alpha,
                    &gj.b * (-self.alpha),
                ))
            })
            .collect()
    }

    fn select(&self, k: usize, num_factors: usize) -> usize {
        match &self.schedule {
            Some(schedule) => schedule(k, num_factors).min(num_factors.saturating_sub(1)),
            None => 0,
        }
    }
}
