//! Forward-backward splitting: `x_{k+1} = prox_{alpha g}(x_k - alpha grad_f(x_k))`.

use nalgebra::{DMatrix, DVector};

use super::{measured_rho, GradientOracle, ProxOracle, SolverError};
use crate::engine::{FixedPointProblem, InitJacobian, Initializer, StepJacobian};
use crate::sets::JacobianElement;

/// Forward-backward iteration map with its derivative packet
/// `{ [C (I - alpha A) | -alpha C B + D] }` over all combinations of
/// gradient elements `[A | B]` and prox elements `[C | D]`.
pub struct ForwardBackward<G, P> {
    pub grad_f: G,
    pub prox_g: P,
    pub alpha: f64,
    x0: DVector<f64>,
    param_dim: usize,
}

impl<G: GradientOracle, P: ProxOracle> ForwardBackward<G, P> {
    /// Requires `0 < alpha < 2 / L`.
    pub fn new(
        grad_f: G,
        prox_g: P,
        alpha: f64,
        x0: DVector<f64>,
        param_dim: usize,
    ) -> Result<Self, SolverError> {
        let max = 2.0 / grad_f.lipschitz();
        if !(alpha > 0.0 && alpha < max) {
            return Err(SolverError::InvalidStepSize { alpha, max });
        }
        Ok(ForwardBackward {
            grad_f,
            prox_g,
            alpha,
            x0,
            param_dim,
        })
    }

    fn forward_point(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        x - self.grad_f.eval(x, theta) * self.alpha
    }

    /// The derivative packet at `(x, theta)` as dense elements.
    pub fn packet_elements(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Vec<JacobianElement> {
        let p = x.len();
        let u = self.forward_point(x, theta);
        let grad_jacs = self.grad_f.jacobians(x, theta);
        let prox_jacs = self.prox_g.jacobians(&u, self.alpha, theta);
        let eye = DMatrix::identity(p, p);
        let mut out = Vec::with_capacity(grad_jacs.len() * prox_jacs.len());
        for gj in &grad_jacs {
            let h_a = &eye - &gj.a * self.alpha;
            let h_b = &gj.b * (-self.alpha);
            for pj in &prox_jacs {
                out.push(JacobianElement::new(&pj.a * &h_a, &pj.a * &h_b + &pj.b));
            }
        }
        out
    }

    /// One step together with its packet and the measured contraction
    /// certificate. Errors when strong convexity promises a contraction but
    /// the measured norm is not strictly below one.
    pub fn step_certified(
        &self,
        x: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<(DVector<f64>, Vec<JacobianElement>, f64), SolverError> {
        let next = self.step(x, theta);
        let elements = self.packet_elements(x, theta);
        let measured = measured_rho(&elements);
        let strongly_convex =
            self.grad_f.strong_convexity() > 0.0 || self.prox_g.strong_convexity() > 0.0;
        if strongly_convex && measured >= 1.0 {
            return Err(SolverError::RhoCertification { measured });
        }
        Ok((next, elements, measured))
    }
}

impl<G: GradientOracle, P: ProxOracle> FixedPointProblem for ForwardBackward<G, P> {
    fn dims(&self) -> (usize, usize) {
        (self.x0.len(), self.param_dim)
    }

    fn init(&self, _theta: &DVector<f64>) -> Initializer {
        Initializer {
            x0: self.x0.clone(),
            jacobian: InitJacobian::Zero,
        }
    }

    fn step(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let u = self.forward_point(x, theta);
        self.prox_g.eval(&u, self.alpha, theta)
    }

    fn step_jacobians(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Vec<StepJacobian> {
        self.packet_elements(x, theta)
            .into_iter()
            .map(StepJacobian::Dense)
            .collect()
    }
}
