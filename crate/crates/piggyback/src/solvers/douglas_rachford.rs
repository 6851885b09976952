//! Douglas-Rachford splitting:
//! `y_{k+1} = 1/2 (I + R_{alpha f} R_{alpha g}) y_k`, with
//! `R_{alpha h} = 2 prox_{alpha h} - I`. The prox of `g` is applied first;
//! the minimizer is recovered as `x = prox_{alpha g}(y)`.

use nalgebra::{DMatrix, DVector};

use super::{measured_rho, ProxOracle, SolverError};
use crate::engine::{FixedPointProblem, InitJacobian, Initializer, StepJacobian};
use crate::sets::JacobianElement;

pub struct DouglasRachford<PF, PG> {
    pub prox_f: PF,
    pub prox_g: PG,
    pub alpha: f64,
    y0: DVector<f64>,
    param_dim: usize,
    init_jacobian: InitJacobian,
}

impl<PF: ProxOracle, PG: ProxOracle> DouglasRachford<PF, PG> {
    pub fn new(
        prox_f: PF,
        prox_g: PG,
        alpha: f64,
        y0: DVector<f64>,
        param_dim: usize,
    ) -> Result<Self, SolverError> {
        if alpha <= 0.0 {
            return Err(SolverError::InvalidStepSize {
                alpha,
                max: f64::INFINITY,
            });
        }
        Ok(DouglasRachford {
            prox_f,
            prox_g,
            alpha,
            y0,
            param_dim,
            init_jacobian: InitJacobian::Zero,
        })
    }

    /// Replace the theta-independent zero initialization Jacobian.
    pub fn with_init_jacobian(mut self, jacobian: InitJacobian) -> Self {
        self.init_jacobian = jacobian;
        self
    }

    /// Minimizer estimate from the shadow iterate.
    pub fn solution(&self, y: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        self.prox_g.eval(y, self.alpha, theta)
    }

    /// Derivative packet at `(y, theta)`: for prox-of-g elements `[C | D]`
    /// and prox-of-f elements `[P | Q]` (the latter evaluated at the
    /// reflected point), with `E_g = 2C - I` and `E_f = 2P - I`,
    /// the elements are `[ (I + E_f E_g) / 2 | E_f D + Q ]`.
    pub fn packet_elements(&self, y: &DVector<f64>, theta: &DVector<f64>) -> Vec<JacobianElement> {
        let p = y.len();
        let eye = DMatrix::identity(p, p);
        let pg = self.prox_g.eval(y, self.alpha, theta);
        let reflected = &pg * 2.0 - y;
        let g_jacs = self.prox_g.jacobians(y, self.alpha, theta);
        let f_jacs = self.prox_f.jacobians(&reflected, self.alpha, theta);
        let mut out = Vec::with_capacity(g_jacs.len() * f_jacs.len());
        for gj in &g_jacs {
            let e_g = &gj.a * 2.0 - &eye;
            for fj in &f_jacs {
                let e_f = &fj.a * 2.0 - &eye;
                let a = (&eye + &e_f * &e_g) * 0.5;
                let b = &e_f * &gj.b + &fj.b;
                out.push(JacobianElement::new(a, b));
            }
        }
        out
    }

    /// One step with packet and measured contraction certificate; errors if
    /// strong convexity of `f` promises a contraction that the measured norm
    /// does not deliver.
    pub fn step_certified(
        &self,
        y: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<(DVector<f64>, Vec<JacobianElement>, f64), SolverError> {
        let next = self.step(y, theta);
        let elements = self.packet_elements(y, theta);
        let measured = measured_rho(&elements);
        if self.prox_f.strong_convexity() > 0.0 && measured >= 1.0 {
            return Err(SolverError::RhoCertification { measured });
        }
        Ok((next, elements, measured))
    }
}

impl<PF: ProxOracle, PG: ProxOracle> FixedPointProblem for DouglasRachford<PF, PG> {
    fn dims(&self) -> (usize, usize) {
        (self.y0.len(), self.param_dim)
    }

    fn init(&self, _theta: &DVector<f64>) -> Initializer {
        Initializer {
            x0: self.y0.clone(),
            jacobian: self.init_jacobian.clone(),
        }
    }

    fn step(&self, y: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let pg = self.prox_g.eval(y, self.alpha, theta);
        let reflected = &pg * 2.0 - y;
        let pf = self.prox_f.eval(&reflected, self.alpha, theta);
        y + pf - pg
    }

    fn step_jacobians(&self, y: &DVector<f64>, theta: &DVector<f64>) -> Vec<StepJacobian> {
        self.packet_elements(y, theta)
            .into_iter()
            .map(StepJacobian::Dense)
            .collect()
    }
}
