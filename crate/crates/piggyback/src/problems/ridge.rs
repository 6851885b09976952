//! Ridge regression: `min_x 1/2 |A x - b|^2 + theta |x|^2`, solved by
//! forward-backward with the closed-form solution and Jacobian as oracle.

use nalgebra::{DMatrix, DVector};

use super::ScenarioError;
use crate::prox::ridge_prox;
use crate::rng::SplitMix64;
use crate::sets::JacobianElement;
use crate::solvers::{ForwardBackward, GradientOracle, LeastSquaresGradient, ProxOracle};

/// prox of `g(x, theta) = theta |x|^2` through its closed form.
pub struct RidgeProxOracle;

impl ProxOracle for RidgeProxOracle {
    fn eval(&self, u: &DVector<f64>, alpha: f64, theta: &DVector<f64>) -> DVector<f64> {
        ridge_prox(u, alpha, theta[0]).expect("theta > 0 in the ridge scenario").0
    }

    fn jacobians(
        &self,
        u: &DVector<f64>,
        alpha: f64,
        theta: &DVector<f64>,
    ) -> Vec<JacobianElement> {
        vec![
            ridge_prox(u, alpha, theta[0])
                .expect("theta > 0 in the ridge scenario")
                .1,
        ]
    }

    fn strong_convexity(&self) -> f64 {
        // theta > 0 throughout; only the sign matters for certification.
        1.0
    }
}

#[derive(Debug, Clone)]
pub struct RidgeInstance {
    pub design: DMatrix<f64>,
    pub observations: DVector<f64>,
    pub theta: f64,
    pub seed: u64,
}

/// Gaussian design and observations, every entry standard normal, filled in
/// a fixed order.
pub fn make_ridge(n: usize, p: usize, theta: f64, seed: u64) -> Result<RidgeInstance, ScenarioError> {
    if n == 0 || p == 0 {
        return Err(ScenarioError::InvalidDims(format!("n = {n}, p = {p}")));
    }
    if theta <= 0.0 {
        return Err(ScenarioError::NotPositive {
            name: "theta",
            value: theta,
        });
    }
    let mut rng = SplitMix64::new(seed);
    let mut design = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            design[(i, j)] = rng.next_gaussian();
        }
    }
    let mut observations = DVector::zeros(n);
    for i in 0..n {
        observations[i] = rng.next_gaussian();
    }
    Ok(RidgeInstance {
        design,
        observations,
        theta,
        seed,
    })
}

impl RidgeInstance {
    pub fn dims(&self) -> (usize, usize) {
        self.design.shape()
    }

    fn regularized_gram(&self) -> DMatrix<f64> {
        let p = self.design.ncols();
        self.design.tr_mul(&self.design) + DMatrix::identity(p, p) * (2.0 * self.theta)
    }

    /// Closed form `(A^T A + 2 theta I)^{-1} A^T b`.
    pub fn oracle_solution(&self) -> DVector<f64> {
        self.regularized_gram()
            .lu()
            .solve(&self.design.tr_mul(&self.observations))
            .expect("regularized gram matrix is positive definite")
    }

    /// Closed form `dxbar/dtheta = -2 (A^T A + 2 theta I)^{-1} xbar`, as a
    /// `p x 1` matrix.
    pub fn oracle_jacobian(&self) -> DMatrix<f64> {
        let xbar = self.oracle_solution();
        let col = self
            .regularized_gram()
            .lu()
            .solve(&xbar)
            .expect("regularized gram matrix is positive definite")
            * (-2.0);
        DMatrix::from_column_slice(col.len(), 1, col.as_slice())
    }

    /// Forward-backward problem at step `1 / L`, started from zero.
    pub fn problem(&self) -> ForwardBackward<LeastSquaresGradient, RidgeProxOracle> {
        let grad = LeastSquaresGradient::new(&self.design, &self.observations, 1.0, 1);
        let alpha = 1.0 / grad.lipschitz();
        let p = self.design.ncols();
        ForwardBackward::new(grad, RidgeProxOracle, alpha, DVector::zeros(p), 1)
            .expect("1 / L is always a valid step size")
    }

    pub fn theta_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.theta])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{full_jacobian_sequence, run_iterates};

    #[test]
    fn scalar_closed_form() {
        let instance = RidgeInstance {
            design: DMatrix::from_element(1, 1, 1.0),
            observations: DVector::from_vec(vec![1.0]),
            theta: 0.5,
            seed: 0,
        };
        let x = instance.oracle_solution();
        assert!((x[0] - 0.5).abs() < 1e-15);
        let j = instance.oracle_jacobian();
        assert!((j[(0, 0)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn large_theta_shrinks_to_zero() {
        let instance = make_ridge(10, 4, 1e8, 5).unwrap();
        assert!(instance.oracle_solution().norm() < 1e-6);
    }

    #[test]
    fn reproducible_generation() {
        let a = make_ridge(6, 3, 0.05, 99).unwrap();
        let b = make_ridge(6, 3, 0.05, 99).unwrap();
        assert_eq!(a.design, b.design);
        assert_eq!(a.observations, b.observations);
        let c = make_ridge(6, 3, 0.05, 100).unwrap();
        assert_ne!(a.design, c.design);
    }

    #[test]
    fn desk_scale_piggyback_matches_oracle() {
        let instance = make_ridge(20, 8, 0.05, 7).unwrap();
        let problem = instance.problem();
        let theta = instance.theta_vector();
        let iterates = run_iterates(&problem, &theta, 5000).unwrap();
        let err = (iterates.last().unwrap() - instance.oracle_solution()).norm();
        assert!(err < 1e-9, "iterate error {err}");
        let jacs = full_jacobian_sequence(&problem, &theta, 5000).unwrap();
        let jerr = (jacs.last().unwrap() - instance.oracle_jacobian()).norm();
        assert!(jerr < 1e-7, "jacobian error {jerr}");
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(make_ridge(0, 3, 0.1, 1).is_err());
        assert!(make_ridge(3, 3, 0.0, 1).is_err());
    }
}
