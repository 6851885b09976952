//! Lasso: `min_x 1/2 |A x - b|^2 + theta |x|_1`, run as unit-step
//! forward-backward on the `1/L`-scaled objective. The oracle solves to high
//! accuracy, recovers the support and uses the support-restricted formula
//! `(dxbar/dtheta)_S = -(A_S^T A_S)^{-1} sign(xbar_S)`.

use nalgebra::{DMatrix, DVector};

use super::ScenarioError;
use crate::prox::{enumerate_vertex_combinations, soft_threshold};
use crate::rng::SplitMix64;
use crate::sets::JacobianElement;
use crate::solvers::{ForwardBackward, LeastSquaresGradient, ProxOracle};

/// Support-membership threshold on the high-accuracy solution.
pub const SUPPORT_TOL: f64 = 1e-8;

/// Kink-combination cap for coordinatewise soft-threshold packets.
const KINK_CAP: usize = 64;

/// prox of `g(x, theta) = (theta / L) |x|_1`, applied coordinatewise.
pub struct ScaledL1Prox {
    pub inv_l: f64,
}

impl ProxOracle for ScaledL1Prox {
    fn eval(&self, u: &DVector<f64>, alpha: f64, theta: &DVector<f64>) -> DVector<f64> {
        let tau = alpha * theta[0] * self.inv_l;
        u.map(|ui| {
            soft_threshold(ui, tau)
                .expect("nonnegative threshold in the lasso scenario")
                .0
        })
    }

    fn jacobians(
        &self,
        u: &DVector<f64>,
        alpha: f64,
        theta: &DVector<f64>,
    ) -> Vec<JacobianElement> {
        let tau = alpha * theta[0] * self.inv_l;
        let p = u.len();
        let per_coordinate: Vec<Vec<(f64, f64)>> = u
            .iter()
            .map(|&ui| {
                soft_threshold(ui, tau)
                    .expect("nonnegative threshold in the lasso scenario")
                    .1
            })
            .collect();
        enumerate_vertex_combinations(&per_coordinate, KINK_CAP)
            .into_iter()
            .map(|assignment| {
                let mut a = DMatrix::zeros(p, p);
                let mut b = DMatrix::zeros(p, 1);
                for (i, (dx, dtau)) in assignment.into_iter().enumerate() {
                    a[(i, i)] = dx;
                    b[(i, 0)] = dtau * alpha * self.inv_l;
                }
                JacobianElement::new(a, b)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LassoInstance {
    pub design: DMatrix<f64>,
    pub observations: DVector<f64>,
    pub theta: f64,
    /// Upper bound on the operator norm of `A^T A` used for the scaling.
    pub l: f64,
    pub seed: u64,
}

/// High-accuracy solution plus its support and Jacobian.
#[derive(Debug, Clone)]
pub struct LassoOracle {
    pub solution: DVector<f64>,
    pub support: Vec<usize>,
    /// `p x 1` Jacobian of the solution map, zero off-support.
    pub jacobian: DMatrix<f64>,
}

/// Build an instance from explicit data; `theta` must be positive.
pub fn lasso_from_data(
    design: DMatrix<f64>,
    observations: DVector<f64>,
    theta: f64,
) -> Result<LassoInstance, ScenarioError> {
    if design.nrows() == 0 || design.ncols() == 0 {
        return Err(ScenarioError::InvalidDims("empty design".into()));
    }
    if theta <= 0.0 {
        return Err(ScenarioError::NotPositive {
            name: "theta",
            value: theta,
        });
    }
    let l = crate::sets::operator_norm(&design.tr_mul(&design));
    Ok(LassoInstance {
        design,
        observations,
        theta,
        l,
        seed: 0,
    })
}

/// Gaussian data with `theta = ratio * |A^T b|_inf`. Draws failing the
/// qualification heuristic are resampled from the continuing stream, at most
/// ten times.
pub fn make_lasso(
    n: usize,
    p: usize,
    ratio: f64,
    seed: u64,
) -> Result<LassoInstance, ScenarioError> {
    if n == 0 || p == 0 {
        return Err(ScenarioError::InvalidDims(format!("n = {n}, p = {p}")));
    }
    if ratio <= 0.0 {
        return Err(ScenarioError::NotPositive {
            name: "ratio",
            value: ratio,
        });
    }
    let mut rng = SplitMix64::new(seed);
    for attempt in 0..10 {
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
        let theta_max = design.tr_mul(&observations).amax();
        let theta = ratio * theta_max;
        if theta <= 0.0 {
            continue;
        }
        let instance = LassoInstance {
            l: crate::sets::operator_norm(&design.tr_mul(&design)),
            design,
            observations,
            theta,
            seed,
        };
        if instance.oracle().is_ok() {
            return Ok(instance);
        }
        let _ = attempt;
    }
    Err(ScenarioError::QualificationFailure { attempts: 10 })
}

impl LassoInstance {
    pub fn dims(&self) -> (usize, usize) {
        self.design.shape()
    }

    pub fn theta_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.theta])
    }

    /// Unit-step forward-backward on the `1/L`-scaled objective.
    pub fn problem(&self) -> ForwardBackward<LeastSquaresGradient, ScaledL1Prox> {
        self.problem_at_start(DVector::zeros(self.design.ncols()))
    }

    pub fn problem_at_start(
        &self,
        x0: DVector<f64>,
    ) -> ForwardBackward<LeastSquaresGradient, ScaledL1Prox> {
        let grad = LeastSquaresGradient::new(&self.design, &self.observations, 1.0 / self.l, 1);
        ForwardBackward::new(grad, ScaledL1Prox { inv_l: 1.0 / self.l }, 1.0, x0, 1)
            .expect("unit step is valid for the 1/L-scaled objective")
    }

    /// Plain forward-backward solve to the requested successive tolerance.
    pub fn solve(&self, tol: f64, max_iters: usize) -> Result<DVector<f64>, ScenarioError> {
        let problem = self.problem();
        let theta = self.theta_vector();
        let mut x = DVector::zeros(self.design.ncols());
        for _ in 0..max_iters {
            let next = crate::engine::FixedPointProblem::step(&problem, &x, &theta);
            let diff = (&next - &x).norm();
            x = next;
            if diff <= tol {
                return Ok(x);
            }
        }
        Err(ScenarioError::OracleSolve { tol, max_iters })
    }

    /// High-accuracy solve, support recovery, qualification heuristic and
    /// the support-restricted Jacobian.
    pub fn oracle(&self) -> Result<LassoOracle, ScenarioError> {
        let solution = self.solve(1e-14, 500_000)?;
        let support: Vec<usize> = solution
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > SUPPORT_TOL)
            .map(|(i, _)| i)
            .collect();
        // Qualification heuristic: off-support correlations strictly inside
        // the theta tube.
        let residual_corr = self
            .design
            .tr_mul(&(&self.design * &solution - &self.observations));
        for i in 0..solution.len() {
            if !support.contains(&i) && (residual_corr[i].abs() - self.theta).abs() < 1e-8 {
                return Err(ScenarioError::QualificationFailure { attempts: 1 });
            }
        }
        let p = solution.len();
        let mut jacobian = DMatrix::zeros(p, 1);
        if !support.is_empty() {
            let s = support.len();
            let design_s = DMatrix::from_fn(self.design.nrows(), s, |i, j| {
                self.design[(i, support[j])]
            });
            let gram_s = design_s.tr_mul(&design_s);
            let signs = DVector::from_fn(s, |j, _| solution[support[j]].signum());
            let rows = gram_s
                .lu()
                .solve(&signs)
                .ok_or(ScenarioError::QualificationFailure { attempts: 1 })?
                * (-1.0);
            for (j, &i) in support.iter().enumerate() {
                jacobian[(i, 0)] = rows[j];
            }
        }
        Ok(LassoOracle {
            solution,
            support,
            jacobian,
        })
    }
}
