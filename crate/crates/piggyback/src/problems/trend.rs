//! Trend filtering: `min_x 1/2 |x - theta|^2 + lambda |D2 x|_1` with the
//! second-order forward-difference operator `D2`.
//!
//! ADMM roles: `phi(u) = 1/2 |u - theta|^2` on the signal, `psi(v) = lambda
//! |v|_1` on the differences, constraint `D2 u - v = 0`. The `u`-update is a
//! linear solve, the `v`-update a coordinatewise soft threshold; the dual
//! Douglas-Rachford form is contractive because `D2` has full row rank.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::ScenarioError;
use crate::prox::{enumerate_vertex_combinations, soft_threshold};
use crate::rng::SplitMix64;
use crate::solvers::{AdmmSpec, ArgminJacobian};

/// `(p - 2) x p` matrix with rows `(1, -2, 1)`.
pub fn second_difference_matrix(p: usize) -> DMatrix<f64> {
    assert!(p >= 3);
    let mut d = DMatrix::zeros(p - 2, p);
    for i in 0..p - 2 {
        d[(i, i)] = 1.0;
        d[(i, i + 1)] = -2.0;
        d[(i, i + 2)] = 1.0;
    }
    d
}

#[derive(Debug, Clone)]
pub struct TrendInstance {
    /// Observation vector; this is the parameter the solution is
    /// differentiated against.
    pub observations: DVector<f64>,
    pub lambda: f64,
    pub seed: u64,
}

pub fn make_trend_filter(p: usize, lambda: f64, seed: u64) -> Result<TrendInstance, ScenarioError> {
    if p < 4 {
        return Err(ScenarioError::InvalidDims(format!("p = {p}, need p >= 4")));
    }
    if lambda < 0.0 {
        return Err(ScenarioError::NotPositive {
            name: "lambda",
            value: lambda,
        });
    }
    let mut rng = SplitMix64::new(seed);
    let mut observations = DVector::zeros(p);
    for i in 0..p {
        observations[i] = rng.next_gaussian();
    }
    Ok(TrendInstance {
        observations,
        lambda,
        seed,
    })
}

/// Kink-combination cap for the soft-threshold v-update.
const KINK_CAP: usize = 64;

impl TrendInstance {
    pub fn p(&self) -> usize {
        self.observations.len()
    }

    pub fn theta_vector(&self) -> DVector<f64> {
        self.observations.clone()
    }

    /// The ADMM specification; `alpha` is the penalty parameter.
    ///
    /// Both tilted argmins are closed-form:
    /// `U(s) = (I + alpha D^T D)^{-1} (theta - D^T s)` and
    /// `V(t)_i = soft_threshold(t_i / alpha, lambda / alpha)`.
    pub fn admm_spec(&self, alpha: f64) -> AdmmSpec {
        let p = self.p();
        let d = second_difference_matrix(p);
        let lambda = self.lambda;
        let system = DMatrix::identity(p, p) + d.tr_mul(&d) * alpha;
        let chol: Cholesky<f64, Dyn> = system
            .clone()
            .cholesky()
            .expect("I + alpha D^T D is positive definite");
        let k_inv = system
            .try_inverse()
            .expect("I + alpha D^T D is positive definite");
        let minus_kdt = -(&k_inv * d.transpose());

        let d_u = d.clone();
        let chol_u = chol;
        let u_solve = move |s: &DVector<f64>, theta: &DVector<f64>| {
            chol_u.solve(&(theta - d_u.tr_mul(s)))
        };
        let v_solve = move |t: &DVector<f64>, _theta: &DVector<f64>| {
            t.map(|ti| {
                soft_threshold(ti / alpha, lambda / alpha)
                    .expect("lambda, alpha >= 0")
                    .0
            })
        };
        let u_jac = move |_s: &DVector<f64>, _theta: &DVector<f64>| {
            vec![ArgminJacobian {
                d_input: minus_kdt.clone(),
                d_theta: k_inv.clone(),
            }]
        };
        let v_jac = move |t: &DVector<f64>, _theta: &DVector<f64>| {
            let rows = t.len();
            let per_coordinate: Vec<Vec<(f64, f64)>> = t
                .iter()
                .map(|&ti| {
                    soft_threshold(ti / alpha, lambda / alpha)
                        .expect("lambda, alpha >= 0")
                        .1
                })
                .collect();
            enumerate_vertex_combinations(&per_coordinate, KINK_CAP)
                .into_iter()
                .map(|assignment| {
                    let mut d_input = DMatrix::zeros(rows, rows);
                    for (i, (dx, _)) in assignment.into_iter().enumerate() {
                        d_input[(i, i)] = dx / alpha;
                    }
                    ArgminJacobian {
                        d_input,
                        d_theta: DMatrix::zeros(rows, t.len() + 2),
                    }
                })
                .collect()
        };
        AdmmSpec::new(
            d,
            -DMatrix::identity(p - 2, p - 2),
            DVector::zeros(p - 2),
            alpha,
            p,
            Box::new(u_solve),
            Box::new(v_solve),
            Box::new(u_jac),
            Box::new(v_jac),
        )
    }

    /// High-accuracy primal solution via a long ADMM run.
    pub fn oracle_solution(
        &self,
        alpha: f64,
        tol: f64,
        max_iters: usize,
    ) -> Result<DVector<f64>, ScenarioError> {
        let spec = self.admm_spec(alpha);
        let theta = self.theta_vector();
        let mut state = crate::solvers::AdmmState::zero(&spec);
        let mut prev_u = state.u.clone();
        for _ in 0..max_iters {
            state = crate::solvers::admm_step(&spec, &state, &theta);
            let diff = (&state.u - &prev_u).norm();
            let residual = state.residual(&spec).norm();
            if diff <= tol && residual <= tol.max(1e-12) {
                return Ok(state.u);
            }
            prev_u = state.u.clone();
        }
        Err(ScenarioError::OracleSolve { tol, max_iters })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{admm_as_dual_dr, admm_run, dual_dr_to_admm, AdmmState};

    #[test]
    fn second_difference_rows() {
        let d = second_difference_matrix(5);
        assert_eq!(d.shape(), (3, 5));
        assert_eq!(d[(0, 0)], 1.0);
        assert_eq!(d[(0, 1)], -2.0);
        assert_eq!(d[(0, 2)], 1.0);
        assert_eq!(d[(1, 0)], 0.0);
    }

    #[test]
    fn zero_lambda_returns_observations() {
        let instance = TrendInstance {
            observations: DVector::from_vec(vec![0.3, -1.0, 2.0, 0.1, 0.7]),
            lambda: 0.0,
            seed: 0,
        };
        let x = instance.oracle_solution(0.5, 1e-12, 50_000).unwrap();
        assert!((x - &instance.observations).norm() < 1e-10);
    }

    #[test]
    fn huge_lambda_projects_on_affine_fits() {
        let observations = DVector::from_vec(vec![1.0, -0.5, 0.3, 2.0]);
        let instance = TrendInstance {
            observations: observations.clone(),
            lambda: 1e6,
            seed: 0,
        };
        let x = instance.oracle_solution(0.5, 1e-12, 200_000).unwrap();
        // Projection of the observations onto span{1, (1, 2, 3, 4)}.
        let basis = DMatrix::from_columns(&[
            DVector::from_element(4, 1.0),
            DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
        ]);
        let coef = (basis.tr_mul(&basis))
            .lu()
            .solve(&basis.tr_mul(&observations))
            .unwrap();
        let projected = basis * coef;
        assert!((x - projected).norm() < 1e-6);
    }

    #[test]
    fn admm_equals_mapped_dual_dr() {
        let instance = make_trend_filter(12, 1.5, 4).unwrap();
        let spec = instance.admm_spec(0.7);
        let theta = instance.theta_vector();
        let init = AdmmState::zero(&spec);
        let admm_states = admm_run(&spec, init.clone(), &theta, 50);

        let dr = admm_as_dual_dr(&spec, &init);
        let ys = crate::engine::run_iterates(&dr, &theta, 50).unwrap();
        for k in 1..=50 {
            let mapped = dual_dr_to_admm(&spec, &theta, &ys[k - 1], &ys[k]);
            let du = (&mapped.u - &admm_states[k].u).norm();
            let dv = (&mapped.v - &admm_states[k].v).norm();
            let dx = (&mapped.x - &admm_states[k].x).norm();
            assert!(du < 1e-10 && dv < 1e-10 && dx < 1e-10, "k = {k}: {du} {dv} {dx}");
        }
    }

    #[test]
    fn dual_dr_factors_match_finite_differences() {
        let instance = make_trend_filter(10, 0.8, 6).unwrap();
        let spec = instance.admm_spec(0.6);
        let theta = instance.theta_vector();
        let init = AdmmState::zero(&spec);
        let dr = admm_as_dual_dr(&spec, &init);
        let ys = crate::engine::run_iterates(&dr, &theta, 25).unwrap();
        let y = ys.last().unwrap();
        let factors = crate::engine::FixedPointProblem::step_jacobians(&dr, y, &theta);
        assert_eq!(factors.len(), 1);
        let element = factors[0].to_element(8, 10);
        let h = 1e-6;
        let mut rng = SplitMix64::new(2);
        let dir = DVector::from_fn(8, |_, _| rng.next_gaussian());
        let step =
            |yy: &DVector<f64>, tt: &DVector<f64>| crate::engine::FixedPointProblem::step(&dr, yy, tt);
        let fd_a = (step(&(y + &dir * h), &theta) - step(&(y - &dir * h), &theta)) / (2.0 * h);
        assert!((&element.a * &dir - fd_a).norm() < 1e-6);
        let tdir = DVector::from_fn(10, |_, _| rng.next_gaussian());
        let fd_b = (step(y, &(&theta + &tdir * h)) - step(y, &(&theta - &tdir * h))) / (2.0 * h);
        assert!((&element.b * &tdir - fd_b).norm() < 1e-6);
    }

    #[test]
    fn constraint_residual_decreases() {
        let instance = make_trend_filter(15, 2.0, 8).unwrap();
        let spec = instance.admm_spec(0.7);
        let theta = instance.theta_vector();
        let states = admm_run(&spec, AdmmState::zero(&spec), &theta, 400);
        let early = states[3].residual(&spec).norm();
        let late = states[400].residual(&spec).norm();
        assert!(late < early * 1e-3, "early {early}, late {late}");
    }

    #[test]
    fn generation_reproducible() {
        let a = make_trend_filter(9, 3.0, 123).unwrap();
        let b = make_trend_filter(9, 3.0, 123).unwrap();
        assert_eq!(a.observations, b.observations);
    }
}
