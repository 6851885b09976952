//! ADMM for `min phi(u) + psi(v)  s.t.  A u + B v = c`, and its exact
//! reformulation as Douglas-Rachford on the dual problem
//! `min_x c^T x + phi*(-A^T x) + psi*(-B^T x)`.
//!
//! Both algorithms are driven by the same two tilted argmin oracles:
//!
//! - `U(s) = argmin_u phi(u) + s^T (A u - c) + alpha/2 |A u - c|^2`
//! - `V(t) = argmin_v psi(v) + t^T  B v      + alpha/2 |B v|^2`
//!
//! which give `prox_{alpha f}(s) = s + alpha (A U(s) - c)` for the
//! `phi`-part of the dual and `prox_{alpha g}(w) = w + alpha B V(w)` for the
//! `psi`-part. The ADMM updates are the same oracles evaluated at
//! `s = x + alpha B v` and `t = x + alpha (A u' - c)`; the Douglas-Rachford
//! shadow variable corresponds to `y = x - alpha B v`.

use nalgebra::{DMatrix, DVector};

use super::douglas_rachford::DouglasRachford;
use super::ProxOracle;
use crate::sets::JacobianElement;

/// Derivative of a tilted argmin: `d_input` with respect to the tilt point
/// and `d_theta` with respect to the parameter. Not square in general.
#[derive(Debug, Clone)]
pub struct ArgminJacobian {
    pub d_input: DMatrix<f64>,
    pub d_theta: DMatrix<f64>,
}

type Solve = Box<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type SolveJacobians = Box<dyn Fn(&DVector<f64>, &DVector<f64>) -> Vec<ArgminJacobian> + Send + Sync>;

pub struct AdmmSpec {
    pub a_mat: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub c_vec: DVector<f64>,
    pub alpha: f64,
    pub param_dim: usize,
    u_solve: Solve,
    v_solve: Solve,
    u_jacobians: SolveJacobians,
    v_jacobians: SolveJacobians,
}

impl AdmmSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_mat: DMatrix<f64>,
        b_mat: DMatrix<f64>,
        c_vec: DVector<f64>,
        alpha: f64,
        param_dim: usize,
        u_solve: Solve,
        v_solve: Solve,
        u_jacobians: SolveJacobians,
        v_jacobians: SolveJacobians,
    ) -> Self {
        assert!(alpha > 0.0, "ADMM penalty must be positive");
        assert_eq!(a_mat.nrows(), b_mat.nrows());
        assert_eq!(a_mat.nrows(), c_vec.len());
        AdmmSpec {
            a_mat,
            b_mat,
            c_vec,
            alpha,
            param_dim,
            u_solve,
            v_solve,
            u_jacobians,
            v_jacobians,
        }
    }

    /// Dimension of the dual variable (rows of the constraint).
    pub fn dual_dim(&self) -> usize {
        self.c_vec.len()
    }

    pub fn solve_u(&self, s: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        (self.u_solve)(s, theta)
    }

    pub fn solve_v(&self, t: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        (self.v_solve)(t, theta)
    }
}

/// Three-block ADMM state: primal blocks `u`, `v` and the scaled multiplier
/// `x`.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub x: DVector<f64>,
}

impl AdmmState {
    /// Canonical zero start.
    pub fn zero(spec: &AdmmSpec) -> Self {
        AdmmState {
            u: DVector::zeros(spec.a_mat.ncols()),
            v: DVector::zeros(spec.b_mat.ncols()),
            x: DVector::zeros(spec.dual_dim()),
        }
    }

    /// Constraint residual `A u + B v - c`.
    pub fn residual(&self, spec: &AdmmSpec) -> DVector<f64> {
        &spec.a_mat * &self.u + &spec.b_mat * &self.v - &spec.c_vec
    }
}

/// One three-block update: partial minimization in `u`, then in `v`, then
/// the multiplier ascent `x + alpha (A u' + B v' - c)`.
pub fn admm_step(spec: &AdmmSpec, state: &AdmmState, theta: &DVector<f64>) -> AdmmState {
    let s = &state.x + &spec.b_mat * &state.v * spec.alpha;
    let u = spec.solve_u(&s, theta);
    let t = &state.x + (&spec.a_mat * &u - &spec.c_vec) * spec.alpha;
    let v = spec.solve_v(&t, theta);
    let x = &state.x + (&spec.a_mat * &u + &spec.b_mat * &v - &spec.c_vec) * spec.alpha;
    AdmmState { u, v, x }
}

/// `iters` ADMM steps from `init`, returning every state including the
/// initial one.
pub fn admm_run(
    spec: &AdmmSpec,
    init: AdmmState,
    theta: &DVector<f64>,
    iters: usize,
) -> Vec<AdmmState> {
    let mut out = Vec::with_capacity(iters + 1);
    out.push(init);
    for _ in 0..iters {
        let next = admm_step(spec, out.last().unwrap(), theta);
        out.push(next);
    }
    out
}

/// prox of the dual `phi`-part `f(x) = c^T x + phi*(-A^T x)`, realized
/// through the tilted `u`-argmin.
pub struct DualProxF<'a> {
    spec: &'a AdmmSpec,
}

impl ProxOracle for DualProxF<'_> {
    fn eval(&self, s: &DVector<f64>, alpha: f64, theta: &DVector<f64>) -> DVector<f64> {
        debug_assert!((alpha - self.spec.alpha).abs() < 1e-15);
        let u = self.spec.solve_u(s, theta);
        s + (&self.spec.a_mat * u - &self.spec.c_vec) * self.spec.alpha
    }

    fn jacobians(
        &self,
        s: &DVector<f64>,
        alpha: f64,
        theta: &DVector<f64>,
    ) -> Vec<JacobianElement> {
        debug_assert!((alpha - self.spec.alpha).abs() < 1e-15);
        let d = self.spec.dual_dim();
        let eye = DMatrix::identity(d, d);
        (self.spec.u_jacobians)(s, theta)
            .into_iter()
            .map(|j| {
                JacobianElement::new(
                    &eye + &self.spec.a_mat * &j.d_input * self.spec.alpha,
                    &self.spec.a_mat * &j.d_theta * self.spec.alpha,
                )
            })
            .collect()
    }

    fn strong_convexity(&self) -> f64 {
        // Certified numerically by the caller; the dual phi-part is strongly
        // convex exactly when phi is smooth and A has full row rank.
        0.0
    }
}

/// prox of the dual `psi`-part `g(x) = psi*(-B^T x)`, realized through the
/// tilted `v`-argmin.
pub struct DualProxG<'a> {
    spec: &'a AdmmSpec,
}

impl ProxOracle for DualProxG<'_> {
    fn eval(&self, w: &DVector<f64>, alpha: f64, theta: &DVector<f64>) -> DVector<f64> {
        debug_assert!((alpha - self.spec.alpha).abs() < 1e-15);
        let v = self.spec.solve_v(w, theta);
        w + &self.spec.b_mat * v * self.spec.alpha
    }

    fn jacobians(
        &self,
        w: &DVector<f64>,
        alpha: f64,
        theta: &DVector<f64>,
    ) -> Vec<JacobianElement> {
        debug_assert!((alpha - self.spec.alpha).abs() < 1e-15);
        let d = self.spec.dual_dim();
        let eye = DMatrix::identity(d, d);
        (self.spec.v_jacobians)(w, theta)
            .into_iter()
            .map(|j| {
                JacobianElement::new(
                    &eye + &self.spec.b_mat * &j.d_input * self.spec.alpha,
                    &self.spec.b_mat * &j.d_theta * self.spec.alpha,
                )
            })
            .collect()
    }
}

/// Douglas-Rachford on the dual problem, as a differentiable fixed-point
/// problem on the shadow variable `y`.
///
/// The initial shadow `y_0 = x_0 - alpha B v_0` mirrors an ADMM start
/// `(v_0, x_0)`; the mapped trajectories coincide when the start is
/// compatible (`prox_{alpha g}(y_0) = x_0`), which the canonical zero start
/// satisfies.
pub fn admm_as_dual_dr<'a>(
    spec: &'a AdmmSpec,
    init: &AdmmState,
) -> DouglasRachford<DualProxF<'a>, DualProxG<'a>> {
    let y0 = &init.x - &spec.b_mat * &init.v * spec.alpha;
    DouglasRachford::new(
        DualProxF { spec },
        DualProxG { spec },
        spec.alpha,
        y0,
        spec.param_dim,
    )
    .expect("alpha > 0 checked at spec construction")
}

/// Recover the ADMM triplet matching shadow iterate `y_k`, given the
/// previous shadow `y_{k-1}`: `u_k` re-solves the tilted argmin at the
/// reflected point, `v_k = V(y_k)` and `x_k = prox_{alpha g}(y_k)`.
pub fn dual_dr_to_admm(
    spec: &AdmmSpec,
    theta: &DVector<f64>,
    y_prev: &DVector<f64>,
    y: &DVector<f64>,
) -> AdmmState {
    let x_prev = y_prev + &spec.b_mat * spec.solve_v(y_prev, theta) * spec.alpha;
    let s_prev = &x_prev * 2.0 - y_prev;
    let u = spec.solve_u(&s_prev, theta);
    let v = spec.solve_v(y, theta);
    let x = y + &spec.b_mat * &v * spec.alpha;
    AdmmState { u, v, x }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_iterates, FixedPointProblem};

    /// Scalar instance: phi(u) = (u - theta)^2 / 2, psi = 0, constraint
    /// a u + b v = c0.
    fn scalar_spec(a: f64, b: f64, c0: f64, alpha: f64) -> AdmmSpec {
        let u_solve = move |s: &DVector<f64>, theta: &DVector<f64>| {
            DVector::from_vec(vec![
                (theta[0] - s[0] * a + alpha * a * c0) / (1.0 + alpha * a * a),
            ])
        };
        let v_solve = move |t: &DVector<f64>, _theta: &DVector<f64>| {
            DVector::from_vec(vec![-t[0] / (alpha * b)])
        };
        let u_jacobians = move |_s: &DVector<f64>, _t: &DVector<f64>| {
            vec![ArgminJacobian {
                d_input: DMatrix::from_element(1, 1, -a / (1.0 + alpha * a * a)),
                d_theta: DMatrix::from_element(1, 1, 1.0 / (1.0 + alpha * a * a)),
            }]
        };
        let v_jacobians = move |_t: &DVector<f64>, _: &DVector<f64>| {
            vec![ArgminJacobian {
                d_input: DMatrix::from_element(1, 1, -1.0 / (alpha * b)),
                d_theta: DMatrix::from_element(1, 1, 0.0),
            }]
        };
        AdmmSpec::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DVector::from_vec(vec![c0]),
            alpha,
            1,
            Box::new(u_solve),
            Box::new(v_solve),
            Box::new(u_jacobians),
            Box::new(v_jacobians),
        )
    }

    #[test]
    fn feasible_optimal_start_keeps_multiplier() {
        // phi(u) = (u - theta)^2 / 2, psi = 0, u + v = 0. The minimizer is
        // u = theta, v = -theta, with multiplier x = 0.
        let spec = scalar_spec(1.0, 1.0, 0.0, 0.7);
        let theta = DVector::from_vec(vec![2.0]);
        let state = AdmmState {
            u: DVector::from_vec(vec![2.0]),
            v: DVector::from_vec(vec![-2.0]),
            x: DVector::zeros(1),
        };
        let next = admm_step(&spec, &state, &theta);
        assert!(next.residual(&spec).norm() < 1e-12);
        assert!((next.x[0] - 0.0).abs() < 1e-12);
        assert!((next.u[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_admm_and_dual_dr_coincide() {
        let spec = scalar_spec(1.0, 1.0, 0.5, 0.9);
        let theta = DVector::from_vec(vec![-1.3]);
        let init = AdmmState::zero(&spec);
        let admm_states = admm_run(&spec, init.clone(), &theta, 30);

        let dr = admm_as_dual_dr(&spec, &init);
        let ys = run_iterates(&dr, &theta, 30).unwrap();
        for k in 1..=30 {
            let mapped = dual_dr_to_admm(&spec, &theta, &ys[k - 1], &ys[k]);
            assert!(
                (mapped.u[0] - admm_states[k].u[0]).abs() < 1e-12,
                "u mismatch at {k}"
            );
            assert!(
                (mapped.v[0] - admm_states[k].v[0]).abs() < 1e-12,
                "v mismatch at {k}"
            );
            assert!(
                (mapped.x[0] - admm_states[k].x[0]).abs() < 1e-12,
                "x mismatch at {k}"
            );
        }
    }

    #[test]
    fn mapped_initial_states_equal() {
        let spec = scalar_spec(2.0, 1.0, 0.0, 0.5);
        let init = AdmmState::zero(&spec);
        let dr = admm_as_dual_dr(&spec, &init);
        let theta = DVector::from_vec(vec![0.4]);
        let y0 = dr.init(&theta).x0;
        // y_0 = x_0 - alpha B v_0 = 0, and prox_g(y_0) recovers x_0 = 0.
        assert_eq!(y0[0], 0.0);
        let g = DualProxG { spec: &spec };
        assert!(g.eval(&y0, spec.alpha, &theta).norm() < 1e-15);
    }

    #[test]
    fn scalar_instance_converges_to_minimizer() {
        // With psi = 0 the v-block absorbs the constraint exactly, so the
        // residual vanishes after one step and u converges to the
        // unconstrained minimizer of phi, which is theta.
        let spec = scalar_spec(1.0, 1.0, 0.5, 0.9);
        let theta = DVector::from_vec(vec![1.0]);
        let states = admm_run(&spec, AdmmState::zero(&spec), &theta, 60);
        assert!(states[2].residual(&spec).norm() < 1e-14);
        assert!((states[60].u[0] - theta[0]).abs() < 1e-10);
    }
}
