//! Derivative propagation along a fixed-point iteration.
//!
//! The forward pass of any [`FixedPointProblem`] produces, at every iterate,
//! a finite list of candidate derivative factors `[A | B]`. The engine
//! propagates one of four carries alongside the iterates:
//!
//! - `jvp`: a tangent `xdot_{i+1} = A_i xdot_i + B_i thetadot`,
//! - `vjp`: a tape of selected factors, accumulated backwards,
//! - `full_jacobian`: the full recursion `J_{i+1} = A_i J_i + B_i`,
//! - `packet`: the whole set recursion `X_{i+1} = { A J + B }`.
//!
//! The same selection policy drives forward and reverse modes, which makes
//! the JVP/VJP duality `<w, JVP(td)> = <VJP(w), td>` hold up to rounding.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::sets::{apply_elements, JacobianElement, MatrixPacket, MatrixSet, SetError};

/// Norm guard: carries beyond this magnitude are reported as blow-ups
/// instead of propagating to NaN.
pub const OVERFLOW_GUARD: f64 = 1e12;

/// Cardinality cap for packet-mode propagation.
pub const PACKET_CARDINALITY_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error("divergence: non-finite iterate at step {step}")]
    Divergence { step: usize },
    #[error("tangent blow-up at step {step}: carry norm {norm} exceeds guard")]
    TangentBlowUp { step: usize, norm: f64 },
    #[error("set explosion at step {step}")]
    SetExplosion { step: usize },
    #[error("implicit differentiation inapplicable: I - A singular or near-singular (condition {condition:e})")]
    ImplicitSingular { condition: f64 },
    #[error("problem returned an empty factor list at step {step}")]
    EmptyFactors { step: usize },
    #[error(transparent)]
    Set(#[from] SetError),
}

/// Matrix-free derivative factor for problems whose state is too structured
/// to materialize (for example spectral maps on matrix variables).
pub trait LinearFactor: Send + Sync {
    fn apply_a(&self, v: &DVector<f64>) -> DVector<f64>;
    fn apply_a_transpose(&self, v: &DVector<f64>) -> DVector<f64>;
    fn apply_b(&self, theta_dot: &DVector<f64>) -> DVector<f64>;
    fn apply_b_transpose(&self, w: &DVector<f64>) -> DVector<f64>;
}

/// One derivative factor `[A | B]` of a step map, either dense or as a pair
/// of linear operators.
pub enum StepJacobian {
    Dense(JacobianElement),
    Operator(Box<dyn LinearFactor>),
}

impl StepJacobian {
    pub fn apply_a(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            StepJacobian::Dense(e) => &e.a * v,
            StepJacobian::Operator(op) => op.apply_a(v),
        }
    }

    pub fn apply_a_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            StepJacobian::Dense(e) => e.a.tr_mul(v),
            StepJacobian::Operator(op) => op.apply_a_transpose(v),
        }
    }

    pub fn apply_b(&self, theta_dot: &DVector<f64>) -> DVector<f64> {
        match self {
            StepJacobian::Dense(e) => &e.b * theta_dot,
            StepJacobian::Operator(op) => op.apply_b(theta_dot),
        }
    }

    pub fn apply_b_transpose(&self, w: &DVector<f64>) -> DVector<f64> {
        match self {
            StepJacobian::Dense(e) => e.b.tr_mul(w),
            StepJacobian::Operator(op) => op.apply_b_transpose(w),
        }
    }

    /// Dense `[A | B]`, materializing operators column by column.
    pub fn to_element(&self, p: usize, m: usize) -> JacobianElement {
        match self {
            StepJacobian::Dense(e) => e.clone(),
            StepJacobian::Operator(op) => {
                let mut a = DMatrix::zeros(p, p);
                for j in 0..p {
                    let e = DVector::from_fn(p, |i, _| if i == j { 1.0 } else { 0.0 });
                    a.set_column(j, &op.apply_a(&e));
                }
                let mut b = DMatrix::zeros(p, m);
                for j in 0..m {
                    let e = DVector::from_fn(m, |i, _| if i == j { 1.0 } else { 0.0 });
                    b.set_column(j, &op.apply_b(&e));
                }
                JacobianElement::new(a, b)
            }
        }
    }
}

/// Derivative of the initialization map `theta -> x_0(theta)`.
#[derive(Debug, Clone)]
pub enum InitJacobian {
    /// Initialization independent of theta.
    Zero,
    /// Dense `p x m` Jacobian of the initialization.
    Dense(DMatrix<f64>),
}

impl InitJacobian {
    fn to_matrix(&self, p: usize, m: usize) -> DMatrix<f64> {
        match self {
            InitJacobian::Zero => DMatrix::zeros(p, m),
            InitJacobian::Dense(j) => j.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Initializer {
    pub x0: DVector<f64>,
    pub jacobian: InitJacobian,
}

/// A parametric iteration map `x_{k+1} = F(x_k, theta)` bundled with its
/// derivative-packet oracle and a deterministic branch-selection policy.
pub trait FixedPointProblem: Sync {
    /// `(p, m)`: state and parameter dimensions.
    fn dims(&self) -> (usize, usize);

    /// Initial iterate and the Jacobian of the initialization map.
    fn init(&self, theta: &DVector<f64>) -> Initializer;

    /// One application of the iteration map.
    fn step(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64>;

    /// All derivative factors `[A | B]` available at `(x, theta)`, in a
    /// deterministic order (smallest branch indices first).
    fn step_jacobians(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Vec<StepJacobian>;

    /// Pick one factor for single-valued propagation. The same policy drives
    /// forward and reverse modes. Defaults to the first factor.
    fn select(&self, _k: usize, _num_factors: usize) -> usize {
        0
    }
}

/// Carry of a single-trajectory propagation.
#[derive(Debug)]
pub enum Carry {
    Tangent(DVector<f64>),
    FullJacobian(DMatrix<f64>),
    Packet(MatrixSet),
}

/// Iterate plus derivative carry, advanced in lock step.
#[derive(Debug)]
pub struct PropagationState {
    pub x: DVector<f64>,
    pub k: usize,
    pub carry: Carry,
}

fn check_finite(x: &DVector<f64>, step: usize) -> Result<(), PropagationError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(PropagationError::Divergence { step })
    }
}

fn selected_factor(
    prob: &dyn FixedPointProblem,
    x: &DVector<f64>,
    theta: &DVector<f64>,
    k: usize,
) -> Result<StepJacobian, PropagationError> {
    let mut factors = prob.step_jacobians(x, theta);
    if factors.is_empty() {
        return Err(PropagationError::EmptyFactors { step: k });
    }
    let idx = prob.select(k, factors.len()).min(factors.len() - 1);
    Ok(factors.swap_remove(idx))
}

/// `x_0, F(x_0), ..., F^k(x_0)`; errors on non-finite iterates.
pub fn run_iterates(
    prob: &dyn FixedPointProblem,
    theta: &DVector<f64>,
    k: usize,
) -> Result<Vec<DVector<f64>>, PropagationError> {
    let mut out = Vec::with_capacity(k + 1);
    let mut x = prob.init(theta).x0;
    check_finite(&x, 0)?;
    out.push(x.clone());
    for i in 0..k {
        x = prob.step(&x, theta);
        check_finite(&x, i + 1)?;
        out.push(x.clone());
    }
    Ok(out)
}

/// Outcome of a forward tangent propagation: all tangents up to `k` or up to
/// the first blow-up, whichever comes first.
#[derive(Debug)]
pub struct ForwardRun {
    pub iterates: Vec<DVector<f64>>,
    pub tangents: Vec<DVector<f64>>,
    pub blow_up: Option<usize>,
}

/// Forward-mode propagation of the tangent `xdot` along the iteration,
/// recording every intermediate tangent. Iterate divergence is an error;
/// tangent blow-up is reported in the result so callers can inspect the
/// recorded growth.
pub fn jvp_sequence(
    prob: &dyn FixedPointProblem,
    theta: &DVector<f64>,
    theta_dot: &DVector<f64>,
    k: usize,
) -> Result<ForwardRun, PropagationError> {
    let (p, m) = prob.dims();
    let init = prob.init(theta);
    let mut x = init.x0;
    check_finite(&x, 0)?;
    let mut xdot = init.jacobian.to_matrix(p, m) * theta_dot;
    let mut iterates = vec![x.clone()];
    let mut tangents = vec![xdot.clone()];
    for i in 0..k {
        let factor = selected_factor(prob, &x, theta, i)?;
        xdot = factor.apply_a(&xdot) + factor.apply_b(theta_dot);
        x = prob.step(&x, theta);
        check_finite(&x, i + 1)?;
        iterates.push(x.clone());
        tangents.push(xdot.clone());
        if xdot.norm() > OVERFLOW_GUARD {
            return Ok(ForwardRun {
                iterates,
                tangents,
                blow_up: Some(i + 1),
            });
        }
    }
    Ok(ForwardRun {
        iterates,
        tangents,
        blow_up: None,
    })
}

/// Forward mode: returns the final tangent `xdot_k`.
pub fn jvp_forward(
    prob: &dyn FixedPointProblem,
    theta: &DVector<f64>,
    theta_dot: &DVector<f64>,
    k: usize,
) -> Result<DVector<f64>, PropagationError> {
    let run = jvp_sequence(prob, theta, theta_dot, k)?;
    if let Some(step) = run.blow_up {
        return Err(PropagationError::TangentBlowUp {
            step,
            norm: run.tangents.last().map(|t| t.norm()).unwrap_or(f64::NAN),
        });
    }
    Ok(run.tangents.into_iter().last().expect("k + 1 tangents"))
}

/// Reverse mode: records the selected factors on the forward pass, then
/// accumulates `thetabar = sum B_i^T wbar_{i+1} + J_0^T wbar_0` backwards.
pub fn vjp_reverse(
    prob: &dyn FixedPointProblem,
    theta: &DVector<f64>,
    w_bar: &DVector<f64>,
    k: usize,
) -> Result<DVector<f64>, PropagationError> {
    let (p, m) = prob.dims();
    let init = prob.init(theta);
    let mut x = init.x0;
    check_finite(&x, 0)?;
    let mut tape: Vec<StepJacobian> = Vec::with_capacity(k);
    for i in 0..k {
        tape.push(selected_factor(prob, &x, theta, i)?);
        x = prob.step(&x, theta);
        check_finite(&x, i + 1)?;
    }
    let mut w = w_bar.clone();
    let mut theta_bar = DVector::zeros(m);
    for (i, factor) in tape.iter().enumerate().rev() {
        theta_bar += factor.apply_b_transpose(&w);
        w = factor.apply_a_transpose(&w);
        let norm = w.norm().max(theta_bar.norm());
        if norm > OVERFLOW_GUARD {
            return Err(PropagationError::TangentBlowUp { step: i, norm });
        }
    }
    theta_bar += init.jacobian.to_matrix(p, m).tr_mul(&w);
    Ok(theta_bar)
}

/// Full-Jacobian recursion `J_{i+1} = A_i J_i + B_i` with one selected
/// factor per step; returns all intermediate Jacobians.
pub fn full_jacobian_sequence(
    prob: &dyn FixedPointProblem,
    theta: &DVector<f64>,
    k: usize,
) -> Result<Vec<DMatrix<f64>>, PropagationError> {
    let (p, m) = prob.dims();
    let init = prob.init(theta);
    let mut x = init.x0;
    check_finite(&x, 0)?;
    let mut jac = init.jacobian.to_matrix(p, m);
    let mut out = vec![jac.clone()];
    for i in 0..k {
        let factor = selected_factor(prob, &x, theta, i)?;
        let element = factor.to_element(p, m);
        jac = &element.a * &jac + &element.b;
        if jac.norm() > OVERFLOW_GUARD {
            return Err(PropagationError::TangentBlowUp {
                step: i + 1,
                norm: jac.norm(),
            });
        }
        x = prob.step(&x, theta);
        check_finite(&x, i + 1)?;
        out.push(jac.clone());
    }
    Ok(out)
}

/// Set-valued recursion: `X_{i+1}` is the image of `X_i` under all factors
/// at the current iterate, pruned at `prune_tol`.
pub fn packet_sequence(
    prob: &dyn FixedPointProblem,
    theta: &DVector<f64>,
    k: usize,
    prune_tol: f64,
) -> Result<Vec<MatrixSet>, PropagationError> {
    assert!(prune_tol > 0.0, "packet propagation needs a merge radius");
    let (p, m) = prob.dims();
    let init = prob.init(theta);
    let mut x = init.x0;
    check_finite(&x, 0)?;
    let mut set = MatrixSet::new(vec![init.jacobian.to_matrix(p, m)], prune_tol)
        .expect("singleton seed");
    let mut out = vec![set.clone()];
    for i in 0..k {
        let factors = prob.step_jacobians(&x, theta);
        if factors.is_empty() {
            return Err(PropagationError::EmptyFactors { step: i });
        }
        let elements: Vec<JacobianElement> =
            factors.iter().map(|f| f.to_element(p, m)).collect();
        set = apply_elements(&elements, &set, prune_tol, PACKET_CARDINALITY_CAP)
            .map_err(|e| match e {
                SetError::SetExplosion { .. } => PropagationError::SetExplosion { step: i + 1 },
                other => PropagationError::Set(other),
            })?;
        x = prob.step(&x, theta);
        check_finite(&x, i + 1)?;
        out.push(set.clone());
    }
    Ok(out)
}

/// Implicit differentiation at the fixed point: `{ (I - A)^{-1} B }` over the
/// packet, guarded against near-singular `I - A`.
pub fn implicit_jacobian(packet: &MatrixPacket) -> Result<MatrixSet, PropagationError> {
    let (p, _) = packet.dims();
    let mut points = Vec::with_capacity(packet.elements().len());
    for element in packet.elements() {
        let system = DMatrix::identity(p, p) - &element.a;
        let svd = system.clone().svd(false, false);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !condition.is_finite() || condition > 1e12 {
            return Err(PropagationError::ImplicitSingular { condition });
        }
        let solved = system
            .lu()
            .solve(&element.b)
            .ok_or(PropagationError::ImplicitSingular { condition })?;
        points.push(solved);
    }
    MatrixSet::new(points, 0.0).map_err(PropagationError::Set)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar model F(x, theta) = a x + theta.
    struct ScalarModel {
        a: f64,
    }

    impl FixedPointProblem for ScalarModel {
        fn dims(&self) -> (usize, usize) {
            (1, 1)
        }
        fn init(&self, _theta: &DVector<f64>) -> Initializer {
            Initializer {
                x0: DVector::zeros(1),
                jacobian: InitJacobian::Zero,
            }
        }
        fn step(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
            x * self.a + theta
        }
        fn step_jacobians(&self, _x: &DVector<f64>, _theta: &DVector<f64>) -> Vec<StepJacobian> {
            vec![StepJacobian::Dense(JacobianElement::new(
                DMatrix::from_element(1, 1, self.a),
                DMatrix::from_element(1, 1, 1.0),
            ))]
        }
    }

    #[test]
    fn scalar_iterates_converge() {
        let prob = ScalarModel { a: 0.5 };
        let theta = DVector::from_vec(vec![1.0]);
        let iterates = run_iterates(&prob, &theta, 10).unwrap();
        assert_eq!(iterates[0][0], 0.0);
        assert_eq!(iterates[1][0], 1.0);
        assert_eq!(iterates[2][0], 1.5);
        assert!((iterates[10][0] - 2.0).abs() < 1e-2);
    }

    #[test]
    fn constant_sequence_from_fixed_point() {
        struct AtFix;
        impl FixedPointProblem for AtFix {
            fn dims(&self) -> (usize, usize) {
                (1, 1)
            }
            fn init(&self, theta: &DVector<f64>) -> Initializer {
                Initializer {
                    x0: DVector::from_vec(vec![2.0 * theta[0]]),
                    jacobian: InitJacobian::Dense(DMatrix::from_element(1, 1, 2.0)),
                }
            }
            fn step(&self, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
                x * 0.5 + theta
            }
            fn step_jacobians(&self, _: &DVector<f64>, _: &DVector<f64>) -> Vec<StepJacobian> {
                vec![StepJacobian::Dense(JacobianElement::new(
                    DMatrix::from_element(1, 1, 0.5),
                    DMatrix::from_element(1, 1, 1.0),
                ))]
            }
        }
        let theta = DVector::from_vec(vec![1.0]);
        let iterates = run_iterates(&AtFix, &theta, 5).unwrap();
        for x in iterates {
            assert!((x[0] - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn jvp_scalar_limit() {
        let prob = ScalarModel { a: 0.5 };
        let theta = DVector::from_vec(vec![1.0]);
        let td = DVector::from_vec(vec![1.0]);
        let xdot = jvp_forward(&prob, &theta, &td, 60).unwrap();
        assert!((xdot[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn vjp_scalar_limit() {
        let prob = ScalarModel { a: 0.5 };
        let theta = DVector::from_vec(vec![1.0]);
        let wb = DVector::from_vec(vec![1.0]);
        let tb = vjp_reverse(&prob, &theta, &wb, 60).unwrap();
        assert!((tb[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn full_jacobian_scalar_limit() {
        let prob = ScalarModel { a: 0.5 };
        let theta = DVector::from_vec(vec![1.0]);
        let jacs = full_jacobian_sequence(&prob, &theta, 60).unwrap();
        assert!((jacs.last().unwrap()[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn vjp_equals_transposed_full_jacobian() {
        let prob = ScalarModel { a: 0.7 };
        let theta = DVector::from_vec(vec![0.3]);
        let k = 25;
        let jac = full_jacobian_sequence(&prob, &theta, k).unwrap().pop().unwrap();
        let wb = DVector::from_vec(vec![1.3]);
        let tb = vjp_reverse(&prob, &theta, &wb, k).unwrap();
        let expected = jac.tr_mul(&wb);
        assert!((tb - expected).norm() < 1e-12);
    }

    #[test]
    fn packet_sequence_smooth_model_is_singleton() {
        let prob = ScalarModel { a: 0.5 };
        let theta = DVector::from_vec(vec![1.0]);
        let sets = packet_sequence(&prob, &theta, 40, 1e-9).unwrap();
        for set in &sets {
            assert_eq!(set.len(), 1);
        }
        let jacs = full_jacobian_sequence(&prob, &theta, 40).unwrap();
        for (set, jac) in sets.iter().zip(&jacs) {
            assert!((set.points()[0].clone() - jac).norm() < 1e-14);
        }
    }

    #[test]
    fn implicit_jacobian_scalar() {
        let packet = MatrixPacket::with_measured_rho(vec![JacobianElement::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
        )])
        .unwrap();
        let set = implicit_jacobian(&packet).unwrap();
        assert_eq!(set.len(), 1);
        assert!((set.points()[0][(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn divergence_detected() {
        struct Exploding;
        impl FixedPointProblem for Exploding {
            fn dims(&self) -> (usize, usize) {
                (1, 1)
            }
            fn init(&self, _: &DVector<f64>) -> Initializer {
                Initializer {
                    x0: DVector::from_vec(vec![1.0]),
                    jacobian: InitJacobian::Zero,
                }
            }
            fn step(&self, x: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
                x * f64::INFINITY
            }
            fn step_jacobians(&self, _: &DVector<f64>, _: &DVector<f64>) -> Vec<StepJacobian> {
                vec![StepJacobian::Dense(JacobianElement::new(
                    DMatrix::from_element(1, 1, 0.0),
                    DMatrix::from_element(1, 1, 0.0),
                ))]
            }
        }
        let theta = DVector::from_vec(vec![0.0]);
        assert!(matches!(
            run_iterates(&Exploding, &theta, 3),
            Err(PropagationError::Divergence { .. })
        ));
    }

    #[test]
    fn tangent_blow_up_reported() {
        struct Doubling;
        impl FixedPointProblem for Doubling {
            fn dims(&self) -> (usize, usize) {
                (1, 1)
            }
            fn init(&self, _: &DVector<f64>) -> Initializer {
                Initializer {
                    x0: DVector::zeros(1),
                    jacobian: InitJacobian::Dense(DMatrix::from_element(1, 1, 1.0)),
                }
            }
            fn step(&self, x: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
                x.clone()
            }
            fn step_jacobians(&self, _: &DVector<f64>, _: &DVector<f64>) -> Vec<StepJacobian> {
                vec![StepJacobian::Dense(JacobianElement::new(
                    DMatrix::from_element(1, 1, 2.0),
                    DMatrix::from_element(1, 1, 0.0),
                ))]
            }
        }
        let theta = DVector::from_vec(vec![0.0]);
        let td = DVector::from_vec(vec![1.0]);
        let run = jvp_sequence(&Doubling, &theta, &td, 100).unwrap();
        assert!(run.blow_up.is_some());
        assert!(matches!(
            jvp_forward(&Doubling, &theta, &td, 100),
            Err(PropagationError::TangentBlowUp { .. })
        ));
    }
}
