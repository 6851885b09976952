//! Nonsmooth piggyback differentiation of fixed-point solvers.
//!
//! Derivative recursions of the form `J_{k+1} = A_k J_k + B_k` with
//! set-valued generalized Jacobians `[A_k | B_k]` converge, under a uniform
//! operator-norm bound on the `A` blocks, to the unique fixed set of an
//! affine set iteration. This crate provides:
//!
//! - [`sets`]: matrix packets, gap/Hausdorff metrics, fixed sets of the
//!   packet action and their contraction-rate and stability certificates;
//! - [`prox`]: proximal operators and piecewise-smooth selections exposing
//!   value plus generalized derivative vertices jointly in state and
//!   parameter;
//! - [`engine`]: forward (JVP), reverse (VJP), full-Jacobian and set-valued
//!   derivative propagation along any [`engine::FixedPointProblem`], plus
//!   implicit differentiation at the fixed point;
//! - [`solvers`]: forward-backward, Douglas-Rachford, ADMM (with its dual
//!   Douglas-Rachford reformulation) and Heavy-Ball iteration maps with
//!   their derivative packets;
//! - [`problems`]: ridge, lasso, sparse inverse covariance, trend filtering
//!   and the Heavy-Ball divergence example, with data generation and
//!   independent solution/Jacobian oracles.

pub mod engine;
pub mod problems;
pub mod prox;
pub mod rng;
pub mod sets;
pub mod solvers;

pub use engine::{FixedPointProblem, InitJacobian, Initializer, PropagationError, StepJacobian};
pub use sets::{
    gap, hausdorff, operator_norm, JacobianElement, MatrixPacket, MatrixSet, SetError,
};
