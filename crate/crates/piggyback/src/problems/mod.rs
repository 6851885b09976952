//! Experiment scenarios with deterministic data generation and independent
//! solution/Jacobian oracles.

use thiserror::Error;

mod counterexample;
mod lasso;
mod ridge;
mod sics;
mod trend;

pub use counterexample::{hb_schedule, spectral_radius_2x2, HbCounterexample, PiecewiseGradient};
pub use lasso::{lasso_from_data, make_lasso, LassoInstance, ScaledL1Prox};
pub use ridge::{make_ridge, RidgeInstance, RidgeProxOracle};
pub use sics::{make_sics, sics_optimality_residual, SicsDr, SicsInstance};
pub use trend::{make_trend_filter, second_difference_matrix, TrendInstance};

use nalgebra::{DMatrix, DVector};

use crate::sets::{JacobianElement, MatrixPacket};
use crate::solvers::SolverError;

/// The two-element diagonal packet used by the set-valued demonstrations:
/// `A in { diag(1/4, 1/2), diag(1/2, 1/4) }`, `B = (1, 1)^T`. Its implicit
/// Jacobians are `(4/3, 2)` and `(2, 4/3)`, while the fixed set also
/// contains mixed-product points such as `(5/3, 3/2)`.
pub fn two_branch_demo_packet() -> MatrixPacket {
    let a0 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 0.5]));
    let a1 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25]));
    let b = DMatrix::from_vec(2, 1, vec![1.0, 1.0]);
    MatrixPacket::with_measured_rho(vec![
        JacobianElement::new(a0, b.clone()),
        JacobianElement::new(a1, b),
    ])
    .expect("diagonal blocks have operator norm 1/2")
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("instance failed the qualification heuristic after {attempts} attempts")]
    QualificationFailure { attempts: usize },
    #[error("oracle solve did not reach tolerance {tol} within {max_iters} iterations")]
    OracleSolve { tol: f64, max_iters: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}
