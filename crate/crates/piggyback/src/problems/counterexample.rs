//! The Heavy-Ball divergence example: a one-dimensional strongly convex
//! objective with piecewise-linear gradient whose derivative propagation
//! blows up even though the iterates sit exactly at the solution.
//!
//! `f(x, theta) = x^2 / 2` for `x >= 0` and `x^2 / 8` for `x < 0`,
//! independent of `theta`; the gradient has branch derivatives `1` and
//! `1/4`, both active at the origin. With `alpha = 1`, `beta = 3/4` and the
//! initialization `x_0 = y_0 = theta`, the iterates at `theta = 0` are
//! identically zero while the scheduled tangent products grow like the
//! spectral radius `9/8` of `M1 M1 M2 M2` per four steps.

use nalgebra::{DMatrix, DVector};

use crate::prox::ACTIVATION_TOL;
use crate::sets::JacobianElement;
use crate::solvers::{GradientDescent, GradientOracle, HbInit, HeavyBall};

/// Gradient selection of the counterexample objective: branch `x` (second
/// derivative 1) first, branch `x / 4` (second derivative 1/4) second.
pub struct PiecewiseGradient;

impl GradientOracle for PiecewiseGradient {
    fn eval(&self, x: &DVector<f64>, _theta: &DVector<f64>) -> DVector<f64> {
        x.map(|v| if v >= 0.0 { v } else { v / 4.0 })
    }

    fn jacobians(&self, x: &DVector<f64>, _theta: &DVector<f64>) -> Vec<JacobianElement> {
        let v = x[0];
        let b = DMatrix::zeros(1, 1);
        let element = |h: f64| JacobianElement::new(DMatrix::from_element(1, 1, h), b.clone());
        if v.abs() <= ACTIVATION_TOL {
            vec![element(1.0), element(0.25)]
        } else if v > 0.0 {
            vec![element(1.0)]
        } else {
            vec![element(0.25)]
        }
    }

    fn lipschitz(&self) -> f64 {
        1.0
    }

    fn strong_convexity(&self) -> f64 {
        0.25
    }
}

/// The period-four branch schedule: two steps through the `x^2/2` side, two
/// through the `x^2/8` side; at smooth points the single factor is taken.
pub fn hb_schedule() -> Box<dyn Fn(usize, usize) -> usize + Send + Sync> {
    Box::new(|k, num_factors| {
        if num_factors == 2 {
            if k % 4 < 2 {
                0
            } else {
                1
            }
        } else {
            0
        }
    })
}

/// Scenario wrapper for the divergence example.
pub struct HbCounterexample;

impl Default for HbCounterexample {
    fn default() -> Self {
        HbCounterexample
    }
}

impl HbCounterexample {
    pub fn new() -> Self {
        HbCounterexample
    }

    pub const ALPHA: f64 = 1.0;
    pub const BETA: f64 = 0.75;

    /// Heavy-Ball on the doubled state with identity initialization and the
    /// period-four schedule.
    pub fn heavy_ball(&self) -> HeavyBall<PiecewiseGradient> {
        HeavyBall::new(
            PiecewiseGradient,
            Self::ALPHA,
            Self::BETA,
            HbInit::IdentityInTheta,
            1,
            1,
        )
        .expect("beta = 3/4 is below the stability bound for mu = 1/4, L = 1")
        .with_schedule(hb_schedule())
    }

    /// Fixed-step gradient descent over the same gradient and schedule.
    pub fn gradient_descent(&self) -> GradientDescent<PiecewiseGradient> {
        GradientDescent::new(
            PiecewiseGradient,
            Self::ALPHA,
            HbInit::IdentityInTheta,
            1,
            1,
        )
        .with_schedule(hb_schedule())
    }

    /// The two derivative candidates of the Heavy-Ball step at the origin:
    /// `M1` from the `1/4` branch, `M2` from the `1` branch.
    pub fn m1() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.5, -0.75, 1.0, 0.0])
    }

    pub fn m2() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.75, -0.75, 1.0, 0.0])
    }

    /// The period-four product `M1 M1 M2 M2`.
    pub fn monodromy() -> DMatrix<f64> {
        let m1 = Self::m1();
        let m2 = Self::m2();
        &m1 * &m1 * &m2 * &m2
    }

    /// Derivative of the solution map `xbar(theta) = theta`.
    pub fn solution_map_derivative() -> f64 {
        1.0
    }

    /// Derivative of the constant zero trajectory observed at `theta = 0`.
    /// Both reference values are reported; the kink at the origin makes the
    /// conservative derivative set nontrivial there, so they disagree.
    pub fn constant_trajectory_derivative() -> f64 {
        0.0
    }
}

/// Spectral radius of a 2 x 2 matrix through the characteristic polynomial.
pub fn spectral_radius_2x2(m: &DMatrix<f64>) -> f64 {
    assert_eq!(m.shape(), (2, 2));
    let trace = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = trace * trace - 4.0 * det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        ((trace + root) * 0.5)
            .abs()
            .max(((trace - root) * 0.5).abs())
    } else {
        // Complex pair: |lambda| = sqrt(det).
        det.abs().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{jvp_sequence, run_iterates};

    #[test]
    fn monodromy_matches_closed_form() {
        // M1 M1 M2 M2 = (-1/32) [[36, 0], [27, 9]]; all entries are dyadic,
        // so the products are float-exact.
        let product = HbCounterexample::monodromy();
        let expected = DMatrix::from_row_slice(2, 2, &[36.0, 0.0, 27.0, 9.0]) * (-1.0 / 32.0);
        assert_eq!(product, expected);
        let radius = spectral_radius_2x2(&product);
        assert!((radius - 9.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn iterates_stay_at_zero() {
        let scenario = HbCounterexample::new();
        let problem = scenario.heavy_ball();
        let theta = DVector::from_vec(vec![0.0]);
        let iterates = run_iterates(&problem, &theta, 100).unwrap();
        for z in iterates {
            assert_eq!(z.norm(), 0.0);
        }
    }

    #[test]
    fn tangents_grow_along_schedule() {
        let scenario = HbCounterexample::new();
        let problem = scenario.heavy_ball();
        let theta = DVector::from_vec(vec![0.0]);
        let td = DVector::from_vec(vec![1.0]);
        let run = jvp_sequence(&problem, &theta, &td, 64).unwrap();
        assert!(run.blow_up.is_none());
        // Tangent after 8 steps: (M1 M1 M2 M2)^2 (1, 1)^T, float-exact.
        let m = HbCounterexample::monodromy();
        let seed = DVector::from_vec(vec![1.0, 1.0]);
        let expected = &m * &m * seed;
        assert_eq!(run.tangents[8], expected);
        // Growth factor (9/8)^2 per 8 steps asymptotically.
        let n16 = run.tangents[16].norm();
        let n64 = run.tangents[64].norm();
        let measured = (n64 / n16).powf(1.0 / 48.0);
        let predicted = (9.0_f64 / 8.0).powf(0.25);
        assert!(
            (measured - predicted).abs() < 5e-3,
            "measured {measured}, predicted {predicted}"
        );
    }

    #[test]
    fn gradient_descent_tangents_stay_bounded() {
        let scenario = HbCounterexample::new();
        let problem = scenario.gradient_descent();
        let theta = DVector::from_vec(vec![0.0]);
        let td = DVector::from_vec(vec![1.0]);
        let run = jvp_sequence(&problem, &theta, &td, 500).unwrap();
        assert!(run.blow_up.is_none());
        let max = run
            .tangents
            .iter()
            .map(|t| t.norm())
            .fold(0.0_f64, f64::max);
        assert!(max <= 10.0, "max tangent norm {max}");
    }

    #[test]
    fn quadratic_start_converges_to_zero() {
        // Plain Heavy-Ball from a nonzero start on the same objective.
        let problem = HeavyBall::new(
            PiecewiseGradient,
            1.0,
            0.75,
            HbInit::Point(DVector::from_vec(vec![1.0, 1.0])),
            1,
            1,
        )
        .unwrap();
        let theta = DVector::from_vec(vec![0.0]);
        let iterates = run_iterates(&problem, &theta, 400).unwrap();
        assert!(iterates.last().unwrap().norm() < 1e-9);
    }
}
