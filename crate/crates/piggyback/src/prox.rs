//! Nonsmooth primitives: proximal operators and piecewise-smooth selections,
//! each exposing its value together with a finite set of generalized
//! Jacobian vertices jointly in the state and the parameter.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::sets::JacobianElement;

/// Absolute tolerance on branch-value agreement when deciding which branches
/// of a selection (or which side of a kink) are active. Exact-zero kinks
/// occur by construction in the experiments; float noise beyond this means
/// genuinely inactive.
pub const ACTIVATION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProxError {
    #[error("threshold must be nonnegative, got {tau}")]
    NegativeThreshold { tau: f64 },
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("eigendecomposition failed")]
    EigenFailure,
    #[error("empty active set at the probed point")]
    EmptyActiveSet,
}

/// Scalar soft threshold `sign(x) * max(|x| - tau, 0)` with its derivative
/// vertices with respect to `(x, tau)`.
///
/// Away from the kink the set is a singleton; at `|x| = tau` both one-sided
/// limits are returned, dead-zone vertex first.
pub fn soft_threshold(x: f64, tau: f64) -> Result<(f64, Vec<(f64, f64)>), ProxError> {
    if tau < 0.0 {
        return Err(ProxError::NegativeThreshold { tau });
    }
    let s = if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    };
    let slack = x.abs() - tau;
    let value = s * slack.max(0.0);
    let derivatives = if slack.abs() <= ACTIVATION_TOL {
        vec![(0.0, 0.0), (1.0, -s)]
    } else if slack > 0.0 {
        vec![(1.0, -s)]
    } else {
        vec![(0.0, 0.0)]
    };
    Ok((value, derivatives))
}

/// Proximal map of `theta * |x|^2` at step `alpha`: `x / (1 + 2 alpha theta)`,
/// with its (single, smooth) Jacobian element in `(x, theta)`.
pub fn ridge_prox(
    x: &DVector<f64>,
    alpha: f64,
    theta: f64,
) -> Result<(DVector<f64>, JacobianElement), ProxError> {
    if alpha <= 0.0 {
        return Err(ProxError::NotPositive {
            name: "alpha",
            value: alpha,
        });
    }
    if theta <= 0.0 {
        return Err(ProxError::NotPositive {
            name: "theta",
            value: theta,
        });
    }
    let p = x.len();
    let denom = 1.0 + 2.0 * alpha * theta;
    let value = x / denom;
    let a = DMatrix::identity(p, p) / denom;
    let b = DMatrix::from_column_slice(p, 1, (x * (-2.0 * alpha / (denom * denom))).as_slice());
    Ok((value, JacobianElement::new(a, b)))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Proximal map of `tr(C x) - log det x` at step `alpha`, in closed spectral
/// form: with `X - alpha C = V diag(d) V^T`, the result is
/// `V diag((d_i + sqrt(d_i^2 + 4 alpha)) / 2) V^T`, symmetric positive
/// definite.
pub fn logdet_prox(
    x: &DMatrix<f64>,
    alpha: f64,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>, ProxError> {
    if alpha <= 0.0 {
        return Err(ProxError::NotPositive {
            name: "alpha",
            value: alpha,
        });
    }
    let s = symmetrize(&(x - c * alpha));
    let eig = s.symmetric_eigen();
    if eig.eigenvalues.iter().any(|d| !d.is_finite()) {
        return Err(ProxError::EigenFailure);
    }
    let z = eig
        .eigenvalues
        .map(|d| 0.5 * (d + (d * d + 4.0 * alpha).sqrt()));
    let v = eig.eigenvectors;
    Ok(&v * DMatrix::from_diagonal(&z) * v.transpose())
}

/// Directional derivative of the spectral function `S -> V h(d) V^T`:
/// `V (Gamma o (V^T E V)) V^T`, where `Gamma` holds the divided differences
/// of `h` at the eigenvalues. Eigenvalue pairs closer than
/// `1e-9 * max(1, |d_i|, |d_j|)` are treated as equal and use `h'`.
///
/// The decomposition is cached so that repeated directions at the same base
/// point cost one dense sandwich product each.
#[derive(Debug, Clone)]
pub struct SpectralJvp {
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
    gamma: DMatrix<f64>,
}

impl SpectralJvp {
    pub fn new(
        s: &DMatrix<f64>,
        h: impl Fn(f64) -> f64,
        h_prime: impl Fn(f64) -> f64,
    ) -> Result<Self, ProxError> {
        let n = s.nrows();
        let eig = symmetrize(s).symmetric_eigen();
        if eig.eigenvalues.iter().any(|d| !d.is_finite()) {
            return Err(ProxError::EigenFailure);
        }
        let d = &eig.eigenvalues;
        let gamma = DMatrix::from_fn(n, n, |i, j| {
            let (di, dj) = (d[i], d[j]);
            let scale = 1.0_f64.max(di.abs()).max(dj.abs());
            if (di - dj).abs() < 1e-9 * scale {
                h_prime(di)
            } else {
                (h(di) - h(dj)) / (di - dj)
            }
        });
        Ok(SpectralJvp {
            eigvals: eig.eigenvalues,
            eigvecs: eig.eigenvectors,
            gamma,
        })
    }

    /// `V diag(h(d)) V^T`, the spectral function value at the base point.
    pub fn map_value(&self, h: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigvecs;
        v * DMatrix::from_diagonal(&self.eigvals.map(h)) * v.transpose()
    }

    /// Apply the derivative to a direction `E` (symmetrized internally).
    pub fn apply(&self, e: &DMatrix<f64>) -> DMatrix<f64> {
        let v = &self.eigvecs;
        let w = v.transpose() * symmetrize(e) * v;
        let hadamard = w.zip_map(&self.gamma, |wij, gij| wij * gij);
        v * hadamard * v.transpose()
    }
}

/// One-shot spectral directional derivative; see [`SpectralJvp`].
pub fn spectral_jvp(
    s: &DMatrix<f64>,
    e: &DMatrix<f64>,
    h: impl Fn(f64) -> f64,
    h_prime: impl Fn(f64) -> f64,
) -> Result<DMatrix<f64>, ProxError> {
    Ok(SpectralJvp::new(s, h, h_prime)?.apply(e))
}

/// Cartesian product of per-coordinate derivative vertices.
///
/// Coordinates away from a kink contribute a single choice; kink coordinates
/// contribute two. Combinations are enumerated with the all-first assignment
/// first (the smallest-index selection), capped at `cap` variants; kink
/// coordinates beyond the cap's reach stay on their first vertex.
pub fn enumerate_vertex_combinations(
    per_coordinate: &[Vec<(f64, f64)>],
    cap: usize,
) -> Vec<Vec<(f64, f64)>> {
    let kink_positions: Vec<usize> = per_coordinate
        .iter()
        .enumerate()
        .filter(|(_, c)| c.len() > 1)
        .map(|(i, _)| i)
        .collect();
    let usable = kink_positions
        .len()
        .min(cap.max(1).ilog2() as usize);
    let count = 1usize << usable;
    let mut out = Vec::with_capacity(count);
    for combo in 0..count {
        let assignment: Vec<(f64, f64)> = per_coordinate
            .iter()
            .enumerate()
            .map(|(i, choices)| {
                match kink_positions.iter().position(|&k| k == i) {
                    Some(j) if j < usable => choices[(combo >> j) & 1],
                    _ => choices[0],
                }
            })
            .collect();
        out.push(assignment);
    }
    out
}

/// One smooth branch of a selection function: the map and its classical
/// Jacobian.
pub struct SelectionBranch {
    pub f: Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    pub jacobian: Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>,
}

/// A Lipschitz gradient selection `(s, F_1, ..., F_m)`: finitely many smooth
/// branches, a selector picking one of them at every point, and a shared
/// Lipschitz constant for the branch Jacobians.
pub struct SelectionFunction {
    branches: Vec<SelectionBranch>,
    selector: Box<dyn Fn(&DVector<f64>) -> usize + Send + Sync>,
    lipschitz_l: f64,
}

impl SelectionFunction {
    pub fn new(
        branches: Vec<SelectionBranch>,
        selector: Box<dyn Fn(&DVector<f64>) -> usize + Send + Sync>,
        lipschitz_l: f64,
    ) -> Self {
        assert!(!branches.is_empty(), "selection needs at least one branch");
        SelectionFunction {
            branches,
            selector,
            lipschitz_l,
        }
    }

    pub fn lipschitz_l(&self) -> f64 {
        self.lipschitz_l
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    /// Value through the selector branch.
    pub fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        let idx = (self.selector)(x).min(self.branches.len() - 1);
        (self.branches[idx].f)(x)
    }

    /// Indices of all branches agreeing with the selected value at `x` up to
    /// the activation tolerance. Always contains the selector's choice.
    pub fn active_set(&self, x: &DVector<f64>) -> Vec<usize> {
        let value = self.value(x);
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| ((b.f)(x) - &value).norm() <= ACTIVATION_TOL)
            .map(|(i, _)| i)
            .collect()
    }

    /// Vertices of the selection Jacobian: the classical Jacobians of the
    /// active branches, in branch order.
    pub fn selection_jacobian(&self, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>, ProxError> {
        let active = self.active_set(x);
        if active.is_empty() {
            return Err(ProxError::EmptyActiveSet);
        }
        Ok(active
            .into_iter()
            .map(|i| (self.branches[i].jacobian)(x))
            .collect())
    }

    /// Probe the Lipschitz-like bound
    /// `gap(J(x), J(x0)) <= L * |x - x0| + 1e-9` at `n_probes` deterministic
    /// points in the ball of the given radius around `x0`.
    pub fn selection_lipschitz_check(
        &self,
        x0: &DVector<f64>,
        radius: f64,
        n_probes: usize,
    ) -> Result<bool, ProxError> {
        let base = self.selection_jacobian(x0)?;
        let mut rng = SplitMix64::new(0x5E1E_C710_u64);
        for _ in 0..n_probes {
            let mut dir = DVector::from_fn(x0.len(), |_, _| rng.next_gaussian());
            let norm = dir.norm();
            if norm > 0.0 {
                dir /= norm;
            }
            let r = radius * rng.next_f64();
            let x = x0 + dir * r;
            let probe = self.selection_jacobian(&x)?;
            let gap = probe
                .iter()
                .map(|m| {
                    base.iter()
                        .map(|v| (m - v).norm())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            if gap > self.lipschitz_l * (&x - x0).norm() + 1e-9 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_regions() {
        let (v, d) = soft_threshold(2.0, 1.0).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(d, vec![(1.0, -1.0)]);

        let (v, d) = soft_threshold(0.5, 1.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(d, vec![(0.0, 0.0)]);

        let (v, d) = soft_threshold(1.0, 1.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(d, vec![(0.0, 0.0), (1.0, -1.0)]);

        let (v, d) = soft_threshold(-3.0, 1.0).unwrap();
        assert_eq!(v, -2.0);
        assert_eq!(d, vec![(1.0, 1.0)]);

        assert!(soft_threshold(1.0, -0.5).is_err());
    }

    #[test]
    fn ridge_prox_formula() {
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let (v, jac) = ridge_prox(&x, 1.0, 0.5).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15);
        assert_eq!(v[1], 0.0);
        assert!((jac.a[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(jac.a[(0, 1)], 0.0);
        assert!((jac.b[(0, 0)] + 0.5).abs() < 1e-15);
        assert_eq!(jac.b[(1, 0)], 0.0);

        assert!(ridge_prox(&x, 0.0, 0.5).is_err());
        assert!(ridge_prox(&x, 1.0, 0.0).is_err());
    }

    #[test]
    fn ridge_prox_identity_limit() {
        let x = DVector::from_vec(vec![0.3, -0.7]);
        let (v, jac) = ridge_prox(&x, 1.0, 1e-14).unwrap();
        assert!((v - &x).norm() < 1e-12);
        assert!((jac.a[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_prox_finite_difference() {
        let mut rng = SplitMix64::new(9);
        for _ in 0..5 {
            let x = DVector::from_fn(4, |_, _| rng.next_gaussian());
            let alpha = 0.5 + rng.next_f64();
            let theta = 0.2 + rng.next_f64();
            let (_, jac) = ridge_prox(&x, alpha, theta).unwrap();
            let h = 1e-6;
            // Derivative in theta by central differences.
            let (vp, _) = ridge_prox(&x, alpha, theta + h).unwrap();
            let (vm, _) = ridge_prox(&x, alpha, theta - h).unwrap();
            let fd = (vp - vm) / (2.0 * h);
            for i in 0..4 {
                assert!((jac.b[(i, 0)] - fd[i]).abs() < 1e-6);
            }
            // Derivative in x along a random direction.
            let dir = DVector::from_fn(4, |_, _| rng.next_gaussian());
            let (vp, _) = ridge_prox(&(&x + &dir * h), alpha, theta).unwrap();
            let (vm, _) = ridge_prox(&(&x - &dir * h), alpha, theta).unwrap();
            let fd = (vp - vm) / (2.0 * h);
            let an = &jac.a * &dir;
            assert!((an - fd).norm() < 1e-6);
        }
    }

    #[test]
    fn logdet_prox_scalar_root() {
        let x = DMatrix::zeros(1, 1);
        let c = DMatrix::zeros(1, 1);
        let z = logdet_prox(&x, 1.0, &c).unwrap();
        assert!((z[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn logdet_prox_optimality_residual() {
        let mut rng = SplitMix64::new(11);
        for n in [2usize, 5] {
            let raw = DMatrix::from_fn(n, n, |_, _| rng.next_gaussian());
            let x = (&raw + raw.transpose()) * 0.5;
            let rawc = DMatrix::from_fn(n, n, |_, _| rng.next_gaussian());
            let c = (&rawc + rawc.transpose()) * 0.5;
            let alpha = 0.7;
            let z = logdet_prox(&x, alpha, &c).unwrap();
            // Optimality: Z + alpha (C - Z^{-1}) = X.
            let z_inv = z.clone().try_inverse().expect("Z is positive definite");
            let residual = &z + (&c - z_inv) * alpha - &x;
            assert!(residual.norm() < 1e-10, "residual {}", residual.norm());
            // Positive definiteness.
            let eigs = z.symmetric_eigen().eigenvalues;
            assert!(eigs.iter().all(|d| *d > 0.0));
        }
    }

    #[test]
    fn spectral_jvp_identity_function() {
        let mut rng = SplitMix64::new(3);
        let raw = DMatrix::from_fn(4, 4, |_, _| rng.next_gaussian());
        let s = (&raw + raw.transpose()) * 0.5;
        let rawe = DMatrix::from_fn(4, 4, |_, _| rng.next_gaussian());
        let e = (&rawe + rawe.transpose()) * 0.5;
        let out = spectral_jvp(&s, &e, |t| t, |_| 1.0).unwrap();
        assert!((out - &e).norm() < 1e-12);
    }

    #[test]
    fn spectral_jvp_square_function_on_diagonal() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, -0.5]));
        let mut rng = SplitMix64::new(4);
        let raw = DMatrix::from_fn(3, 3, |_, _| rng.next_gaussian());
        let e = (&raw + raw.transpose()) * 0.5;
        let out = spectral_jvp(&s, &e, |t| t * t, |t| 2.0 * t).unwrap();
        let expected = &s * &e + &e * &s;
        assert!((out - expected).norm() < 1e-12);
    }

    #[test]
    fn spectral_jvp_finite_difference() {
        let mut rng = SplitMix64::new(5);
        let raw = DMatrix::from_fn(5, 5, |_, _| rng.next_gaussian());
        let s = (&raw + raw.transpose()) * 0.5;
        let rawe = DMatrix::from_fn(5, 5, |_, _| rng.next_gaussian());
        let e = (&rawe + rawe.transpose()) * 0.5;
        let h = |t: f64| 0.5 * (t + (t * t + 4.0).sqrt());
        let hp = |t: f64| 0.5 * (1.0 + t / (t * t + 4.0).sqrt());
        let out = spectral_jvp(&s, &e, h, hp).unwrap();
        let eps = 1e-5;
        let apply_h = |m: &DMatrix<f64>| {
            let eig = m.clone().symmetric_eigen();
            &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues.map(h))
                * eig.eigenvectors.transpose()
        };
        let fd = (apply_h(&(&s + &e * eps)) - apply_h(&(&s - &e * eps))) / (2.0 * eps);
        assert!((out - fd).norm() < 1e-6);
    }

    fn abs_selection() -> SelectionFunction {
        SelectionFunction::new(
            vec![
                SelectionBranch {
                    f: Box::new(|x: &DVector<f64>| x.clone()),
                    jacobian: Box::new(|x: &DVector<f64>| DMatrix::identity(x.len(), x.len())),
                },
                SelectionBranch {
                    f: Box::new(|x: &DVector<f64>| -x),
                    jacobian: Box::new(|x: &DVector<f64>| -DMatrix::identity(x.len(), x.len())),
                },
            ],
            Box::new(|x: &DVector<f64>| if x[0] >= 0.0 { 0 } else { 1 }),
            0.0,
        )
    }

    #[test]
    fn selection_jacobian_absolute_value() {
        let f = abs_selection();
        let at_two = f.selection_jacobian(&DVector::from_vec(vec![2.0])).unwrap();
        assert_eq!(at_two.len(), 1);
        assert_eq!(at_two[0][(0, 0)], 1.0);

        let at_zero = f.selection_jacobian(&DVector::from_vec(vec![0.0])).unwrap();
        assert_eq!(at_zero.len(), 2);
        assert_eq!(at_zero[0][(0, 0)], 1.0);
        assert_eq!(at_zero[1][(0, 0)], -1.0);
    }

    #[test]
    fn selection_jacobian_heavy_ball_gradient() {
        // f'(x) = x for x >= 0 and x / 4 for x < 0; both branches active at 0.
        let f = SelectionFunction::new(
            vec![
                SelectionBranch {
                    f: Box::new(|x: &DVector<f64>| x.clone()),
                    jacobian: Box::new(|_: &DVector<f64>| DMatrix::from_element(1, 1, 1.0)),
                },
                SelectionBranch {
                    f: Box::new(|x: &DVector<f64>| x / 4.0),
                    jacobian: Box::new(|_: &DVector<f64>| DMatrix::from_element(1, 1, 0.25)),
                },
            ],
            Box::new(|x: &DVector<f64>| if x[0] >= 0.0 { 0 } else { 1 }),
            0.0,
        );
        let at_zero = f.selection_jacobian(&DVector::from_vec(vec![0.0])).unwrap();
        assert_eq!(at_zero.len(), 2);
        assert_eq!(at_zero[0][(0, 0)], 1.0);
        assert_eq!(at_zero[1][(0, 0)], 0.25);
    }

    #[test]
    fn selection_lipschitz_affine_and_abs() {
        let f = abs_selection();
        assert!(f
            .selection_lipschitz_check(&DVector::from_vec(vec![0.0]), 1.0, 50)
            .unwrap());
        assert!(f
            .selection_lipschitz_check(&DVector::from_vec(vec![3.0]), 0.5, 50)
            .unwrap());
    }

    #[test]
    fn selection_lipschitz_piecewise_quadratic() {
        // Gradient selection of a piecewise quadratic: branches x and x/4,
        // picked by sign; Jacobians are constant, so L = 0 works within each
        // branch and the gap at the kink is covered by both vertices.
        let f = SelectionFunction::new(
            vec![
                SelectionBranch {
                    f: Box::new(|x: &DVector<f64>| {
                        DVector::from_vec(vec![x[0] * x[0].max(0.0) / 2.0])
                    }),
                    jacobian: Box::new(|x: &DVector<f64>| {
                        DMatrix::from_element(1, 1, x[0].max(0.0))
                    }),
                },
                SelectionBranch {
                    f: Box::new(|x: &DVector<f64>| {
                        DVector::from_vec(vec![x[0] * x[0].min(0.0) / 2.0])
                    }),
                    jacobian: Box::new(|x: &DVector<f64>| {
                        DMatrix::from_element(1, 1, x[0].min(0.0))
                    }),
                },
            ],
            Box::new(|x: &DVector<f64>| if x[0] >= 0.0 { 0 } else { 1 }),
            1.0,
        );
        assert!(f
            .selection_lipschitz_check(&DVector::from_vec(vec![0.0]), 0.5, 100)
            .unwrap());
    }
}
