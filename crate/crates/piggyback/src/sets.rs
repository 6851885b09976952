//! Set-valued affine iterations on compact matrix sets.
//!
//! A [`MatrixPacket`] is a finite set of horizontally split matrices `[A | B]`
//! whose `A` blocks all have operator norm at most `rho < 1`. It acts on
//! finite sets of `p x m` matrices by `X -> { A X + B }`; that action is a
//! contraction in the Hausdorff metric and has a unique compact fixed set.
//! This module computes the fixed set, verifies the contraction rate, and
//! checks the stability properties of the fixed-set map (monotonicity,
//! Lipschitz dependence on the packet, perturbed iterations).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Slack admitted when checking an `A` block against the certified `rho`.
pub const RHO_CERTIFICATE_SLACK: f64 = 1e-10;

/// Hard cap on set cardinality after pruning.
pub const MAX_SET_CARDINALITY: usize = 10_000;

#[derive(Debug, Error)]
pub enum SetError {
    #[error("empty set")]
    EmptySet,
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("contraction factor out of range: rho = {rho}")]
    InvalidRho { rho: f64 },
    #[error("A-block operator norm {norm} exceeds certified rho = {rho}")]
    NormExceedsRho { norm: f64, rho: f64 },
    #[error("rate violation: no convergence within {max_iters} iterations at rho = {rho}")]
    RateViolation { max_iters: usize, rho: f64 },
    #[error("set explosion: cardinality {cardinality} exceeds cap {cap}")]
    SetExplosion { cardinality: usize, cap: usize },
    #[error("packet is not a sub-packet: element {index} has no match")]
    NotASubPacket { index: usize },
}

/// One candidate Jacobian `[A | B]`: `a` is the partial with respect to the
/// state, `b` the partial with respect to the parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianElement {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl JacobianElement {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "A block must be square");
        assert_eq!(a.nrows(), b.nrows(), "A and B must have matching rows");
        JacobianElement { a, b }
    }

    /// `(p, m)` where `a` is `p x p` and `b` is `p x m`.
    pub fn dims(&self) -> (usize, usize) {
        (self.a.nrows(), self.b.ncols())
    }
}

/// Operator norm (largest singular value) by power iteration on `A^T A`.
///
/// Deterministic: the start vector is the normalized all-ones vector, with a
/// fixed ramp fallback if the iteration lands in the kernel. Relative
/// tolerance 1e-12, at most 10 000 iterations.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let apply = |v: &DVector<f64>| a.tr_mul(&(a * v));
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0_f64;
    let mut restarts = 0usize;
    for _ in 0..10_000 {
        let w = apply(&v);
        let norm_w = w.norm();
        if norm_w <= f64::MIN_POSITIVE {
            // v sits in the kernel of A^T A; restart from deterministic
            // alternatives before concluding the norm is zero.
            restarts += 1;
            match restarts {
                1 => {
                    v = DVector::from_fn(n, |i, _| (i + 1) as f64);
                    v /= v.norm();
                    continue;
                }
                _ => {
                    // Both probes annihilated; restart from the first basis
                    // vector that A^T A does not kill, if any.
                    let alive = (0..n).find_map(|i| {
                        let e = DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 });
                        if apply(&e).norm() > f64::MIN_POSITIVE {
                            Some(e)
                        } else {
                            None
                        }
                    });
                    match alive {
                        Some(e) => {
                            v = e;
                            continue;
                        }
                        None => return 0.0,
                    }
                }
            }
        }
        let lambda_next = v.dot(&w);
        v = w / norm_w;
        if (lambda_next - lambda).abs() <= 1e-12 * lambda_next.abs().max(1.0) {
            return lambda_next.max(0.0).sqrt();
        }
        lambda = lambda_next;
    }
    lambda.max(0.0).sqrt()
}

/// A finite set of `p x m` matrices with a merge radius for growth control.
///
/// After every prune pass, no two kept points are closer than `prune_tol` in
/// Frobenius norm, and every dropped point was within `prune_tol` of a kept
/// one. Pruning keeps the first point of each cluster in insertion order, so
/// every surviving point is an exact member of the unpruned set.
#[derive(Debug, Clone)]
pub struct MatrixSet {
    points: Vec<DMatrix<f64>>,
    prune_tol: f64,
}

impl MatrixSet {
    pub fn new(points: Vec<DMatrix<f64>>, prune_tol: f64) -> Result<Self, SetError> {
        if points.is_empty() {
            return Err(SetError::EmptySet);
        }
        let dims = (points[0].nrows(), points[0].ncols());
        for p in &points[1..] {
            let got = (p.nrows(), p.ncols());
            if got != dims {
                return Err(SetError::DimensionMismatch {
                    expected: dims,
                    got,
                });
            }
        }
        let mut set = MatrixSet {
            points,
            prune_tol: prune_tol.max(0.0),
        };
        set.points = prune(std::mem::take(&mut set.points), set.prune_tol);
        Ok(set)
    }

    pub fn singleton(point: DMatrix<f64>) -> Self {
        MatrixSet {
            points: vec![point],
            prune_tol: 0.0,
        }
    }

    pub fn points(&self) -> &[DMatrix<f64>] {
        &self.points
    }

    pub fn prune_tol(&self) -> f64 {
        self.prune_tol
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.points[0].nrows(), self.points[0].ncols())
    }

    /// Largest Frobenius norm over the set.
    pub fn sup_norm(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Same points re-pruned at a different radius.
    pub fn with_prune_tol(&self, prune_tol: f64) -> Self {
        MatrixSet {
            points: prune(self.points.clone(), prune_tol.max(0.0)),
            prune_tol: prune_tol.max(0.0),
        }
    }
}

/// Greedy first-kept merge: points within `tol` of an already kept point are
/// dropped, in insertion order.
fn prune(points: Vec<DMatrix<f64>>, tol: f64) -> Vec<DMatrix<f64>> {
    if tol <= 0.0 {
        // Only exact duplicates collapse.
        let mut kept: Vec<DMatrix<f64>> = Vec::with_capacity(points.len());
        for p in points {
            if !kept.iter().any(|q| q == &p) {
                kept.push(p);
            }
        }
        return kept;
    }
    let tol_sq = tol * tol;
    let mut kept: Vec<DMatrix<f64>> = Vec::new();
    for p in points {
        let mut merged = false;
        for q in &kept {
            if frob_dist_sq_below(&p, q, tol_sq) {
                merged = true;
                break;
            }
        }
        if !merged {
            kept.push(p);
        }
    }
    kept
}

/// True if the squared Frobenius distance is `< bound`, with early exit.
fn frob_dist_sq_below(x: &DMatrix<f64>, y: &DMatrix<f64>, bound: f64) -> bool {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let d = a - b;
        acc += d * d;
        if acc >= bound {
            return false;
        }
    }
    true
}

fn frob_dist_sq(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let d = a - b;
        acc += d * d;
    }
    acc
}

/// Squared distance from `p` to the set `ys`, early-exiting once the minimum
/// drops below `stop_below` (the caller's running maximum cannot be raised by
/// that point any more).
fn min_dist_sq_to(p: &DMatrix<f64>, ys: &[DMatrix<f64>], stop_below: f64) -> f64 {
    let mut best = f64::INFINITY;
    for y in ys {
        let mut acc = 0.0;
        for (a, b) in p.iter().zip(y.iter()) {
            let d = a - b;
            acc += d * d;
            if acc >= best {
                break;
            }
        }
        if acc < best {
            best = acc;
        }
        if best <= stop_below {
            return best;
        }
    }
    best
}

/// One-sided set distance `gap(X, Y) = max_{x in X} min_{y in Y} |x - y|_F`.
///
/// Zero exactly when every point of `X` appears in `Y`.
pub fn gap(x: &MatrixSet, y: &MatrixSet) -> f64 {
    let mut worst = 0.0_f64;
    for p in x.points() {
        let d = min_dist_sq_to(p, y.points(), worst);
        if d > worst {
            worst = d;
        }
    }
    worst.sqrt()
}

/// Hausdorff distance `max(gap(X, Y), gap(Y, X))`.
pub fn hausdorff(x: &MatrixSet, y: &MatrixSet) -> f64 {
    gap(x, y).max(gap(y, x))
}

/// A compact set of split matrices `[A | B]` with a certified contraction
/// factor: every `A` block has operator norm at most `rho < 1`.
#[derive(Debug, Clone)]
pub struct MatrixPacket {
    elements: Vec<JacobianElement>,
    rho: f64,
}

impl MatrixPacket {
    /// Build a packet against a caller-supplied certificate `rho`.
    pub fn new(elements: Vec<JacobianElement>, rho: f64) -> Result<Self, SetError> {
        if elements.is_empty() {
            return Err(SetError::EmptySet);
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(SetError::InvalidRho { rho });
        }
        let dims = elements[0].dims();
        for e in &elements[1..] {
            if e.dims() != dims {
                return Err(SetError::DimensionMismatch {
                    expected: dims,
                    got: e.dims(),
                });
            }
        }
        for e in &elements {
            let norm = operator_norm(&e.a);
            if norm > rho + RHO_CERTIFICATE_SLACK {
                return Err(SetError::NormExceedsRho { norm, rho });
            }
        }
        Ok(MatrixPacket { elements, rho })
    }

    /// Build a packet certifying `rho` as the measured maximum operator norm
    /// of the `A` blocks. Fails if that maximum is not strictly below one.
    pub fn with_measured_rho(elements: Vec<JacobianElement>) -> Result<Self, SetError> {
        if elements.is_empty() {
            return Err(SetError::EmptySet);
        }
        let measured = elements
            .iter()
            .map(|e| operator_norm(&e.a))
            .fold(0.0, f64::max);
        if measured >= 1.0 {
            return Err(SetError::InvalidRho { rho: measured });
        }
        MatrixPacket::new(elements, measured)
    }

    pub fn elements(&self) -> &[JacobianElement] {
        &self.elements
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dims(&self) -> (usize, usize) {
        self.elements[0].dims()
    }

    /// Largest Frobenius norm of the `B` blocks.
    pub fn sup_b_norm(&self) -> f64 {
        self.elements.iter().map(|e| e.b.norm()).fold(0.0, f64::max)
    }

    /// Every Frobenius point of the fixed set lies in the ball of this radius.
    pub fn attractor_radius(&self) -> f64 {
        self.sup_b_norm() / (1.0 - self.rho)
    }

    /// The packet action `J(X) = { A X + B }` followed by one prune pass at
    /// the set's merge radius.
    pub fn apply(&self, x: &MatrixSet) -> Result<MatrixSet, SetError> {
        if self.dims() != x.dims() {
            return Err(SetError::DimensionMismatch {
                expected: self.dims(),
                got: x.dims(),
            });
        }
        apply_elements(&self.elements, x, x.prune_tol(), MAX_SET_CARDINALITY)
    }
}

/// Raw affine action used by both the packet and the propagation engine: all
/// `A X + B` combinations, pruned at `prune_tol`, cardinality-capped.
pub fn apply_elements(
    elements: &[JacobianElement],
    x: &MatrixSet,
    prune_tol: f64,
    cap: usize,
) -> Result<MatrixSet, SetError> {
    if elements.is_empty() {
        return Err(SetError::EmptySet);
    }
    let mut images = Vec::with_capacity(elements.len() * x.len());
    for e in elements {
        for p in x.points() {
            images.push(&e.a * p + &e.b);
        }
    }
    let pruned = prune(images, prune_tol.max(0.0));
    if pruned.len() > cap {
        return Err(SetError::SetExplosion {
            cardinality: pruned.len(),
            cap,
        });
    }
    Ok(MatrixSet {
        points: pruned,
        prune_tol: prune_tol.max(0.0),
    })
}

/// Result of a fixed-set computation: the set itself plus the per-step
/// successive Hausdorff distances, for rate verification.
#[derive(Debug, Clone)]
pub struct FixedSetRun {
    pub set: MatrixSet,
    pub iterations: usize,
    pub step_distances: Vec<f64>,
}

fn fixed_set_max_iters(rho: f64, d0: f64, threshold: f64) -> usize {
    if d0 <= threshold || rho <= 0.0 {
        return 2;
    }
    let ratio = threshold / d0;
    if ratio >= 1.0 {
        return 2;
    }
    let k = (ratio.ln() / rho.ln()).ceil();
    // Safety margin: pruning jitters the successive distances.
    (k as usize).saturating_mul(2) + 30
}

/// Iterate `X_{k+1} = J(X_k)` until successive iterates are within
/// `tol * (1 - rho)` in Hausdorff distance, which certifies that the result
/// is within `tol` of `fix(J)` up to accumulated prune error.
///
/// Growth is controlled by re-pruning at `tol / 100` unless the seed carries
/// a coarser radius already.
pub fn fixed_set(packet: &MatrixPacket, x0: &MatrixSet, tol: f64) -> Result<FixedSetRun, SetError> {
    assert!(tol > 0.0, "fixed_set tolerance must be positive");
    let prune_tol = x0.prune_tol().max(tol / 100.0);
    let x0 = x0.with_prune_tol(prune_tol);
    fixed_set_with_stop(packet, &x0, tol * (1.0 - packet.rho()))
}

/// Fixed-set iteration with an explicit stopping threshold on the successive
/// Hausdorff distance. The seed's prune radius is kept as-is.
pub fn fixed_set_with_stop(
    packet: &MatrixPacket,
    x0: &MatrixSet,
    stop: f64,
) -> Result<FixedSetRun, SetError> {
    // Pruning floors the successive distances near the merge radius, so the
    // effective threshold cannot sit below that floor.
    let stop = stop.max(3.0 * x0.prune_tol());
    let mut current = packet.apply(x0)?;
    let d0 = hausdorff(x0, &current);
    let max_iters = fixed_set_max_iters(packet.rho(), d0, stop);
    let mut step_distances = vec![d0];
    if d0 <= stop {
        return Ok(FixedSetRun {
            set: current,
            iterations: 1,
            step_distances,
        });
    }
    for iter in 1..=max_iters {
        let next = packet.apply(&current)?;
        let d = hausdorff(&current, &next);
        step_distances.push(d);
        current = next;
        if d <= stop {
            return Ok(FixedSetRun {
                set: current,
                iterations: iter + 1,
                step_distances,
            });
        }
    }
    Err(SetError::RateViolation {
        max_iters,
        rho: packet.rho(),
    })
}

/// One row of a rate-verification run.
#[derive(Debug, Clone, Copy)]
pub struct RateSample {
    pub k: usize,
    pub dist: f64,
    pub bound: f64,
}

/// Track `dist(X_k, fix(J))` against the contraction bound
/// `rho^k * dist(X_0, J(X_0)) / (1 - rho)` for `k = 0..=k_max`.
///
/// The fixed set is obtained by continuing the same orbit past `k_max` until
/// it stabilizes; violations are reported in the output, not raised.
pub fn verify_rate(
    packet: &MatrixPacket,
    x0: &MatrixSet,
    k_max: usize,
) -> Result<Vec<RateSample>, SetError> {
    let mut trajectory = Vec::with_capacity(k_max + 1);
    trajectory.push(x0.clone());
    for _ in 0..k_max {
        let next = packet.apply(trajectory.last().unwrap())?;
        trajectory.push(next);
    }
    let first = packet.apply(x0)?;
    let d0 = hausdorff(x0, &first);
    // Tight continuation from the end of the window.
    let stop = (1e-13 * (1.0 + x0.sup_norm() + packet.attractor_radius()))
        .max(2.5 * x0.prune_tol());
    let fix = fixed_set_with_stop(packet, trajectory.last().unwrap(), stop)?.set;
    let rho = packet.rho();
    let scale = d0 / (1.0 - rho);
    let samples = trajectory
        .iter()
        .enumerate()
        .map(|(k, xk)| RateSample {
            k,
            dist: hausdorff(xk, &fix),
            bound: rho.powi(k as i32) * scale,
        })
        .collect();
    Ok(samples)
}

fn element_pm_dist(x: &JacobianElement, y: &JacobianElement) -> f64 {
    operator_norm(&(&x.a - &y.a)).max((&x.b - &y.b).norm())
}

/// One-sided packet distance under the norm `max(|dA|_op, |dB|_F)`.
pub fn packet_gap(x: &MatrixPacket, y: &MatrixPacket) -> f64 {
    x.elements
        .iter()
        .map(|e| {
            y.elements
                .iter()
                .map(|f| element_pm_dist(e, f))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Hausdorff packet distance under the norm `max(|dA|_op, |dB|_F)`.
pub fn packet_hausdorff(x: &MatrixPacket, y: &MatrixPacket) -> f64 {
    packet_gap(x, y).max(packet_gap(y, x))
}

/// Check `fix(J) subset fix(J')` for a sub-packet `J` of `J'`.
///
/// Errors if `J` is not a sub-packet of `J'` as a point set (matched up to
/// 1e-12 in the packet norm). Returns whether `gap(fix(J), fix(J')) <= tol`.
pub fn fix_monotonicity_check(
    packet: &MatrixPacket,
    superset: &MatrixPacket,
    tol: f64,
) -> Result<bool, SetError> {
    for (index, e) in packet.elements().iter().enumerate() {
        let matched = superset
            .elements()
            .iter()
            .any(|f| e.dims() == f.dims() && element_pm_dist(e, f) <= 1e-12);
        if !matched {
            return Err(SetError::NotASubPacket { index });
        }
    }
    let inner_tol = (tol / 10.0).max(1e-12);
    let seed = MatrixSet::singleton(DMatrix::zeros(packet.dims().0, packet.dims().1));
    let fix_small = fixed_set(packet, &seed, inner_tol)?.set;
    let fix_large = fixed_set(superset, &seed, inner_tol)?.set;
    Ok(gap(&fix_small, &fix_large) <= tol)
}

/// Both sides of the fixed-set Lipschitz estimate:
/// `lhs = dist(fix(J0), fix(J))` and
/// `rhs = (1/(1-rho) + sup|B0| / (1-rho)^2) * dist_pm(J0, J)`,
/// with `rho` the larger of the two certificates.
pub fn fix_lipschitz_check(
    packet0: &MatrixPacket,
    packet: &MatrixPacket,
) -> Result<(f64, f64), SetError> {
    if packet0.dims() != packet.dims() {
        return Err(SetError::DimensionMismatch {
            expected: packet0.dims(),
            got: packet.dims(),
        });
    }
    let dist_pm = packet_hausdorff(packet0, packet);
    let rho = packet0.rho().max(packet.rho());
    let rhs = (1.0 / (1.0 - rho) + packet0.sup_b_norm() / (1.0 - rho).powi(2)) * dist_pm;
    let scale = packet0.attractor_radius().max(packet.attractor_radius());
    let tol = (1e-9 * (1.0 + scale)).max(1e-4 * dist_pm).max(1e-12);
    let seed = MatrixSet::singleton(DMatrix::zeros(packet0.dims().0, packet0.dims().1));
    let fix0 = fixed_set(packet0, &seed, tol)?.set;
    let fix1 = fixed_set(packet, &seed, tol)?.set;
    Ok((hausdorff(&fix0, &fix1), rhs))
}

/// Run `X_{k+1} = J_k(X_k)` for a perturbed packet sequence and report
/// `gap(X_k, fix(Jbar))` for every `k`; the caller certifies the
/// perturbation decay and asserts the geometric decay of the output.
pub fn perturbed_fixed_iteration(
    packet_seq: &[MatrixPacket],
    limit_packet: &MatrixPacket,
    x0: &MatrixSet,
) -> Result<Vec<f64>, SetError> {
    let scale = 1.0 + x0.sup_norm() + limit_packet.attractor_radius();
    let stop = (1e-13 * scale).max(2.5 * x0.prune_tol());
    let fix = fixed_set_with_stop(limit_packet, x0, stop)?.set;
    let mut gaps = Vec::with_capacity(packet_seq.len() + 1);
    let mut current = x0.clone();
    gaps.push(gap(&current, &fix));
    for packet in packet_seq {
        current = apply_elements(
            packet.elements(),
            &current,
            x0.prune_tol(),
            MAX_SET_CARDINALITY,
        )?;
        gaps.push(gap(&current, &fix));
    }
    Ok(gaps)
}

#[derive(Debug)]
struct BallNode {
    lower: f64,
    /// Translate of the composed word map: the ball center.
    translate: DMatrix<f64>,
    /// Matrix of the composed word map; children refine by composing on the
    /// right, so every child region is contained in its parent's ball.
    word: DMatrix<f64>,
    radius: f64,
}

impl PartialEq for BallNode {
    fn eq(&self, other: &Self) -> bool {
        self.lower == other.lower
    }
}
impl Eq for BallNode {}
impl PartialOrd for BallNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for BallNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the smallest lower bound.
        other.lower.total_cmp(&self.lower)
    }
}

/// Frobenius distance from `point` to the exact fixed set `fix(J)`, computed
/// to within `tol` by best-first branch and bound on the word tree of the
/// affine maps.
///
/// For a word `w = (i_1, ..., i_k)` the node covers
/// `A_{i_1} ... A_{i_k} (fix) + t_w`, contained in the ball around the
/// word's translate with radius `rho_{i_1} ... rho_{i_k} R`; children append
/// one element on the inside. Independent of the iterative [`fixed_set`]
/// computation, which makes it a useful cross-check oracle. The returned
/// value errs on the side of an upper bound.
pub fn attractor_distance(packet: &MatrixPacket, point: &DMatrix<f64>, tol: f64) -> f64 {
    let (p, m) = packet.dims();
    assert_eq!(
        (point.nrows(), point.ncols()),
        (p, m),
        "point dimensions must match the packet"
    );
    if packet.elements().len() == 1 {
        // Singleton packet: the fixed set is the affine fixed point
        // (I - A)^{-1} B.
        let e = &packet.elements()[0];
        if let Some(fixed) = (DMatrix::identity(p, p) - &e.a).lu().solve(&e.b) {
            return frob_dist_sq(point, &fixed).sqrt();
        }
    }
    let element_norms: Vec<f64> = packet
        .elements()
        .iter()
        .map(|e| operator_norm(&e.a))
        .collect();
    let root_radius = packet.attractor_radius() * 1.000001 + 1e-300;
    let root_center = DMatrix::zeros(p, m);
    let mut best_upper = frob_dist_sq(point, &root_center).sqrt() + root_radius;
    let mut heap = BinaryHeap::new();
    heap.push(BallNode {
        lower: (frob_dist_sq(point, &root_center).sqrt() - root_radius).max(0.0),
        translate: root_center,
        word: DMatrix::identity(p, p),
        radius: root_radius,
    });
    let mut expansions = 0usize;
    const MAX_EXPANSIONS: usize = 5_000_000;
    while let Some(node) = heap.pop() {
        if node.lower >= best_upper - tol {
            break;
        }
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            break;
        }
        for (e, &a_norm) in packet.elements().iter().zip(&element_norms) {
            let translate = &node.word * &e.b + &node.translate;
            let word = &node.word * &e.a;
            let radius = node.radius * a_norm;
            let d = frob_dist_sq(point, &translate).sqrt();
            if d + radius < best_upper {
                best_upper = d + radius;
            }
            let lower = (d - radius).max(0.0);
            if lower < best_upper - tol {
                heap.push(BallNode {
                    lower,
                    translate,
                    word,
                    radius,
                });
            }
        }
    }
    best_upper
}

/// `max` over the set of [`attractor_distance`], the one-sided gap from a
/// finite set to the exact fixed set.
pub fn attractor_gap(packet: &MatrixPacket, set: &MatrixSet, tol: f64) -> f64 {
    set.points()
        .iter()
        .map(|p| attractor_distance(packet, p, tol))
        .fold(0.0, f64::max)
}
