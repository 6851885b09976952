//! Scenario execution: per-repetition solver runs with derivative
//! propagation, reference targets (closed-form oracle or a three-times
//! longer self-run), and deterministic record emission.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use piggyback::engine::{
    full_jacobian_sequence, jvp_sequence, packet_sequence, run_iterates, vjp_reverse,
    FixedPointProblem, PropagationError,
};
use piggyback::problems::{
    make_lasso, make_ridge, make_sics, make_trend_filter, HbCounterexample, ScenarioError,
};
use piggyback::rng::{rep_seed, SplitMix64};
use piggyback::sets::{
    apply_elements, attractor_gap, operator_norm, JacobianElement, MatrixPacket, MatrixSet,
};
use piggyback::solvers::{admm_as_dual_dr, measured_rho, AdmmState};

use crate::records::{ExperimentRecord, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Ridge,
    Lasso,
    Sics,
    Trend,
    HeavyBall,
    PacketDemo,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Ridge => "ridge",
            Scenario::Lasso => "lasso",
            Scenario::Sics => "sics",
            Scenario::Trend => "trend",
            Scenario::HeavyBall => "heavy_ball",
            Scenario::PacketDemo => "packet_demo",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ridge" => Ok(Scenario::Ridge),
            "lasso" => Ok(Scenario::Lasso),
            "sics" => Ok(Scenario::Sics),
            "trend" => Ok(Scenario::Trend),
            "heavy_ball" => Ok(Scenario::HeavyBall),
            "packet_demo" => Ok(Scenario::PacketDemo),
            other => Err(format!("unknown scenario {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Jvp,
    Vjp,
    Full,
    Packet,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jvp" => Ok(Mode::Jvp),
            "vjp" => Ok(Mode::Vjp),
            "full" => Ok(Mode::Full),
            "packet" => Ok(Mode::Packet),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    /// The two-element diagonal demonstration packet.
    TwoBranch,
    /// Packets along the lasso forward-backward trajectory.
    Lasso,
    /// Random two-element packets with vanishing perturbations.
    Synthetic,
}

impl std::str::FromStr for PacketKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two_branch" => Ok(PacketKind::TwoBranch),
            "lasso" => Ok(PacketKind::Lasso),
            "synthetic" => Ok(PacketKind::Synthetic),
            other => Err(format!("unknown packet kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub reps: u64,
    pub iters: u64,
    pub seed: u64,
    pub mode: Mode,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub ratio: Option<f64>,
    pub theta: Option<f64>,
    pub lambda: Option<f64>,
    pub packet_kind: PacketKind,
    pub budget: u64,
}

pub const DEFAULT_BUDGET: u64 = 10_000_000;

impl ExperimentConfig {
    /// Desk-scale defaults per scenario; every field can be overridden.
    pub fn new(scenario: Scenario) -> Self {
        let (reps, iters) = match scenario {
            Scenario::HeavyBall => (1, 500),
            Scenario::PacketDemo => (1, 80),
            _ => (20, 1000),
        };
        ExperimentConfig {
            scenario,
            reps,
            iters,
            seed: 0,
            mode: match scenario {
                Scenario::Sics | Scenario::HeavyBall => Mode::Jvp,
                Scenario::PacketDemo => Mode::Packet,
                _ => Mode::Full,
            },
            n: None,
            p: None,
            ratio: None,
            theta: None,
            lambda: None,
            packet_kind: PacketKind::TwoBranch,
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("budget exceeded: {steps} solver steps requested, cap is {budget}")]
    Budget { steps: u64, budget: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("repetition {rep} failed: {source}")]
    Propagation {
        rep: u64,
        #[source]
        source: PropagationError,
    },
}

impl RunError {
    /// Configuration-class errors exit with code 2, numerical ones with 3.
    pub fn is_config_error(&self) -> bool {
        matches!(self, RunError::Budget { .. } | RunError::InvalidConfig(_))
    }
}

/// Reference targets one mode-run is compared against. Oracle scenarios
/// carry the dense Jacobian; self-referencing ones carry the target of the
/// mode actually run.
struct Reference {
    state: DVector<f64>,
    jacobian: Option<DMatrix<f64>>,
    tangent: Option<DVector<f64>>,
}

impl Reference {
    fn from_oracle(state: DVector<f64>, jacobian: DMatrix<f64>) -> Self {
        Reference {
            state,
            jacobian: Some(jacobian),
            tangent: None,
        }
    }

    fn dense(&self) -> &DMatrix<f64> {
        self.jacobian
            .as_ref()
            .expect("mode requires a dense reference Jacobian")
    }
}

fn unit_tangent(m: usize) -> DVector<f64> {
    DVector::from_element(m, 1.0 / (m as f64).sqrt())
}

fn unit_adjoint(p: usize) -> DVector<f64> {
    DVector::from_element(p, 1.0 / (p as f64).sqrt())
}

fn record(scenario: &str, rep: u64, iter: u64, metric: Metric, value: f64) -> ExperimentRecord {
    ExperimentRecord {
        scenario: scenario.to_string(),
        rep,
        iter,
        metric,
        value,
    }
}

/// Diagnostic row emitted when a repetition aborts on a numerical failure
/// outside the Heavy-Ball scenario.
fn diagnostic(scenario: &str, rep: u64, iter: u64) -> ExperimentRecord {
    record(scenario, rep, iter, Metric::IterateDist, f64::INFINITY)
}

/// Run one propagation mode against a reference; iterate distances are
/// always emitted, the derivative metric depends on the mode.
fn run_mode(
    scenario: &str,
    rep: u64,
    problem: &dyn FixedPointProblem,
    theta: &DVector<f64>,
    reference: &Reference,
    mode: Mode,
    iters: u64,
) -> Result<Vec<ExperimentRecord>, PropagationError> {
    let (p, m) = problem.dims();
    let k = iters as usize;
    let mut out = Vec::with_capacity(2 * (k + 1));
    match mode {
        Mode::Full => {
            let iterates = run_iterates(problem, theta, k)?;
            let jacobians = full_jacobian_sequence(problem, theta, k)?;
            let target = reference.dense();
            for (i, (x, jac)) in iterates.iter().zip(&jacobians).enumerate() {
                out.push(record(
                    scenario,
                    rep,
                    i as u64,
                    Metric::IterateDist,
                    (x - &reference.state).norm(),
                ));
                out.push(record(
                    scenario,
                    rep,
                    i as u64,
                    Metric::JacobianDist,
                    (jac - target).norm(),
                ));
            }
        }
        Mode::Jvp => {
            let td = unit_tangent(m);
            let target = match (&reference.tangent, &reference.jacobian) {
                (Some(t), _) => t.clone(),
                (None, Some(j)) => j * &td,
                (None, None) => unreachable!("reference carries one target"),
            };
            let run = jvp_sequence(problem, theta, &td, k)?;
            for (i, (x, xdot)) in run.iterates.iter().zip(&run.tangents).enumerate() {
                out.push(record(
                    scenario,
                    rep,
                    i as u64,
                    Metric::IterateDist,
                    (x - &reference.state).norm(),
                ));
                out.push(record(
                    scenario,
                    rep,
                    i as u64,
                    Metric::JacobianDist,
                    (xdot - &target).norm(),
                ));
            }
        }
        Mode::Vjp => {
            let wb = unit_adjoint(p);
            let target = reference.dense().tr_mul(&wb);
            let iterates = run_iterates(problem, theta, k)?;
            for (i, x) in iterates.iter().enumerate() {
                out.push(record(
                    scenario,
                    rep,
                    i as u64,
                    Metric::IterateDist,
                    (x - &reference.state).norm(),
                ));
                let adjoint = vjp_reverse(problem, theta, &wb, i)?;
                out.push(record(
                    scenario,
                    rep,
                    i as u64,
                    Metric::JacobianDist,
                    (adjoint - &target).norm(),
                ));
            }
        }
        Mode::Packet => {
            let iterates = run_iterates(problem, theta, k)?;
            let sets = packet_sequence(problem, theta, k, 1e-9)?;
            let target = reference.dense();
            for (i, (x, set)) in iterates.iter().zip(&sets).enumerate() {
                out.push(record(
                    scenario,
                    rep,
                    i as u64,
                    Metric::IterateDist,
                    (x - &reference.state).norm(),
                ));
                // One-sided gap to the reference Jacobian; the propagated
                // sets of the qualified scenarios collapse onto it.
                let gap = set
                    .points()
                    .iter()
                    .map(|pt| (pt - target).norm())
                    .fold(0.0_f64, f64::max);
                out.push(record(scenario, rep, i as u64, Metric::SetGap, gap));
            }
        }
    }
    Ok(out)
}

/// Reference from a three-times-longer run of the same propagation, for
/// scenarios without a closed-form Jacobian.
fn self_reference(
    problem: &dyn FixedPointProblem,
    theta: &DVector<f64>,
    iters: u64,
    mode: Mode,
) -> Result<Reference, PropagationError> {
    let k = (iters as usize) * 3;
    let (_, m) = problem.dims();
    match mode {
        Mode::Jvp => {
            let run = jvp_sequence(problem, theta, &unit_tangent(m), k)?;
            Ok(Reference {
                state: run.iterates.last().expect("k + 1 iterates").clone(),
                jacobian: None,
                tangent: Some(run.tangents.last().expect("k + 1 tangents").clone()),
            })
        }
        Mode::Full | Mode::Vjp | Mode::Packet => {
            let iterates = run_iterates(problem, theta, k)?;
            let jacobian = full_jacobian_sequence(problem, theta, k)?
                .pop()
                .expect("k + 1 jacobians");
            Ok(Reference {
                state: iterates.last().expect("k + 1 iterates").clone(),
                jacobian: Some(jacobian),
                tangent: None,
            })
        }
    }
}

fn ridge_records(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, RunError> {
    let n = cfg.n.unwrap_or(50);
    let p = cfg.p.unwrap_or(30);
    let theta = cfg.theta.unwrap_or(0.05);
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let instance = make_ridge(n, p, theta, rep_seed(cfg.seed, rep))?;
            let problem = instance.problem();
            let reference =
                Reference::from_oracle(instance.oracle_solution(), instance.oracle_jacobian());
            match run_mode(
                "ridge",
                rep,
                &problem,
                &instance.theta_vector(),
                &reference,
                cfg.mode,
                cfg.iters,
            ) {
                Ok(rows) => Ok(rows),
                Err(PropagationError::Divergence { step }) => {
                    Ok(vec![diagnostic("ridge", rep, step as u64)])
                }
                Err(e) => Err(RunError::Propagation { rep, source: e }),
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|nested| nested.into_iter().flatten().collect())
}

fn lasso_records(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, RunError> {
    let n = cfg.n.unwrap_or(20);
    let p = cfg.p.unwrap_or(50);
    let ratio = cfg.ratio.unwrap_or(0.2);
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let instance = make_lasso(n, p, ratio, rep_seed(cfg.seed, rep))?;
            let oracle = instance.oracle()?;
            let problem = instance.problem();
            let reference =
                Reference::from_oracle(oracle.solution.clone(), oracle.jacobian.clone());
            match run_mode(
                "lasso",
                rep,
                &problem,
                &instance.theta_vector(),
                &reference,
                cfg.mode,
                cfg.iters,
            ) {
                Ok(rows) => Ok(rows),
                Err(PropagationError::Divergence { step }) => {
                    Ok(vec![diagnostic("lasso", rep, step as u64)])
                }
                Err(e) => Err(RunError::Propagation { rep, source: e }),
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|nested| nested.into_iter().flatten().collect())
}

fn sics_records(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, RunError> {
    let n = cfg.n.unwrap_or(10);
    let theta = cfg.theta.unwrap_or(0.1);
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let instance = make_sics(n, theta, rep_seed(cfg.seed, rep))?;
            let problem = instance.problem(1.0);
            let theta_vec = instance.theta_vector();
            let run_one = || -> Result<Vec<ExperimentRecord>, PropagationError> {
                let reference = self_reference(&problem, &theta_vec, cfg.iters, cfg.mode)?;
                run_mode(
                    "sics",
                    rep,
                    &problem,
                    &theta_vec,
                    &reference,
                    cfg.mode,
                    cfg.iters,
                )
            };
            match run_one() {
                Ok(rows) => Ok(rows),
                Err(PropagationError::Divergence { step }) => {
                    Ok(vec![diagnostic("sics", rep, step as u64)])
                }
                Err(e) => Err(RunError::Propagation { rep, source: e }),
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|nested| nested.into_iter().flatten().collect())
}

fn trend_records(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, RunError> {
    let p = cfg.p.unwrap_or(40);
    let lambda = cfg.lambda.unwrap_or(3.0);
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let instance = make_trend_filter(p, lambda, rep_seed(cfg.seed, rep))?;
            let spec = instance.admm_spec(0.5);
            let dr = admm_as_dual_dr(&spec, &AdmmState::zero(&spec));
            let theta_vec = instance.theta_vector();
            let run_one = || -> Result<Vec<ExperimentRecord>, PropagationError> {
                let reference = self_reference(&dr, &theta_vec, cfg.iters, cfg.mode)?;
                run_mode(
                    "trend",
                    rep,
                    &dr,
                    &theta_vec,
                    &reference,
                    cfg.mode,
                    cfg.iters,
                )
            };
            match run_one() {
                Ok(rows) => Ok(rows),
                Err(PropagationError::Divergence { step }) => {
                    Ok(vec![diagnostic("trend", rep, step as u64)])
                }
                Err(e) => Err(RunError::Propagation { rep, source: e }),
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|nested| nested.into_iter().flatten().collect())
}

/// Both curves of the divergence experiment: Heavy-Ball tangents (growing)
/// and plain gradient-descent tangents (bounded), initialized at the
/// optimum. Rows after a tangent overflow carry the `inf` sentinel.
fn heavy_ball_records(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, RunError> {
    let scenario = HbCounterexample::new();
    let theta = DVector::from_vec(vec![0.0]);
    let td = DVector::from_vec(vec![1.0]);
    let mut out = Vec::new();
    for rep in 0..cfg.reps {
        for (name, run) in [
            (
                "heavy_ball",
                jvp_sequence(&scenario.heavy_ball(), &theta, &td, cfg.iters as usize),
            ),
            (
                "heavy_ball_gd",
                jvp_sequence(&scenario.gradient_descent(), &theta, &td, cfg.iters as usize),
            ),
        ] {
            let run = run.map_err(|source| RunError::Propagation { rep, source })?;
            for (i, tangent) in run.tangents.iter().enumerate() {
                out.push(record(
                    name,
                    rep,
                    i as u64,
                    Metric::TangentNorm,
                    tangent.norm(),
                ));
            }
            for i in run.tangents.len()..=cfg.iters as usize {
                out.push(record(name, rep, i as u64, Metric::TangentNorm, f64::INFINITY));
            }
        }
    }
    Ok(out)
}

fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            out[(i, j)] = rng.next_gaussian();
        }
    }
    out
}

/// Set-valued demonstrations: the propagated set's one-sided gap to the
/// fixed set of the limiting packet, measured by branch and bound.
fn packet_demo_records(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, RunError> {
    let k = cfg.iters as usize;
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<ExperimentRecord>, RunError> {
            let mut out = Vec::with_capacity(k + 1);
            match cfg.packet_kind {
                PacketKind::TwoBranch => {
                    let packet = piggyback::problems::two_branch_demo_packet();
                    let scale = 1.0 + packet.attractor_radius();
                    let prune = 1e-3 * scale;
                    let mut set =
                        MatrixSet::new(vec![DMatrix::zeros(2, 1)], prune).expect("seed set");
                    out.push(record(
                        "packet_demo",
                        rep,
                        0,
                        Metric::SetGap,
                        attractor_gap(&packet, &set, 1e-10),
                    ));
                    for i in 0..k {
                        set = apply_elements(packet.elements(), &set, prune, 10_000)
                            .map_err(|e| RunError::Propagation {
                                rep,
                                source: PropagationError::Set(e),
                            })?;
                        out.push(record(
                            "packet_demo",
                            rep,
                            (i + 1) as u64,
                            Metric::SetGap,
                            attractor_gap(&packet, &set, 1e-10),
                        ));
                    }
                }
                PacketKind::Lasso => {
                    let n = cfg.n.unwrap_or(20);
                    let p = cfg.p.unwrap_or(50);
                    let ratio = cfg.ratio.unwrap_or(0.2);
                    let instance = make_lasso(n, p, ratio, rep_seed(cfg.seed, rep))?;
                    let problem = instance.problem();
                    let theta_vec = instance.theta_vector();
                    let oracle = instance.oracle()?;
                    let elements = problem.packet_elements(&oracle.solution, &theta_vec);
                    let rho = measured_rho(&elements);
                    let limit = MatrixPacket::new(elements, rho.min(1.0 - 1e-12))
                        .map_err(|e| RunError::InvalidConfig(e.to_string()))?;
                    let (dims_p, dims_m) = problem.dims();
                    let mut set = MatrixSet::new(vec![DMatrix::zeros(dims_p, dims_m)], 1e-7)
                        .expect("seed set");
                    let iterates = run_iterates(&problem, &theta_vec, k)
                        .map_err(|source| RunError::Propagation { rep, source })?;
                    out.push(record(
                        "packet_demo",
                        rep,
                        0,
                        Metric::SetGap,
                        attractor_gap(&limit, &set, 1e-10),
                    ));
                    for (i, x) in iterates.iter().take(k).enumerate() {
                        let elements = problem.packet_elements(x, &theta_vec);
                        set = apply_elements(&elements, &set, 1e-7, 10_000).map_err(|e| {
                            RunError::Propagation {
                                rep,
                                source: PropagationError::Set(e),
                            }
                        })?;
                        out.push(record(
                            "packet_demo",
                            rep,
                            (i + 1) as u64,
                            Metric::SetGap,
                            attractor_gap(&limit, &set, 1e-10),
                        ));
                    }
                }
                PacketKind::Synthetic => {
                    let mut rng = SplitMix64::new(rep_seed(cfg.seed, rep));
                    let p = 2;
                    let m = 1;
                    let rho = 0.3 + 0.2 * rng.next_f64();
                    let elems: Vec<JacobianElement> = (0..2)
                        .map(|_| {
                            let raw = random_matrix(&mut rng, p, p);
                            let norm = operator_norm(&raw);
                            let target = rho * (0.5 + 0.5 * rng.next_f64());
                            JacobianElement::new(
                                raw * (target / norm),
                                random_matrix(&mut rng, p, m),
                            )
                        })
                        .collect();
                    let limit = MatrixPacket::new(elems.clone(), rho)
                        .map_err(|e| RunError::InvalidConfig(e.to_string()))?;
                    let scale = 1.0 + limit.attractor_radius();
                    let prune = 2e-4 * scale;
                    let directions: Vec<DMatrix<f64>> = elems
                        .iter()
                        .map(|_| {
                            let raw = random_matrix(&mut rng, p, m);
                            let norm = raw.norm();
                            raw / norm
                        })
                        .collect();
                    let mut set = MatrixSet::new(vec![random_matrix(&mut rng, p, m)], prune)
                        .expect("seed set");
                    let bb_tol = 1e-6 * scale;
                    out.push(record(
                        "packet_demo",
                        rep,
                        0,
                        Metric::SetGap,
                        attractor_gap(&limit, &set, bb_tol),
                    ));
                    for i in 0..k {
                        let eps = 0.3 * scale * rho.sqrt().powi(i as i32);
                        let perturbed: Vec<JacobianElement> = elems
                            .iter()
                            .zip(&directions)
                            .map(|(e, u)| JacobianElement::new(e.a.clone(), &e.b + u * eps))
                            .collect();
                        set = apply_elements(&perturbed, &set, prune, 10_000).map_err(|e| {
                            RunError::Propagation {
                                rep,
                                source: PropagationError::Set(e),
                            }
                        })?;
                        out.push(record(
                            "packet_demo",
                            rep,
                            (i + 1) as u64,
                            Metric::SetGap,
                            attractor_gap(&limit, &set, bb_tol),
                        ));
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|nested| nested.into_iter().flatten().collect())
}

/// Run the configured experiment and return the raw records, sorted by
/// their CSV key. Deterministic for a fixed configuration: repetitions run
/// in parallel but derive their seeds and sort order independently.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, RunError> {
    if cfg.reps == 0 || cfg.iters == 0 {
        return Err(RunError::InvalidConfig(
            "reps and iters must be at least 1".into(),
        ));
    }
    let steps = cfg.reps.saturating_mul(cfg.iters);
    if steps > cfg.budget {
        return Err(RunError::Budget {
            steps,
            budget: cfg.budget,
        });
    }
    let mut records = match cfg.scenario {
        Scenario::Ridge => ridge_records(cfg)?,
        Scenario::Lasso => lasso_records(cfg)?,
        Scenario::Sics => sics_records(cfg)?,
        Scenario::Trend => trend_records(cfg)?,
        Scenario::HeavyBall => heavy_ball_records(cfg)?,
        Scenario::PacketDemo => packet_demo_records(cfg)?,
    };
    records.sort_by(|a, b| {
        (&a.scenario, a.rep, a.iter, a.metric).cmp(&(&b.scenario, b.rep, b.iter, b.metric))
    });
    Ok(records)
}
