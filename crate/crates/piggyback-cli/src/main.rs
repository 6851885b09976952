//! Command-line entry point.
//!
//! `run <scenario>` executes an experiment and writes CSV/SVG artifacts;
//! `aggregate` turns a raw CSV into a summary CSV; `plot` renders summary
//! rows to SVG charts. Exit codes: 0 on success, 2 on configuration errors,
//! 3 on numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use piggyback_cli::aggregate::aggregate;
use piggyback_cli::config::FileOptions;
use piggyback_cli::records::{
    parse_raw_csv, parse_summary_csv, render_raw_csv, render_summary_csv, write_file,
};
use piggyback_cli::runner::{
    run_experiment, ExperimentConfig, Mode, PacketKind, Scenario, DEFAULT_BUDGET,
};
use piggyback_cli::svg::write_svg;

#[derive(Parser)]
#[command(
    name = "piggyback",
    about = "Convergence experiments for nonsmooth piggyback differentiation of fixed-point solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario over seeded repetitions and write artifacts.
    Run(RunArgs),
    /// Aggregate a raw record CSV into a median/decile summary CSV.
    Aggregate {
        /// Raw records written by `run`.
        raw: PathBuf,
        /// Output summary path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a summary CSV into one SVG chart per scenario and metric.
    Plot {
        /// Summary written by `run` or `aggregate`.
        summary: PathBuf,
        /// Output directory for the charts.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// ridge | lasso | sics | trend | heavy_ball | packet_demo
    scenario: String,
    /// Configuration file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of repetitions with derived seeds.
    #[arg(long)]
    reps: Option<u64>,
    /// Solver iterations per repetition.
    #[arg(long)]
    iters: Option<u64>,
    /// Base seed for the data streams.
    #[arg(long)]
    seed: Option<u64>,
    /// jvp | vjp | full | packet (defaults per scenario).
    #[arg(long)]
    mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of {csv, svg}.
    #[arg(long)]
    emit: Option<String>,
    /// Rows of the design matrix (ridge, lasso) or matrix order (sics).
    #[arg(long)]
    n: Option<usize>,
    /// Columns of the design matrix (ridge, lasso) or signal length (trend).
    #[arg(long)]
    p: Option<usize>,
    /// Regularization ratio theta / theta_max (lasso).
    #[arg(long)]
    ratio: Option<f64>,
    /// Regularization strength (ridge, sics).
    #[arg(long)]
    theta: Option<f64>,
    /// l1 penalty (trend).
    #[arg(long)]
    lambda: Option<f64>,
    /// two_branch | lasso | synthetic (packet_demo only).
    #[arg(long)]
    packet_kind: Option<String>,
    /// Budget guard on reps * iters.
    #[arg(long)]
    budget: Option<u64>,
}

fn config_error(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(2)
}

fn numerical_error(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(3)
}

fn build_config(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf, bool, bool), String> {
    let scenario: Scenario = args.scenario.parse()?;
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            FileOptions::from_text(&text).map_err(|e| e.to_string())?
        }
        None => FileOptions::default(),
    };
    let mut cfg = ExperimentConfig::new(scenario);
    if let Some(v) = file.reps {
        cfg.reps = v;
    }
    if let Some(v) = file.iters {
        cfg.iters = v;
    }
    if let Some(v) = file.seed {
        cfg.seed = v;
    }
    if let Some(v) = &file.mode {
        cfg.mode = v.parse::<Mode>()?;
    }
    if let Some(v) = file.n {
        cfg.n = Some(v);
    }
    if let Some(v) = file.p {
        cfg.p = Some(v);
    }
    if let Some(v) = file.ratio {
        cfg.ratio = Some(v);
    }
    if let Some(v) = file.theta {
        cfg.theta = Some(v);
    }
    if let Some(v) = file.lambda {
        cfg.lambda = Some(v);
    }
    if let Some(v) = &file.packet_kind {
        cfg.packet_kind = v.parse::<PacketKind>()?;
    }
    if let Some(v) = file.budget {
        cfg.budget = v;
    }

    if let Some(v) = args.reps {
        cfg.reps = v;
    }
    if let Some(v) = args.iters {
        cfg.iters = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.mode {
        cfg.mode = v.parse::<Mode>()?;
    }
    if let Some(v) = args.n {
        cfg.n = Some(v);
    }
    if let Some(v) = args.p {
        cfg.p = Some(v);
    }
    if let Some(v) = args.ratio {
        cfg.ratio = Some(v);
    }
    if let Some(v) = args.theta {
        cfg.theta = Some(v);
    }
    if let Some(v) = args.lambda {
        cfg.lambda = Some(v);
    }
    if let Some(v) = &args.packet_kind {
        cfg.packet_kind = v.parse::<PacketKind>()?;
    }
    if let Some(v) = args.budget {
        cfg.budget = v;
    } else if cfg.budget == 0 {
        cfg.budget = DEFAULT_BUDGET;
    }

    let out_dir = args
        .out
        .clone()
        .or_else(|| file.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let emit = args
        .emit
        .clone()
        .or_else(|| file.emit.clone())
        .unwrap_or_else(|| "csv,svg".to_string());
    let mut emit_csv = false;
    let mut emit_svg = false;
    for part in emit.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part {
            "csv" => emit_csv = true,
            "svg" => emit_svg = true,
            other => return Err(format!("unknown emit target {other:?}")),
        }
    }
    Ok((cfg, out_dir, emit_csv, emit_svg))
}

fn run_command(args: &RunArgs) -> ExitCode {
    let (cfg, out_dir, emit_csv, emit_svg) = match build_config(args) {
        Ok(parts) => parts,
        Err(message) => return config_error(message),
    };
    let records = match run_experiment(&cfg) {
        Ok(records) => records,
        Err(e) if e.is_config_error() => return config_error(e),
        Err(e) => return numerical_error(e),
    };
    let summary = aggregate(&records);
    let name = cfg.scenario.name();
    if emit_csv {
        let raw_path = out_dir.join(format!("{name}_raw.csv"));
        if let Err(e) = write_file(&raw_path, &render_raw_csv(&records)) {
            return numerical_error(e);
        }
        let summary_path = out_dir.join(format!("{name}_summary.csv"));
        if let Err(e) = write_file(&summary_path, &render_summary_csv(&summary)) {
            return numerical_error(e);
        }
        println!("wrote {}", raw_path.display());
        println!("wrote {}", summary_path.display());
    }
    if emit_svg {
        match write_svg(&summary, &out_dir) {
            Ok(paths) => {
                for path in paths {
                    println!("wrote {}", path.display());
                }
            }
            Err(e) => return numerical_error(e),
        }
    }
    ExitCode::SUCCESS
}

fn aggregate_command(raw: &PathBuf, out: &PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(raw) {
        Ok(text) => text,
        Err(e) => return config_error(format!("cannot read {}: {e}", raw.display())),
    };
    let records = match parse_raw_csv(&text) {
        Ok(records) => records,
        Err(e) => return config_error(e),
    };
    let summary = aggregate(&records);
    match write_file(out, &render_summary_csv(&summary)) {
        Ok(()) => {
            println!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => numerical_error(e),
    }
}

fn plot_command(summary_path: &PathBuf, out: &PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(summary_path) {
        Ok(text) => text,
        Err(e) => return config_error(format!("cannot read {}: {e}", summary_path.display())),
    };
    let summary = match parse_summary_csv(&text) {
        Ok(summary) => summary,
        Err(e) => return config_error(e),
    };
    if summary.is_empty() {
        return config_error("summary contains no rows");
    }
    match write_svg(&summary, out) {
        Ok(paths) => {
            for path in paths {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => numerical_error(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => run_command(args),
        Command::Aggregate { raw, out } => aggregate_command(raw, out),
        Command::Plot { summary, out } => plot_command(summary, out),
    }
}
