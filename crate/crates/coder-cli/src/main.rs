//! `coder` — benchmark harness for the cyclic dual-averaging solvers.
//!
//! Subcommands: `run` (solver execution with trace capture), `reference`
//! (high-accuracy certified solutions), `lipschitz` (constant estimation and
//! synthetic sweeps). Exit codes: 0 success, 2 config error, 3 data error,
//! 4 solver abort, 5 reference budget exhausted.

mod config;
mod runner;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, LMode};

#[derive(Parser)]
#[command(name = "coder", version, about = "Cyclic block-coordinate dual-averaging benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonDataArgs {
    /// LibSVM dataset path (`.gz` accepted).
    #[arg(long)]
    data: Option<String>,
    /// Dimension hint when the file underreports feature indices.
    #[arg(long)]
    d_hint: Option<usize>,
    /// Loss: logistic | squared.
    #[arg(long)]
    loss: Option<String>,
    /// Feature normalization: none | unit-row | col-max-abs.
    #[arg(long)]
    normalize: Option<String>,
}

#[derive(Args, Clone)]
struct RegArgs {
    /// Regularizer: zero | l1 | ridge | elastic-net.
    #[arg(long)]
    reg: Option<String>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a solver and write a CSV trace plus a JSON sidecar.
    Run {
        /// JSON experiment config; flags overlay individual fields.
        #[arg(long)]
        config: Option<String>,
        #[command(flatten)]
        data: CommonDataArgs,
        #[command(flatten)]
        reg: RegArgs,
        /// Solver id (run with an unknown id to list valid ones).
        #[arg(long)]
        solver: Option<String>,
        /// Smoothness constant: auto | <number> | sweep:LO..HI (powers of two
        /// of the auto estimate).
        #[arg(long, visible_alias = "L")]
        l: Option<String>,
        #[arg(long)]
        block_size: Option<usize>,
        /// Inner iterations per epoch for the variance-reduced solvers.
        #[arg(long, visible_alias = "K")]
        k: Option<usize>,
        /// Outer-iteration / epoch budget.
        #[arg(long, visible_alias = "epochs")]
        iters: Option<usize>,
        /// Full-gradient-unit budget.
        #[arg(long)]
        budget_units: Option<f64>,
        /// Wall-clock cap in seconds (solver compute only).
        #[arg(long)]
        wall_cap_s: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Reference JSON (from `coder reference`) enabling the gap column.
        #[arg(long)]
        reference: Option<String>,
        /// Output path prefix (writes <out>.csv and <out>.json).
        #[arg(long)]
        out: Option<String>,
    },
    /// Compute a certified high-accuracy solution and store it as JSON.
    Reference {
        #[command(flatten)]
        data: CommonDataArgs,
        #[command(flatten)]
        reg: RegArgs,
        /// Certified gap tolerance.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Oracle-unit budget.
        #[arg(long, default_value_t = 1e7)]
        budget_units: f64,
        #[arg(long)]
        out: String,
    },
    /// Estimate the classical and summary constants for a dataset, or sweep
    /// them over synthetic instance sizes.
    Lipschitz {
        #[command(flatten)]
        data: CommonDataArgs,
        #[arg(long)]
        block_size: Option<usize>,
        /// Synthetic sweep over n (comma-separated sizes) at fixed d.
        #[arg(long)]
        sweep_n: Option<String>,
        /// Synthetic sweep over d (comma-separated sizes) at fixed n.
        #[arg(long)]
        sweep_d: Option<String>,
        /// Fixed n for a d-sweep (or the single synthetic instance).
        #[arg(long)]
        n: Option<usize>,
        /// Fixed d for an n-sweep (or the single synthetic instance).
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            data,
            reg,
            solver,
            l,
            block_size,
            k,
            iters,
            budget_units,
            wall_cap_s,
            seed,
            reference,
            out,
        } => (|| -> Result<(), runner::CliError> {
            let mut cfg: ExperimentConfig = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| runner::CliError::Config(format!("reading {path}: {e}")))?;
                    serde_json::from_str(&text)
                        .map_err(|e| runner::CliError::Config(format!("parsing {path}: {e}")))?
                }
                None => ExperimentConfig::default(),
            };
            if data.data.is_some() {
                cfg.data = data.data;
            }
            if data.d_hint.is_some() {
                cfg.d_hint = data.d_hint;
            }
            if data.loss.is_some() {
                cfg.loss = data.loss;
            }
            if data.normalize.is_some() {
                cfg.normalize = data.normalize;
            }
            if reg.reg.is_some() {
                cfg.reg = reg.reg;
            }
            if reg.lambda1.is_some() {
                cfg.lambda1 = reg.lambda1;
            }
            if reg.lambda2.is_some() {
                cfg.lambda2 = reg.lambda2;
            }
            if solver.is_some() {
                cfg.solver = solver;
            }
            if let Some(spec) = l {
                cfg.l = Some(LMode::parse(&spec).map_err(runner::CliError::Config)?);
            }
            if block_size.is_some() {
                cfg.block_size = block_size;
            }
            if k.is_some() {
                cfg.k_inner = k;
            }
            if iters.is_some() {
                cfg.budget_iters = iters;
            }
            if budget_units.is_some() {
                cfg.budget_units = budget_units;
            }
            if wall_cap_s.is_some() {
                cfg.wall_cap_s = wall_cap_s;
            }
            if seed.is_some() {
                cfg.seed = seed;
            }
            if reference.is_some() {
                cfg.reference = reference;
            }
            if out.is_some() {
                cfg.out = out;
            }
            let resolved = cfg.resolve().map_err(runner::CliError::Config)?;
            runner::cmd_run(resolved)
        })(),
        Command::Reference { data, reg, tol, budget_units, out } => {
            runner::cmd_reference(data, reg, tol, budget_units, out)
        }
        Command::Lipschitz {
            data,
            block_size,
            sweep_n,
            sweep_d,
            n,
            d,
            seed,
            out,
        } => runner::cmd_lipschitz(data, block_size, sweep_n, sweep_d, n, d, seed, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
