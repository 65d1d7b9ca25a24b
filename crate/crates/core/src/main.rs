use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

use nonlocal_dbc::analysis::{
    counterexample_sequence, estimate_beta_p, fit_decay, spectral_gap_beta, Column, DecayModel,
};
use nonlocal_dbc::cli::config::ExperimentConfig;
use nonlocal_dbc::cli::csv::{
    full_field_csv, grid_csv, num, parse_strip_values, parse_trajectory_csv, strip_field_csv,
    write_atomic,
};
use nonlocal_dbc::cli::experiment::{run_experiment, validate, Experiment};
use nonlocal_dbc::elliptic::{
    energy, extend_linear, extend_plaplace, interior_residual, EnergyReport,
};
use nonlocal_dbc::{Error, Result};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  configuration error (invalid or unreadable config, bad arguments)
  3  solver error (no convergence, singular system, aborted run)
  4  I/O error (reading inputs or writing outputs)

Errors are reported on stderr as `error[<category>]: <message>`.";

#[derive(Parser, Debug)]
#[command(name = "nldbc", version, about = "Nonlocal diffusion with dynamical boundary conditions", after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output CSV path (overrides the config).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output SVG path (overrides the config).
    #[arg(long, global = true, value_name = "PATH")]
    svg: Option<PathBuf>,
    /// Run seed (overrides the config).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Only print errors and requested data.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump the grid as CSV and report operator statistics.
    Grid,
    /// Extend strip data into the interior.
    SolveElliptic {
        /// Strip values as `index,value` rows; the initial preset is used when omitted.
        #[arg(long, value_name = "PATH")]
        strip: Option<PathBuf>,
    },
    /// Evolve the configured problem and write its trajectory.
    Evolve,
    /// Compute the spectral gap beta and its optimiser.
    Beta {
        /// Random restarts of the descent used when p != 2.
        #[arg(long, default_value_t = 8)]
        restarts: usize,
    },
    /// Quotients of the shrinking two-bump sequence (needs r = R).
    Counterexample {
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        n: Vec<usize>,
    },
    /// Fit a decay model to a trajectory CSV.
    DecayFit {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Column, optionally raised to a power, e.g. `d2^2`.
        #[arg(long, default_value = "d2^2")]
        column: String,
        /// `exponential` or `polynomial`.
        #[arg(long, default_value = "exponential")]
        model: String,
        /// Fit window `lo,hi`; the whole run when omitted.
        #[arg(long, value_delimiter = ',', value_name = "LO,HI")]
        window: Option<Vec<f64>>,
    },
    /// Run consistency checks on the configured problem.
    Validate,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Error::config("config", format!("{}: {io}", path.display())),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    if common.svg.is_some() {
        cfg.svg = common.svg.clone();
    }
    Ok(cfg)
}

/// Writes to `path` atomically, or to stdout without one.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let say = |line: String| {
        if !common.quiet {
            println!("{line}");
        }
    };
    match cli.command {
        Command::Grid => {
            let cfg = load_config(common)?;
            let exp = Experiment::new(&cfg)?;
            let op = &exp.op;
            let grid = op.grid();
            emit(cfg.out.as_deref(), &grid_csv(grid))?;
            let degrees = op.d_full();
            let dmin = degrees.iter().copied().fold(f64::INFINITY, f64::min);
            let dmax = degrees.iter().copied().fold(0.0, f64::max);
            let stats = format!(
                "nodes={},interior={},strip={},nnz={},degree_min={:.6e},degree_max={:.6e}",
                grid.len(),
                grid.interior_indices().len(),
                grid.strip_indices().len(),
                op.weights().nnz(),
                dmin,
                dmax
            );
            if cfg.out.is_some() {
                say(stats);
            } else if !common.quiet {
                eprintln!("{stats}");
            }
        }
        Command::SolveElliptic { strip } => {
            let cfg = load_config(common)?;
            let exp = Experiment::new(&cfg)?;
            let (op, p) = (&exp.op, exp.spec.p());
            let g = match strip {
                Some(path) => parse_strip_values(op.grid(), &std::fs::read_to_string(path)?)?,
                None => exp.initial_data()?,
            };
            let (u, report) = if p == 2.0 {
                let u = extend_linear(op, &g)?;
                let report = EnergyReport {
                    energy: energy(op, &u, 2.0),
                    grad_norm: interior_residual(op, &u, 2.0),
                    iterations: 1,
                    converged: true,
                };
                (u, report)
            } else {
                extend_plaplace(op, &g, p, exp.spec.solver)?
            };
            emit(cfg.out.as_deref(), &full_field_csv(op.grid(), &u))?;
            let line = format!(
                "energy={},grad_norm={:.3e},iterations={},converged={}",
                num(report.energy),
                report.grad_norm,
                report.iterations,
                report.converged
            );
            if cfg.out.is_some() {
                say(line);
            } else if !common.quiet {
                eprintln!("{line}");
            }
        }
        Command::Evolve => {
            let cfg = load_config(common)?;
            if cfg.out.is_none() {
                return Err(Error::config(
                    "out",
                    "evolve needs an output path (--out or config)",
                ));
            }
            let summary = run_experiment(&cfg)?;
            say(summary.line());
        }
        Command::Beta { restarts } => {
            let cfg = load_config(common)?;
            let exp = Experiment::new(&cfg)?;
            let p = exp.spec.p();
            let gap = if p == 2.0 {
                spectral_gap_beta(&exp.op)?
            } else {
                estimate_beta_p(&exp.op, p, restarts, cfg.tol.max(1e-10), cfg.seed)?
            };
            if let Some(path) = &cfg.out {
                write_atomic(path, &strip_field_csv(exp.op.grid(), &gap.mode))?;
            }
            println!("beta={},p={p},method={:?}", num(gap.beta), gap.method);
        }
        Command::Counterexample { n } => {
            let cfg = load_config(common)?;
            let exp = Experiment::new(&cfg)?;
            let seq = counterexample_sequence(&exp.op, &n)?;
            let mut text = String::from("n,quotient\n");
            for (n, q) in &seq {
                text.push_str(&format!("{n},{}\n", num(*q)));
            }
            emit(cfg.out.as_deref(), &text)?;
            if cfg.out.is_some() {
                if let (Some(first), Some(last)) = (seq.first(), seq.last()) {
                    say(format!("ratio={:.6e}", last.1 / first.1));
                }
            }
        }
        Command::DecayFit {
            input,
            column,
            model,
            window,
        } => {
            let traj = parse_trajectory_csv(&std::fs::read_to_string(&input)?)?;
            let column: Column = column
                .parse()
                .map_err(|_| Error::config("column", format!("unknown column `{column}`")))?;
            let model: DecayModel = model
                .parse()
                .map_err(|_| Error::config("model", format!("unknown model `{model}`")))?;
            let window = match window {
                Some(w) if w.len() == 2 => (w[0], w[1]),
                Some(_) => return Err(Error::config("window", "expected `lo,hi`")),
                None => (
                    traj.times.first().copied().unwrap_or(0.0),
                    traj.times.last().copied().unwrap_or(0.0),
                ),
            };
            let fit = fit_decay(&traj, column, model, window)?;
            println!(
                "{},{},{},{},{}",
                fit.model.name(),
                num(fit.rate),
                num(fit.r2),
                num(fit.window.0),
                num(fit.window.1)
            );
        }
        Command::Validate => {
            let cfg = load_config(common)?;
            println!("{}", validate(&cfg));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.quiet {
        LevelFilter::Error
    } else {
        LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            eprintln!("error[{}]: {e}", cat.name());
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}
