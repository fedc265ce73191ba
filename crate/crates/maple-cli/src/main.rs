//! Command-line driver for low-rank recovery experiments.
//!
//! Five subcommands cover the library's surface: `lemma-check` exercises
//! the sketched projection's contraction bound, `nlarm`/`lpca`/`pme` run
//! the three planted-instance studies, and `matrix-recover` reconstructs a
//! user-supplied square matrix from simulated measurements. Each command
//! reads defaults, then an optional `key=value` config file, then flags.
//!
//! Exit codes: 0 on success, 1 when the command ran but its result check
//! failed (a bound violation, or every run aborted), 2 for usage, config,
//! or input errors.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{LemmaConfig, LpcaConfig, MatrixRecoverConfig, NlarmConfig, PmeConfig};

#[derive(Parser)]
#[command(
    name = "maple",
    version,
    about = "Low-rank recovery experiments: projected gradient descent with sketched or \
             exact rank projections, plus a factored-descent baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the sketched projection's contraction bound on random trials.
    LemmaCheck(LemmaFlags),
    /// Recover planted low-rank matrices from nonlinear measurements.
    Nlarm(ExperimentFlags),
    /// Fit low-rank logit matrices to planted binary matrices.
    Lpca(ExperimentFlags),
    /// Estimate low-rank precision-matrix corrections from samples.
    Pme(ExperimentFlags),
    /// Recover a square matrix file from simulated measurements of it.
    MatrixRecover(MatrixFlags),
}

#[derive(Args)]
struct LemmaFlags {
    /// Path to a key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config key `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed for the trial streams (overrides the config key `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExperimentFlags {
    /// Path to a key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config key `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run only this seed (overrides the config key `seeds`).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated solvers: maple, svp, fgd (overrides `solver`).
    #[arg(long)]
    solver: Option<String>,
    /// Zero all timing columns so repeated runs are byte-identical.
    #[arg(long)]
    deterministic_timing: bool,
}

#[derive(Args)]
struct MatrixFlags {
    /// Square input matrix as CSV (or set the config key `input`).
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    common: ExperimentFlags,
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::LemmaCheck(flags) => {
            let mut cfg = LemmaConfig::default();
            if let Some(path) = &flags.config {
                for (key, value) in config::read_kv_file(path)? {
                    cfg.apply_kv(&key, &value)?;
                }
            }
            if let Some(seed) = flags.seed {
                cfg.seed = seed;
            }
            if let Some(out) = flags.out {
                cfg.out = out;
            }
            run::cmd_lemma_check(&cfg)
        }
        Command::Nlarm(flags) => {
            let mut cfg = NlarmConfig::default();
            if let Some(path) = &flags.config {
                for (key, value) in config::read_kv_file(path)? {
                    cfg.apply_kv(&key, &value)?;
                }
            }
            apply_experiment_flags(
                &flags,
                &mut cfg.seeds,
                &mut cfg.solvers,
                &mut cfg.out,
            )?;
            run::cmd_nlarm(&cfg, flags.deterministic_timing)
        }
        Command::Lpca(flags) => {
            let mut cfg = LpcaConfig::default();
            if let Some(path) = &flags.config {
                for (key, value) in config::read_kv_file(path)? {
                    cfg.apply_kv(&key, &value)?;
                }
            }
            apply_experiment_flags(
                &flags,
                &mut cfg.seeds,
                &mut cfg.solvers,
                &mut cfg.out,
            )?;
            run::cmd_lpca(&cfg, flags.deterministic_timing)
        }
        Command::Pme(flags) => {
            let mut cfg = PmeConfig::default();
            if let Some(path) = &flags.config {
                for (key, value) in config::read_kv_file(path)? {
                    cfg.apply_kv(&key, &value)?;
                }
            }
            apply_experiment_flags(
                &flags,
                &mut cfg.seeds,
                &mut cfg.solvers,
                &mut cfg.out,
            )?;
            run::cmd_pme(&cfg, flags.deterministic_timing)
        }
        Command::MatrixRecover(flags) => {
            let mut cfg = MatrixRecoverConfig::default();
            if let Some(path) = &flags.common.config {
                for (key, value) in config::read_kv_file(path)? {
                    cfg.apply_kv(&key, &value)?;
                }
            }
            if let Some(input) = flags.input {
                cfg.input = Some(input);
            }
            apply_experiment_flags(
                &flags.common,
                &mut cfg.seeds,
                &mut cfg.solvers,
                &mut cfg.out,
            )?;
            run::cmd_matrix_recover(&cfg, flags.common.deterministic_timing)
        }
    }
}

/// Applies the flag overrides shared by every experiment command.
fn apply_experiment_flags(
    flags: &ExperimentFlags,
    seeds: &mut Vec<u64>,
    solvers: &mut Vec<config::Solver>,
    out: &mut PathBuf,
) -> Result<()> {
    if let Some(seed) = flags.seed {
        *seeds = vec![seed];
    }
    if let Some(list) = &flags.solver {
        *solvers = config::parse_solver_list(list)?;
    }
    if let Some(dir) = &flags.out {
        *out = dir.clone();
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
