use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cmfe_cli::commands::{cmd_bounds, cmd_check, cmd_converge, cmd_simulate, cmd_verify, format_check, format_gel_time};
use cmfe_cli::config::{parse_config, read_config, RunConfig};
use cmfe_cli::CliError;

/// Finite-volume solver for coagulation with multiple fragmentation.
#[derive(Debug, Parser)]
#[command(name = "cmfe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a configuration and write moments, ledger and snapshots.
    Simulate {
        config: PathBuf,
        /// Output directory; defaults to `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; overrides `controls.threads`.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Evaluate the analytic bounds for the configured initial data.
    Bounds {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report admissibility and, with `--simulate`, compare a run to the bounds.
    Check {
        config: PathBuf,
        #[arg(long)]
        simulate: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Repeat the run with the top edge raised tenfold per level and estimate the gel time.
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Verify {
        /// Comma-separated criterion ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, threads: Option<usize>) -> Result<RunConfig, CliError> {
    let mut cfg = parse_config(path)?;
    if let Some(t) = threads {
        cfg.controls.threads = t;
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.output.directory.clone())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out, threads } => {
            let cfg = load(&config, threads)?;
            let dir = out_dir(&cfg, out);
            let outcome = cmd_simulate(&cfg, &dir)?;
            let r = &outcome.result;
            println!(
                "t = {} reached in {} steps ({} rejected); relative ledger defect {:.3e}",
                r.times.last().copied().unwrap_or(0.0),
                r.metadata.steps,
                r.metadata.rejected_steps,
                r.ledger_defect()
            );
            println!("wrote {} files to {}", outcome.files.len(), dir.display());
        }
        Command::Bounds { config, out } => {
            let cfg = load(&config, None)?;
            let dir = out_dir(&cfg, out);
            let report = cmd_bounds(&cfg, &dir)?;
            println!("T† = {:?}, long-time limit = {:.6e}", report.t_dagger, report.cmfe_limit);
            println!("wrote bounds to {}", dir.display());
        }
        Command::Check { config, simulate, threads } => {
            // Inadmissible configurations are reported, not rejected.
            let mut cfg = read_config(&config)?;
            if let Some(t) = threads {
                cfg.controls.threads = t;
            }
            let outcome = cmd_check(&cfg, simulate)?;
            println!("{}", format_check(&outcome));
            if !outcome.holds() {
                return Err(CliError::Violation("check failed".into()));
            }
        }
        Command::Converge { config, levels, out } => {
            let cfg = load(&config, None)?;
            let dir = out_dir(&cfg, out);
            let outcome = cmd_converge(&cfg, levels, &dir)?;
            if let Some(est) = &outcome.gel_time {
                println!("{}", format_gel_time(est));
            }
            println!("wrote convergence tables to {}", dir.display());
        }
        Command::Verify { only, out } => {
            let outcomes = cmd_verify(&only, out.as_deref())?;
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
            if failed > 0 {
                return Err(CliError::Violation(format!("{failed} acceptance criteria failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cmfe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
