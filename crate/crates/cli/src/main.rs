//! `longrun`: long-run functionals of discretized controlled Markov
//! processes.
//!
//! Subcommands evaluate the average reward (`avg`), the risk-sensitive
//! value (`risk`), and the ergodicity certificate backing both (`audit`);
//! `manifest` checksums a run directory. Exit code 1 means a usage or
//! configuration problem, 2 means the model itself failed a numerical or
//! ergodicity requirement.

mod commands;
mod config;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use longrun_core::error::{CoreError, Result};
use longrun_core::risk::RiskParams;

#[derive(Parser)]
#[command(name = "longrun", version, about = "Long-run functionals of discretized Markov processes")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed; every stream in the run is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory for CSV results.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify ergodicity of the discretized family and its convergence.
    Audit,
    /// Average reward per unit time: convergence or stability sweep.
    Avg,
    /// Risk-sensitive value: convergence or stability sweep.
    Risk {
        /// Risk-sensitivity parameter, nonzero.
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        /// Span-residual tolerance of the fixed-point solver.
        #[arg(long)]
        tol: Option<f64>,
        /// Iteration cap of the fixed-point solver.
        #[arg(long)]
        max_iters: Option<usize>,
        /// Reference state label for value normalization.
        #[arg(long)]
        x_ref: Option<String>,
    },
    /// Write (or with --verify, check) sha256 checksums of the run directory.
    Manifest {
        #[arg(long)]
        verify: bool,
    },
}

fn load_config(cli: &Cli) -> Result<config::Config> {
    let path = cli.config.as_ref().ok_or_else(|| CoreError::Configuration {
        detail: "this command needs --config <file.toml>".into(),
    })?;
    config::load(path)
}

fn risk_params(
    cfg: &config::Config,
    alpha: f64,
    tol: Option<f64>,
    max_iters: Option<usize>,
    x_ref: Option<&str>,
) -> Result<RiskParams> {
    let mut params = RiskParams::new(alpha)?;
    if let Some(tol) = tol {
        params = params.with_tolerance(tol);
    }
    if let Some(cap) = max_iters {
        params = params.with_max_iterations(cap);
    }
    if let Some(label) = x_ref {
        let space = match cfg.model.kind()? {
            k if k.is_diffusion() => cfg.grid_space()?,
            _ => cfg.model.chain_space()?,
        };
        let index = space.index_of(label).ok_or_else(|| CoreError::Configuration {
            detail: format!("--x-ref {label:?} is not a state label"),
        })?;
        params = params.with_x_ref(index);
    }
    Ok(params)
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CoreError::Configuration {
                detail: format!("thread pool: {e}"),
            })?;
    }

    match &cli.command {
        Command::Manifest { verify } => {
            if *verify {
                match manifest::verify(&cli.out)? {
                    manifest::VerifyOutcome::Clean(count) => {
                        println!("manifest: {count} files verified");
                        Ok(())
                    }
                    manifest::VerifyOutcome::Mismatch(problems) => {
                        for p in &problems {
                            eprintln!("manifest: {p}");
                        }
                        Err(CoreError::Configuration {
                            detail: format!("{} file(s) do not match the manifest", problems.len()),
                        })
                    }
                }
            } else {
                let written = manifest::write(&cli.out, cli.seed)?;
                println!("manifest: recorded {} files", written.checksums.len());
                Ok(())
            }
        }
        command => {
            let cfg = load_config(cli)?;
            std::fs::create_dir_all(&cli.out)?;
            match command {
                Command::Audit => commands::run_audit(&cfg, cli.seed, &cli.out),
                Command::Avg => commands::run_avg(&cfg, cli.seed, &cli.out),
                Command::Risk {
                    alpha,
                    tol,
                    max_iters,
                    x_ref,
                } => {
                    let params = risk_params(&cfg, *alpha, *tol, *max_iters, x_ref.as_deref())?;
                    commands::run_risk(&cfg, cli.seed, &cli.out, &params)
                }
                Command::Manifest { .. } => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            // Clap's own output (help text or the usage error) goes through
            // its printer to keep color handling; only the exit code is ours.
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
