use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ddest::harness::{complexity_report, run_sweep, run_trial, write_csv, Execution, SimConfig, Snr};
use ddest::selftest;

/// Multiuser delay-Doppler channel estimation simulator.
#[derive(Debug, Parser)]
#[command(name = "ddest", version)]
struct Cli {
    /// Worker threads for trial parallelism. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte-Carlo SNR sweep, one CSV row per (SNR, estimator).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Single trial with full estimates, matches and flags as JSON.
    Trial {
        #[arg(long)]
        config: PathBuf,
        /// Pilot SNR in dB, or `inf` for a noiseless grid.
        #[arg(long)]
        snr: Snr,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Per-stage complex-multiplication counts for both estimators.
    Complexity {
        #[arg(long)]
        config: PathBuf,
        /// Total path count; defaults to the largest the config can draw.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Runs the operator and pipeline invariant checks.
    Selftest,
    /// Prints the reference configuration as JSON.
    Config,
}

enum Failure {
    MissingConfig(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(path: &Path) -> Result<SimConfig, Failure> {
    if !path.is_file() {
        return Err(Failure::MissingConfig(anyhow::anyhow!("config file not found: {}", path.display())));
    }
    SimConfig::load(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::Other)
}

fn execution(threads: Option<usize>) -> Execution {
    Execution::Parallel { threads }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Sweep { config, out } => {
            let cfg = load(&config)?;
            let table = run_sweep(&cfg, execution(cli.threads)).context("sweep failed")?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(file);
            write_csv(&table, &mut w).context("writing csv")?;
            w.flush().context("writing csv")?;
            for row in &table.rows {
                if row.failures > 0 {
                    eprintln!("{} dB {}: {} failed trials", row.snr_db, row.estimator.name(), row.failures);
                }
            }
            Ok(true)
        }
        Command::Trial { config, snr, trial, dump } => {
            let cfg = load(&config)?;
            let report = run_trial(&cfg, snr, trial).context("trial failed")?;
            let json = serde_json::to_string_pretty(&report).context("serializing trial")?;
            match dump {
                Some(path) => std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
                None => println!("{json}"),
            }
            Ok(true)
        }
        Command::Complexity { config, paths } => {
            let cfg = load(&config)?;
            let p = paths.unwrap_or_else(|| cfg.max_total_paths());
            println!("{}", complexity_report(&cfg.system, &cfg.wmusic, &cfg.mp, p, &cfg.complexity));
            Ok(true)
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            let mut ok = true;
            for c in &checks {
                println!("{:<4} {:<32} {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(ok)
        }
        Command::Config => {
            println!("{}", SimConfig::reference().to_json().context("serializing config")?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(Failure::MissingConfig(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
