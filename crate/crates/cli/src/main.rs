//! `coop-fusion`: run scenarios, sweep a parameter and evaluate EventLogs.
//!
//! Exit codes: 0 on success, 1 on configuration, I/O or log errors, 2 when a
//! scenario run ends in failure.

mod config;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coop_fusion::evaluation::evaluate_log;
use coop_fusion::sim::{run_scenario, EventLog, LogError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{path}: {source}")]
    Log { path: String, source: LogError },
}

#[derive(Debug, Parser)]
#[command(name = "coop-fusion", version, about = "Cooperative LiDAR/VIO guidance simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "COOP_FUSION_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its EventLog, report and effective config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run a scenario over a grid of values of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted config path, e.g. `vio_drift.x`.
        #[arg(long)]
        param: String,
        /// `a,b,c` or inclusive `start:stop:step`.
        #[arg(long)]
        values: String,
        /// Runs per value, seeded `seed, seed + 1, …`.
        #[arg(long, default_value_t = 10)]
        runs: u32,
        /// Replaces the base seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write every run's EventLog.
        #[arg(long)]
        keep_logs: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Evaluate an EventLog: print the report and write per-sample errors.
    Eval {
        log: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

fn cmd_run(config_path: &Path, seed: Option<u64>, out: &Path) -> Result<ExitCode, CliError> {
    let config = config::to_config(config::read_table(config_path)?, seed)?;
    let log = run_scenario(&config).map_err(|e| CliError::Config(e.to_string()))?;
    let report = evaluate_log(&log);
    let text = report.to_key_values();

    create_dir(out)?;
    write_file(&out.join("effective_config.toml"), &config::effective_toml(&config)?)?;
    write_file(&out.join("events.log"), &log.to_text())?;
    write_file(&out.join("report.txt"), &text)?;
    print!("{text}");
    if report.failure {
        eprintln!("scenario failed: {}", report.failure_reason.as_deref().unwrap_or("unknown"));
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    config_path: &Path,
    param: String,
    values: &str,
    runs: u32,
    seed: Option<u64>,
    jobs: Option<usize>,
    keep_logs: bool,
    out: &Path,
) -> Result<ExitCode, CliError> {
    let table = config::read_table(config_path)?;
    let base = config::to_config(table.clone(), seed)?;
    let spec = sweep::SweepSpec::new(param, sweep::parse_values(values)?, runs)?;
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);

    create_dir(out)?;
    let log_dir = out.join("logs");
    if keep_logs {
        create_dir(&log_dir)?;
    }
    let rows = sweep::run_sweep(&table, base.seed, &spec, jobs, keep_logs.then_some(log_dir.as_path()))?;
    write_file(&out.join("effective_config.toml"), &config::effective_toml(&base)?)?;
    write_file(&out.join("sweep.csv"), &sweep::to_csv(&rows))?;
    let failed = rows.iter().filter(|r| r.failed).count();
    println!("{} runs, {failed} failed, written to {}", rows.len(), out.join("sweep.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(log_path: &Path, out: &Path) -> Result<ExitCode, CliError> {
    let text = std::fs::read_to_string(log_path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", log_path.display())))?;
    let log = EventLog::parse(&text).map_err(|source| CliError::Log { path: log_path.display().to_string(), source })?;
    let report = evaluate_log(&log);
    create_dir(out)?;
    write_file(&out.join("errors.csv"), &report.to_csv())?;
    print!("{}", report.to_key_values());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, &out.out),
        Command::Sweep { config, param, values, runs, seed, jobs, keep_logs, out } => {
            cmd_sweep(&config, param, &values, runs, seed, jobs, keep_logs, &out.out)
        }
        Command::Eval { log, out } => cmd_eval(&log, &out.out),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
