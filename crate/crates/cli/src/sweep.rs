//! Parameter sweeps over a base scenario.

use std::fmt::Write as _;
use std::path::Path;

use coop_fusion::evaluation::evaluate_log;
use coop_fusion::sim::run_scenario;
use rayon::prelude::*;
use toml::Table;

use crate::config::{set_path, to_config};
use crate::CliError;

/// Values of one parameter, each run `runs_per_value` times with seeds
/// `base_seed, base_seed + 1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
    pub runs_per_value: u32,
}

impl SweepSpec {
    pub fn new(parameter: String, values: Vec<f64>, runs_per_value: u32) -> Result<Self, CliError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config("sweep values must be finite and non-empty".into()));
        }
        if runs_per_value == 0 {
            return Err(CliError::Config("runs per value must be at least 1".into()));
        }
        Ok(Self { parameter, values, runs_per_value })
    }
}

/// Parses `a,b,c` or an inclusive range `start:stop:step`.
pub fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    let number = |s: &str| {
        s.trim().parse::<f64>().map_err(|_| CliError::Config(format!("invalid sweep value `{}`", s.trim())))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
            if !(step > 0.0) || stop < start {
                return Err(CliError::Config(format!("invalid sweep range `{text}`")));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            // rounded so that 0:1:0.1 yields 0.3, not 0.30000000000000004
            Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
        }
        [_] => text.split(',').map(number).collect(),
        _ => Err(CliError::Config(format!("invalid sweep values `{text}`"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub run: u32,
    pub mean_path_deviation: f64,
    pub rel_loc_rmse: f64,
    pub failed: bool,
}

/// Runs every (value, run) pair on `jobs` threads. Rows come back in
/// value-major order regardless of scheduling. With `log_dir`, each run's
/// EventLog is written there.
pub fn run_sweep(
    base: &Table,
    base_seed: u64,
    spec: &SweepSpec,
    jobs: usize,
    log_dir: Option<&Path>,
) -> Result<Vec<SweepRow>, CliError> {
    let mut configs = Vec::new();
    for &value in &spec.values {
        for run in 0..spec.runs_per_value {
            let mut table = base.clone();
            set_path(&mut table, &spec.parameter, value)?;
            configs.push((value, run, to_config(table, Some(base_seed + u64::from(run)))?));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        configs
            .par_iter()
            .map(|(value, run, config)| {
                let log = run_scenario(config).map_err(|e| CliError::Config(e.to_string()))?;
                if let Some(dir) = log_dir {
                    let path = dir.join(format!("{}_{value}_run{run}.log", spec.parameter));
                    crate::write_file(&path, &log.to_text())?;
                }
                let report = evaluate_log(&log);
                Ok(SweepRow {
                    value: *value,
                    run: *run,
                    mean_path_deviation: report.mean_path_deviation,
                    rel_loc_rmse: report.rel_loc_rmse,
                    failed: report.failure,
                })
            })
            .collect()
    })
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("value,run,mean_path_deviation,rel_loc_rmse,failed\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.value, r.run, r.mean_path_deviation, r.rel_loc_rmse, r.failed)
            .expect("string write");
    }
    out
}
