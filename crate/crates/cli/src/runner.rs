//! Runs every trial of an experiment and writes the cycle log and summary.
//!
//! Trials run in parallel; trial i uses seed `agent.seed + i`. Output is
//! assembled in trial order and each file is written to a temporary path in
//! the output directory before being renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use actinf::agent::{run_trial, TrialLog};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const CYCLES_FILE: &str = "cycles.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";

/// A float that serialises non-finite values as the strings "inf", "-inf", "nan".
#[derive(Debug, Clone, Copy)]
struct LogNum(f64);

impl Serialize for LogNum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_finite() {
            s.serialize_f64(x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

#[derive(Serialize)]
struct CycleLine {
    trial: usize,
    t: usize,
    #[serde(rename = "F")]
    free_energy: LogNum,
    #[serde(rename = "G")]
    efe: Vec<LogNum>,
    posterior: Vec<LogNum>,
    action: Option<usize>,
    observation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SummaryRow {
    trial: usize,
    final_f: f64,
    preferred_outcomes: usize,
    final_argmax: usize,
}

/// Paths written by a run and the per-trial logs behind them.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub cycles: PathBuf,
    pub summary: PathBuf,
    pub trials: Vec<TrialLog>,
}

fn first_max(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn nums(v: &[f64]) -> Vec<LogNum> {
    v.iter().copied().map(LogNum).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(tmp.path()))?;
    tmp.as_file().sync_all().map_err(io_err(&target))?;
    tmp.persist(&target).map_err(|e| CliError::Io {
        path: target.clone(),
        source: e.error,
    })?;
    Ok(target)
}

/// Validates the config, runs all trials and writes both output files.
/// Nothing is written if validation or any trial fails.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let model = config.validate()?;
    let seed = config.agent.seed;
    let trials: Vec<TrialLog> = (0..config.run.trials)
        .into_par_iter()
        .map(|i| run_trial(&model, &config.agent, &config.env, seed.wrapping_add(i as u64)))
        .collect::<actinf::Result<_>>()?;

    let preferred = first_max(&config.model.c);
    let mut cycles = Vec::new();
    let mut summary = csv::Writer::from_writer(Vec::new());
    for (i, log) in trials.iter().enumerate() {
        for r in &log.records {
            let line = CycleLine {
                trial: i,
                t: r.t,
                free_energy: LogNum(r.free_energy),
                efe: nums(&r.efe),
                posterior: nums(&r.posterior),
                action: r.action,
                observation: r.observation,
            };
            serde_json::to_writer(&mut cycles, &line)?;
            cycles.push(b'\n');
        }
        let last = log.records.last();
        summary.serialize(SummaryRow {
            trial: i,
            final_f: last.map_or(f64::NAN, |r| r.free_energy),
            preferred_outcomes: log.count_outcome(preferred),
            final_argmax: last.map_or(0, |r| first_max(&r.posterior)),
        })?;
    }
    let summary = summary.into_inner().map_err(|e| CliError::Io {
        path: SUMMARY_FILE.into(),
        source: e.into_error(),
    })?;

    let dir = &config.run.output;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(RunOutput {
        cycles: write_atomic(dir, CYCLES_FILE, &cycles)?,
        summary: write_atomic(dir, SUMMARY_FILE, &summary)?,
        trials,
    })
}
