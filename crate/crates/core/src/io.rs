//! Estimates CSV and run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleEstimate;
use crate::suites::SuiteReport;

pub const ESTIMATES_HEADER: [&str; 10] = [
    "suite",
    "observable",
    "t",
    "k_or_u_or_r",
    "mean",
    "stderr",
    "n",
    "reference",
    "abs_dev",
    "pass",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes estimates with a fixed header; floats use shortest round-trip
/// rendering, absent values are empty fields.
pub fn write_estimates<W: Write>(out: W, estimates: &[EnsembleEstimate]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATES_HEADER)?;
    for e in estimates {
        w.write_record([
            e.suite.clone(),
            e.observable.clone(),
            e.t.to_string(),
            e.index.clone(),
            e.mean.to_string(),
            e.stderr.to_string(),
            e.n.to_string(),
            opt(e.reference),
            opt(e.abs_dev()),
            opt(e.pass),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_estimates_file(path: &Path, estimates: &[EnsembleEstimate]) -> anyhow::Result<()> {
    let file = fs::File::create(path)?;
    write_estimates(std::io::BufWriter::new(file), estimates)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    StatisticalFailure,
    RuntimeFailure,
    ConfigError,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::RuntimeFailure => 1,
            RunStatus::ConfigError => 2,
            RunStatus::StatisticalFailure => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub pass: bool,
    pub checks_passed: usize,
    pub checks_total: usize,
    pub failed_checks: Vec<String>,
}

impl From<&SuiteReport> for SuiteOutcome {
    fn from(r: &SuiteReport) -> Self {
        Self {
            suite: r.suite.to_string(),
            pass: r.passed(),
            checks_passed: r.checks.iter().filter(|c| c.pass).count(),
            checks_total: r.checks.len(),
            failed_checks: r
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect(),
        }
    }
}

/// Record of one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub master_seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub wall_seconds: f64,
    pub events: u64,
    pub suites: Vec<SuiteOutcome>,
    pub status: RunStatus,
    pub failure: Option<String>,
}

/// Collects manifest fields while a command runs.
#[derive(Debug)]
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    master_seed: Option<u64>,
    started: DateTime<Utc>,
    clock: Instant,
    events: u64,
    suites: Vec<SuiteOutcome>,
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl ManifestBuilder {
    pub fn start(command: &str, config: impl Serialize, master_seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            master_seed,
            started: Utc::now(),
            clock: Instant::now(),
            events: 0,
            suites: Vec::new(),
        }
    }

    pub fn add_events(&mut self, n: u64) {
        self.events += n;
    }

    pub fn add_suite(&mut self, report: &SuiteReport) {
        self.suites.push(report.into());
    }

    pub fn finish(&self, status: RunStatus, failure: Option<String>) -> RunManifest {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            config: self.config.clone(),
            master_seed: self.master_seed,
            started_at: stamp(self.started),
            finished_at: stamp(Utc::now()),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
            events: self.events,
            suites: self.suites.clone(),
            status,
            failure,
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
