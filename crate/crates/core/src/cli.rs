//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 statistical failure of a verification suite (or a failed oracle
//! derivative check). Settings resolve as flags, then the `--config` file,
//! then built-in defaults.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dynamics::write_jump_log;
use crate::ensemble::{self, EnsembleConfig, Observable};
use crate::error::Error;
use crate::io::{write_estimates_file, write_manifest, ManifestBuilder, RunStatus};
use crate::oracle::{derivative_identity_check, OracleObservable, TruncatedStateSpace, K_MAX};
use crate::suites::{Suite, SuiteReport, VerifyConfig};
use crate::{RngStreamSpec, SimState};

/// Largest time accepted by the `oracle` subcommand.
pub const ORACLE_T_MAX: f64 = 10.0;
/// Below this many replicas `verify` warns about statistical power.
pub const LOW_POWER_REPLICAS: usize = 100;

#[derive(Debug, Parser)]
#[command(
    name = "tasep-lab",
    version,
    about = "Step-initial-condition TASEP: simulation, verification suites and exact oracle"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an ensemble and write P, a and N1 estimates.
    Simulate(SimulateArgs),
    /// Run statistical verification suites.
    Verify(VerifyArgs),
    /// Exact expectations on the truncated partition chain.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct EnsembleFlags {
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint time; repeat for several.
    #[arg(long = "t", allow_negative_numbers = true)]
    pub times: Vec<f64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Worker threads (capped by TASEP_LAB_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat TOML file of defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub ensemble: EnsembleFlags,
    /// Write the jump log of replica 0 to jumps.csv.
    #[arg(long)]
    pub log_jumps: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub ensemble: EnsembleFlags,
    /// Suite to run; repeat for several, or `all`.
    #[arg(long = "suite")]
    pub suites: Vec<String>,
    /// Finite-difference step of the derivative suite.
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    #[arg(long)]
    pub r_max: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub bin_width: Option<f64>,
    /// Truncation level of the oracle cross-check.
    #[arg(long = "oracle-K")]
    pub oracle_level: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Truncation level: partitions of size at most K.
    #[arg(long = "K")]
    pub level: usize,
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    /// P, a, S:k or N:r.
    #[arg(long, default_value = "P")]
    pub observable: String,
    /// Compare the central difference of E P with E a instead.
    #[arg(long)]
    pub check_derivative: bool,
    #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
    pub h: f64,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub t: Option<Vec<f64>>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub log_jumps: Option<bool>,
    pub suite: Option<Vec<String>>,
    pub h: Option<f64>,
    pub r_max: Option<usize>,
    pub bin_width: Option<f64>,
    pub oracle_k: Option<usize>,
    pub sigma: Option<f64>,
    pub family_sigma: Option<f64>,
    pub family_alpha: Option<f64>,
    pub limit_tolerance: Option<f64>,
    pub height_tolerance: Option<f64>,
    pub density_tolerance: Option<f64>,
    pub pair_tolerance: Option<f64>,
    pub chi_square_alpha: Option<f64>,
    pub bias_slope_min: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("--config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Failure::Config(format!("--config {}: {e}", path.display())))
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
    Statistical(String),
}

impl Failure {
    fn status(&self) -> RunStatus {
        match self {
            Failure::Config(_) => RunStatus::ConfigError,
            Failure::Runtime(_) => RunStatus::RuntimeFailure,
            Failure::Statistical(_) => RunStatus::StatisticalFailure,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) | Failure::Statistical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::InvalidTime(_)
            | Error::WindowTooSmall { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(format!("{e:#}"))
    }
}

fn check_times(times: &[f64]) -> Result<(), Failure> {
    for &t in times {
        if !t.is_finite() || t < 0.0 {
            return Err(Failure::Config(format!(
                "invalid value for --t: must be a finite time ≥ 0, got {t}"
            )));
        }
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::Config(
            "invalid value for --t: times must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn check_replicas(replicas: usize) -> Result<(), Failure> {
    if replicas < 2 {
        return Err(Failure::Config(format!(
            "invalid value for --replicas: need at least 2, got {replicas}"
        )));
    }
    Ok(())
}

fn check_threads(threads: Option<usize>) -> Result<(), Failure> {
    if threads == Some(0) {
        return Err(Failure::Config(
            "invalid value for --threads: must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Resolved settings of `simulate`, echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSettings {
    pub seed: u64,
    pub replicas: usize,
    pub times: Vec<f64>,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub log_jumps: bool,
}

impl SimulateSettings {
    pub fn resolve(args: &SimulateArgs, file: &FileConfig) -> Result<Self, Failure> {
        let f = &args.ensemble;
        let times = if f.times.is_empty() {
            file.t.clone().unwrap_or_else(|| vec![10.0])
        } else {
            f.times.clone()
        };
        let s = Self {
            seed: f.seed.or(file.seed).unwrap_or(1),
            replicas: f.replicas.or(file.replicas).unwrap_or(1000),
            times,
            threads: f.threads.or(file.threads),
            out: f
                .out
                .clone()
                .or_else(|| file.out.clone())
                .unwrap_or_else(|| PathBuf::from("tasep-out")),
            log_jumps: args.log_jumps || file.log_jumps.unwrap_or(false),
        };
        check_times(&s.times)?;
        if s.times.is_empty() {
            return Err(Failure::Config(
                "invalid value for --t: at least one time is required".into(),
            ));
        }
        check_replicas(s.replicas)?;
        check_threads(s.threads)?;
        Ok(s)
    }
}

/// Resolved settings of `verify`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySettings {
    pub suites: Vec<Suite>,
    pub out: PathBuf,
    pub config: VerifyConfig,
}

fn parse_suites(names: &[String]) -> Result<Vec<Suite>, Failure> {
    if names.is_empty() || names.iter().any(|n| n == "all") {
        return Ok(Suite::ALL.to_vec());
    }
    let mut suites = Vec::new();
    for n in names {
        let s: Suite = n.parse().map_err(|_| {
            Failure::Config(format!("invalid value for --suite: unknown suite {n:?}"))
        })?;
        if !suites.contains(&s) {
            suites.push(s);
        }
    }
    Ok(suites)
}

impl VerifySettings {
    pub fn resolve(args: &VerifyArgs, file: &FileConfig) -> Result<Self, Failure> {
        let f = &args.ensemble;
        let names = if args.suites.is_empty() {
            file.suite.clone().unwrap_or_default()
        } else {
            args.suites.clone()
        };
        let d = VerifyConfig::default();
        let config = VerifyConfig {
            master_seed: f.seed.or(file.seed).unwrap_or(d.master_seed),
            replicas: f.replicas.or(file.replicas).unwrap_or(d.replicas),
            threads: f.threads.or(file.threads),
            times: if f.times.is_empty() {
                file.t.clone().unwrap_or_default()
            } else {
                f.times.clone()
            },
            fd_step: args.h.or(file.h).unwrap_or(d.fd_step),
            r_max: args.r_max.or(file.r_max).unwrap_or(d.r_max),
            bin_width: args.bin_width.or(file.bin_width).unwrap_or(d.bin_width),
            oracle_level: args
                .oracle_level
                .or(file.oracle_k)
                .unwrap_or(d.oracle_level),
            sigma: file.sigma.unwrap_or(d.sigma),
            family_sigma: file.family_sigma.unwrap_or(d.family_sigma),
            family_alpha: file.family_alpha.unwrap_or(d.family_alpha),
            limit_tolerance: file.limit_tolerance.unwrap_or(d.limit_tolerance),
            height_tolerance: file.height_tolerance.unwrap_or(d.height_tolerance),
            density_tolerance: file.density_tolerance.unwrap_or(d.density_tolerance),
            pair_tolerance: file.pair_tolerance.unwrap_or(d.pair_tolerance),
            chi_square_alpha: file.chi_square_alpha.unwrap_or(d.chi_square_alpha),
            bias_slope_min: file.bias_slope_min.unwrap_or(d.bias_slope_min),
        };
        check_times(&config.times)?;
        check_replicas(config.replicas)?;
        check_threads(config.threads)?;
        if !(config.fd_step > 0.0) || !config.fd_step.is_finite() {
            return Err(Failure::Config(format!(
                "invalid value for --h: must be positive, got {}",
                config.fd_step
            )));
        }
        if !(config.bin_width > 0.0) || !config.bin_width.is_finite() {
            return Err(Failure::Config(format!(
                "invalid value for --bin-width: must be positive, got {}",
                config.bin_width
            )));
        }
        if !(1..=K_MAX).contains(&config.oracle_level) {
            return Err(Failure::Config(format!(
                "invalid value for --oracle-K: must be in 1..={K_MAX}, got {}",
                config.oracle_level
            )));
        }
        Ok(Self {
            suites: parse_suites(&names)?,
            out: f
                .out
                .clone()
                .or_else(|| file.out.clone())
                .unwrap_or_else(|| PathBuf::from("tasep-out")),
            config,
        })
    }
}

fn load_file(path: Option<&PathBuf>) -> Result<FileConfig, Failure> {
    path.map_or_else(|| Ok(FileConfig::default()), |p| FileConfig::load(p))
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Writes the manifest, reporting (but not failing on) write errors.
fn close(
    out: &Path,
    builder: &ManifestBuilder,
    result: Result<(), Failure>,
    err: &mut dyn Write,
) -> i32 {
    let (status, failure) = match &result {
        Ok(()) => (RunStatus::Success, None),
        Err(f) => (f.status(), Some(f.message().to_string())),
    };
    let manifest = builder.finish(status, failure.clone());
    if let Err(e) = write_manifest(&out.join("manifest.json"), &manifest) {
        let _ = writeln!(err, "error: writing manifest: {e:#}");
        if status == RunStatus::Success {
            return RunStatus::RuntimeFailure.exit_code();
        }
    }
    if let Some(msg) = failure {
        let _ = writeln!(err, "error: {msg}");
    }
    status.exit_code()
}

pub fn cmd_simulate(args: &SimulateArgs, out_w: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let settings = match load_file(args.ensemble.config.as_ref())
        .and_then(|f| SimulateSettings::resolve(args, &f))
    {
        Ok(s) => s,
        Err(f) => return report_early(f, err),
    };
    if let Err(f) = prepare_out(&settings.out) {
        return report_early(f, err);
    }
    let mut builder = ManifestBuilder::start("simulate", &settings, Some(settings.seed));
    let result = simulate(&settings, &mut builder, out_w);
    close(&settings.out, &builder, result, err)
}

fn simulate(
    s: &SimulateSettings,
    builder: &mut ManifestBuilder,
    out_w: &mut dyn Write,
) -> Result<(), Failure> {
    let config = EnsembleConfig {
        master_seed: s.seed,
        replicas: s.replicas,
        checkpoints: s.times.clone(),
        observables: vec![
            Observable::TotalJumps,
            Observable::Active,
            Observable::JumpCount(1),
        ],
        threads: s.threads,
        check_identities: true,
    };
    let run = ensemble::run(&config)?;
    builder.add_events(run.events);
    let path = s.out.join("estimates.csv");
    write_estimates_file(&path, &run.estimates)?;
    let _ = writeln!(out_w, "wrote {}", path.display());
    if s.log_jumps {
        let mut state = SimState::with_jump_log(RngStreamSpec::new(s.seed, 0));
        state.advance_to(*s.times.last().expect("nonempty"))?;
        let path = s.out.join("jumps.csv");
        let file = fs::File::create(&path).map_err(anyhow::Error::from)?;
        write_jump_log(
            std::io::BufWriter::new(file),
            state.jump_log().unwrap_or_default(),
        )
        .map_err(anyhow::Error::from)?;
        let _ = writeln!(out_w, "wrote {}", path.display());
    }
    Ok(())
}

pub fn cmd_verify(args: &VerifyArgs, out_w: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let settings = match load_file(args.ensemble.config.as_ref())
        .and_then(|f| VerifySettings::resolve(args, &f))
    {
        Ok(s) => s,
        Err(f) => return report_early(f, err),
    };
    if let Err(f) = prepare_out(&settings.out) {
        return report_early(f, err);
    }
    if settings.config.replicas < LOW_POWER_REPLICAS {
        let _ = writeln!(
            err,
            "warning: {} replicas give little statistical power; verdicts are unreliable below {LOW_POWER_REPLICAS}",
            settings.config.replicas
        );
    }
    let mut builder =
        ManifestBuilder::start("verify", &settings, Some(settings.config.master_seed));
    let result = verify(&settings, &mut builder, out_w);
    close(&settings.out, &builder, result, err)
}

fn print_report(r: &SuiteReport, out_w: &mut dyn Write) {
    let _ = writeln!(
        out_w,
        "[{}] {}",
        r.suite,
        if r.passed() { "PASS" } else { "FAIL" }
    );
    for c in &r.checks {
        let _ = writeln!(
            out_w,
            "  {} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
}

fn verify(
    s: &VerifySettings,
    builder: &mut ManifestBuilder,
    out_w: &mut dyn Write,
) -> Result<(), Failure> {
    let mut estimates = Vec::new();
    let mut failed = Vec::new();
    let mut outcome = Ok(());
    for suite in &s.suites {
        match suite.run(&s.config) {
            Ok(report) => {
                print_report(&report, out_w);
                builder.add_events(report.events);
                builder.add_suite(&report);
                if !report.passed() {
                    failed.push(suite.to_string());
                }
                estimates.extend(report.estimates);
            }
            Err(e) => {
                let f = Failure::from(e);
                outcome = Err(match f {
                    Failure::Config(m) => Failure::Config(format!("suite {suite}: {m}")),
                    Failure::Runtime(m) => Failure::Runtime(format!("suite {suite}: {m}")),
                    other => other,
                });
                break;
            }
        }
    }
    write_estimates_file(&s.out.join("estimates.csv"), &estimates)?;
    outcome?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Statistical(format!(
            "suites failed: {}",
            failed.join(", ")
        )))
    }
}

pub fn cmd_oracle(args: &OracleArgs, out_w: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match oracle(args, out_w) {
        Ok(code) => code,
        Err(f) => report_early(f, err),
    }
}

fn oracle(args: &OracleArgs, out_w: &mut dyn Write) -> Result<i32, Failure> {
    if !(1..=K_MAX).contains(&args.level) {
        return Err(Failure::Config(format!(
            "invalid value for --K: must be in 1..={K_MAX}, got {}",
            args.level
        )));
    }
    if !args.t.is_finite() || !(0.0..=ORACLE_T_MAX).contains(&args.t) {
        return Err(Failure::Config(format!(
            "invalid value for --t: must be in [0, {ORACLE_T_MAX}], got {}",
            args.t
        )));
    }
    let observable = OracleObservable::parse(&args.observable)
        .map_err(|e| Failure::Config(format!("invalid value for --observable: {e}")))?;
    let space = TruncatedStateSpace::build(args.level)?;
    let (json, code) = if args.check_derivative {
        let check = derivative_identity_check(&space, args.t, args.h)
            .map_err(|e| Failure::Config(format!("invalid value for --t/--h: {e}")))?;
        let code = if check.pass {
            0
        } else {
            RunStatus::StatisticalFailure.exit_code()
        };
        (serde_json::to_string_pretty(&check), code)
    } else {
        let result = space.expectation(args.t, &observable)?;
        (serde_json::to_string_pretty(&result), 0)
    };
    let json = json.map_err(|e| Failure::Runtime(e.to_string()))?;
    let _ = writeln!(out_w, "{json}");
    Ok(code)
}

fn report_early(f: Failure, err: &mut dyn Write) -> i32 {
    let _ = writeln!(err, "error: {}", f.message());
    f.status().exit_code()
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out_w: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render();
            if code == 0 {
                let _ = write!(out_w, "{text}");
            } else {
                let _ = write!(err, "{}", text.ansi());
            }
            return code;
        }
    };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out_w, err),
        Command::Verify(a) => cmd_verify(a, out_w, err),
        Command::Oracle(a) => cmd_oracle(a, out_w, err),
    }
}
