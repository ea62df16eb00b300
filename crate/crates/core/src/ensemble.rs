//! Parallel Monte Carlo over independent replicas.
//!
//! Replica `i` always draws from stream `(master_seed, i)`, and results are
//! reduced in replica order, so estimates do not depend on the thread count.

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::dynamics::SimState;
use crate::error::{invalid, Error, Result};
use crate::observables::{
    check_exact_identities, hole_count_left, particle_count_right, scaled_site, standard_window,
};
use crate::reference;
use crate::rng::RngStreamSpec;
use crate::stats::Accumulator;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "TASEP_LAB_THREADS";

/// Which replicas to run and on how many workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaPlan {
    pub master_seed: u64,
    pub replicas: usize,
    /// `None` uses [`THREADS_ENV`] or all cores.
    pub threads: Option<usize>,
}

impl ReplicaPlan {
    pub fn new(master_seed: u64, replicas: usize) -> Self {
        Self {
            master_seed,
            replicas,
            threads: None,
        }
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    fn worker_count(&self) -> usize {
        let env = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0);
        let n = match (self.threads, env) {
            (Some(t), Some(cap)) => t.min(cap),
            (Some(t), None) => t,
            (None, Some(cap)) => cap,
            (None, None) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        n.max(1)
    }
}

/// Per-replica sample rows of a fixed width, in replica order.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    width: usize,
    data: Vec<f64>,
    /// Jumps simulated over all replicas.
    pub events: u64,
}

impl Samples {
    pub fn replicas(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn accumulate(&self, j: usize) -> Accumulator {
        self.rows().map(|r| r[j]).collect()
    }

    /// Accumulates `g(row)` over replicas.
    pub fn accumulate_with(&self, g: impl Fn(&[f64]) -> f64) -> Accumulator {
        self.rows().map(g).collect()
    }
}

/// Runs `f` on a fresh step-IC trajectory per replica. `f` must push exactly
/// `width` values.
pub fn run_replicas<F>(plan: &ReplicaPlan, width: usize, f: F) -> Result<Samples>
where
    F: Fn(&mut SimState, &mut Vec<f64>) -> Result<()> + Sync,
{
    if plan.replicas == 0 {
        return Err(invalid("replicas", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.worker_count())
        .build()
        .map_err(|e| invalid("threads", e.to_string()))?;
    let seed = plan.master_seed;
    let rows: Vec<(Vec<f64>, u64)> = pool.install(|| {
        (0..plan.replicas)
            .into_par_iter()
            .map(|i| {
                let mut state = SimState::new_step_ic(RngStreamSpec::new(seed, i as u64));
                let mut row = Vec::with_capacity(width);
                f(&mut state, &mut row).map_err(|e| Error::Replica {
                    replica: i,
                    detail: e.to_string(),
                })?;
                if row.len() != width {
                    return Err(Error::Replica {
                        replica: i,
                        detail: format!("produced {} values, expected {width}", row.len()),
                    });
                }
                Ok((row, state.total_jumps()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let events = rows.iter().map(|(_, e)| e).sum();
    let data = rows.into_iter().flat_map(|(r, _)| r).collect();
    Ok(Samples {
        width,
        data,
        events,
    })
}

/// Quantities that can be recorded at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Observable {
    /// `P_t`.
    TotalJumps,
    /// `P_t / t²`.
    TotalJumpsScaled,
    /// `a_t`.
    Active,
    /// `a_t / t`.
    ActiveScaled,
    /// `N_t^{(r)}`.
    JumpCount(usize),
    /// `N_t^{(r)} / t`.
    JumpRate(usize),
    /// `S(k, t)`.
    ParticlesRight(i64),
    /// `S'(k, t)`.
    HolesLeft(i64),
    /// `S(⌊ut⌋, t) / t`.
    ScaledHeight(f64),
}

impl Observable {
    pub fn name(&self) -> &'static str {
        match self {
            Observable::TotalJumps => "P",
            Observable::TotalJumpsScaled => "P/t^2",
            Observable::Active => "a",
            Observable::ActiveScaled => "a/t",
            Observable::JumpCount(_) => "N",
            Observable::JumpRate(_) => "N/t",
            Observable::ParticlesRight(_) => "S",
            Observable::HolesLeft(_) => "S'",
            Observable::ScaledHeight(_) => "S(ut)/t",
        }
    }

    /// The `k`, `u` or `r` the observable is indexed by, rendered for CSV.
    pub fn index_label(&self) -> String {
        match self {
            Observable::JumpCount(r) | Observable::JumpRate(r) => r.to_string(),
            Observable::ParticlesRight(k) | Observable::HolesLeft(k) => k.to_string(),
            Observable::ScaledHeight(u) => u.to_string(),
            _ => String::new(),
        }
    }

    pub fn evaluate(&self, s: &SimState) -> f64 {
        let p = s.profile();
        let t = s.time();
        match *self {
            Observable::TotalJumps => p.total_jumps() as f64,
            Observable::TotalJumpsScaled => p.total_jumps() as f64 / (t * t),
            Observable::Active => s.active_count() as f64,
            Observable::ActiveScaled => s.active_count() as f64 / t,
            Observable::JumpCount(r) => p.part(r.max(1)) as f64,
            Observable::JumpRate(r) => p.part(r.max(1)) as f64 / t,
            Observable::ParticlesRight(k) => particle_count_right(p, k) as f64,
            Observable::HolesLeft(k) => hole_count_left(p, k) as f64,
            Observable::ScaledHeight(u) => particle_count_right(p, scaled_site(u, t)) as f64 / t,
        }
    }

    /// Limit value the observable is compared against, when one exists.
    pub fn reference(&self, t: f64) -> Option<f64> {
        match *self {
            Observable::TotalJumpsScaled => Some(reference::TOTAL_JUMPS_LIMIT),
            Observable::ActiveScaled => Some(reference::ACTIVE_LIMIT),
            Observable::JumpCount(1) => Some(t),
            Observable::JumpRate(1) => Some(1.0),
            Observable::ScaledHeight(u) => Some(reference::h(u)),
            _ => None,
        }
    }

    fn needs_positive_time(&self) -> bool {
        matches!(
            self,
            Observable::TotalJumpsScaled
                | Observable::ActiveScaled
                | Observable::JumpRate(_)
                | Observable::ScaledHeight(_)
        )
    }
}

/// Inputs of [`run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub master_seed: u64,
    pub replicas: usize,
    pub checkpoints: Vec<f64>,
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Verify the exact configuration identities at every checkpoint.
    #[serde(default = "default_true")]
    pub check_identities: bool,
}

fn default_true() -> bool {
    true
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas < 2 {
            return Err(invalid(
                "replicas",
                format!("need at least 2, got {}", self.replicas),
            ));
        }
        if self.checkpoints.is_empty() {
            return Err(invalid("t", "no checkpoint times given"));
        }
        for &t in &self.checkpoints {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(invalid(
                    "t",
                    format!("checkpoint times must be nonnegative, got {t}"),
                ));
            }
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("t", "checkpoint times must be strictly increasing"));
        }
        if self.checkpoints[0] == 0.0
            && self.observables.iter().any(Observable::needs_positive_time)
        {
            return Err(invalid("t", "scaled observables need t > 0"));
        }
        for o in &self.observables {
            if let Observable::JumpCount(0) | Observable::JumpRate(0) = o {
                return Err(invalid("r", "particle index must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn plan(&self) -> ReplicaPlan {
        ReplicaPlan::new(self.master_seed, self.replicas).with_threads(self.threads)
    }
}

/// Aggregate of one observable at one time, also one row of the estimates CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub suite: String,
    pub observable: String,
    pub t: f64,
    /// `k`, `u` or `r` for indexed observables.
    pub index: String,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub n: u64,
    pub reference: Option<f64>,
    pub pass: Option<bool>,
}

impl EnsembleEstimate {
    pub fn new(
        suite: &str,
        observable: impl Into<String>,
        t: f64,
        index: impl Into<String>,
        acc: &Accumulator,
    ) -> Self {
        Self {
            suite: suite.into(),
            observable: observable.into(),
            t,
            index: index.into(),
            mean: acc.mean(),
            variance: acc.variance(),
            stderr: acc.stderr(),
            n: acc.count(),
            reference: None,
            pass: None,
        }
    }

    pub fn with_reference(mut self, reference: Option<f64>) -> Self {
        self.reference = reference;
        self
    }

    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = Some(pass);
        self
    }

    pub fn abs_dev(&self) -> Option<f64> {
        self.reference.map(|r| (self.mean - r).abs())
    }

    pub fn rel_dev(&self) -> Option<f64> {
        self.reference
            .filter(|&r| r != 0.0)
            .map(|r| (self.mean - r).abs() / r.abs())
    }
}

/// Result of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    pub estimates: Vec<EnsembleEstimate>,
    pub events: u64,
}

/// Runs every replica through all checkpoints on one trajectory and
/// aggregates each `(observable, checkpoint)` pair.
pub fn run(config: &EnsembleConfig) -> Result<EnsembleRun> {
    config.validate()?;
    let width = config.checkpoints.len() * config.observables.len();
    let samples = run_replicas(&config.plan(), width, |state, row| {
        for &t in &config.checkpoints {
            state.advance_to(t)?;
            if config.check_identities {
                let window = standard_window(state.profile(), t);
                check_exact_identities(state.profile(), window)
                    .map_err(|detail| invalid("identity", format!("t = {t}: {detail}")))?;
            }
            row.extend(config.observables.iter().map(|o| o.evaluate(state)));
        }
        Ok(())
    })?;
    let mut estimates = Vec::with_capacity(width);
    for (j, &t) in config.checkpoints.iter().enumerate() {
        for (o, obs) in config.observables.iter().enumerate() {
            let acc = samples.accumulate(j * config.observables.len() + o);
            estimates.push(
                EnsembleEstimate::new("simulate", obs.name(), t, obs.index_label(), &acc)
                    .with_reference(obs.reference(t)),
            );
        }
    }
    Ok(EnsembleRun {
        estimates,
        events: samples.events,
    })
}
