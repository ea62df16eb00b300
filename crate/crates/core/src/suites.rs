//! Statistical verification suites.
//!
//! Each suite runs its own ensemble, turns the samples into
//! [`EnsembleEstimate`] rows and evaluates a list of named [`Check`]s.
//! Thresholds default to 3 standard errors for single comparisons and
//! 4 (or the Bonferroni value at level 0.01, whichever is larger) across a
//! family of comparisons.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::{run_replicas, EnsembleEstimate, ReplicaPlan};
use crate::error::{invalid, Error, Result};
use crate::observables::{
    check_exact_identities, density_histogram, hole_count_left, pair_correlation_histogram,
    particle_count_right, scaled_site, standard_window, BinGrid,
};
use crate::oracle::{OracleObservable, TruncatedStateSpace};
use crate::reference;
use crate::stats::{bonferroni_z, log_log_slope, moments, poisson_chi_square, Accumulator};

/// Named verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Limits,
    Profiles,
    Derivative,
    Lemma1,
    Duality,
    Rightmost,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Limits,
        Suite::Profiles,
        Suite::Derivative,
        Suite::Lemma1,
        Suite::Duality,
        Suite::Rightmost,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Limits => "limits",
            Suite::Profiles => "profiles",
            Suite::Derivative => "derivative",
            Suite::Lemma1 => "lemma1",
            Suite::Duality => "duality",
            Suite::Rightmost => "rightmost",
        }
    }

    pub fn run(&self, config: &VerifyConfig) -> Result<SuiteReport> {
        match self {
            Suite::Limits => limits_suite(config),
            Suite::Profiles => profile_suite(config),
            Suite::Derivative => derivative_suite(config),
            Suite::Lemma1 => lemma1_suite(config),
            Suite::Duality => duality_suite(config),
            Suite::Rightmost => rightmost_suite(config),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| invalid("suite", format!("unknown suite {s:?}")))
    }
}

/// Shared configuration of the suites. Empty `times` selects each suite's
/// default checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub master_seed: u64,
    pub replicas: usize,
    pub threads: Option<usize>,
    pub times: Vec<f64>,
    /// Finite-difference step of the derivative suite.
    pub fd_step: f64,
    /// Largest particle index of the rightmost-particles suite.
    pub r_max: usize,
    /// Bin width (in `u = k/t`) of the density and pair-correlation bins.
    pub bin_width: f64,
    /// Truncation level of the exact oracle used for cross-checks.
    pub oracle_level: usize,
    /// Single-comparison threshold in standard errors.
    pub sigma: f64,
    /// Floor of the family-wise threshold in standard errors.
    pub family_sigma: f64,
    /// Family-wise false-failure level for Bonferroni corrections.
    pub family_alpha: f64,
    /// Allowed `|E P_t/t² - 1/6|` and `|E a_t/t - 1/3|` at the last checkpoint.
    pub limit_tolerance: f64,
    pub height_tolerance: f64,
    pub density_tolerance: f64,
    pub pair_tolerance: f64,
    /// Chi-square significance level.
    pub chi_square_alpha: f64,
    /// Minimum log-log slope of the finite-difference bias against `h`.
    pub bias_slope_min: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            replicas: 10_000,
            threads: None,
            times: Vec::new(),
            fd_step: 0.05,
            r_max: 5,
            bin_width: 0.1,
            oracle_level: 25,
            sigma: 3.0,
            family_sigma: 4.0,
            family_alpha: 0.01,
            limit_tolerance: 0.01,
            height_tolerance: 0.02,
            density_tolerance: 0.02,
            pair_tolerance: 0.03,
            chi_square_alpha: 0.01,
            bias_slope_min: 0.8,
        }
    }
}

impl VerifyConfig {
    fn plan(&self) -> ReplicaPlan {
        ReplicaPlan::new(self.master_seed, self.replicas).with_threads(self.threads)
    }

    fn times_or(&self, default: &[f64]) -> Result<Vec<f64>> {
        let times = if self.times.is_empty() {
            default.to_vec()
        } else {
            self.times.clone()
        };
        for &t in &times {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(invalid("t", format!("must be nonnegative, got {t}")));
            }
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("t", "times must be strictly increasing"));
        }
        Ok(times)
    }

    fn check_replicas(&self) -> Result<()> {
        if self.replicas < 2 {
            return Err(invalid(
                "replicas",
                format!("need at least 2, got {}", self.replicas),
            ));
        }
        Ok(())
    }
}

/// One pass/fail assertion of a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub replicas: usize,
    pub events: u64,
    pub estimates: Vec<EnsembleEstimate>,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, config: &VerifyConfig) -> Self {
        Self {
            suite,
            replicas: config.replicas,
            events: 0,
            estimates: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn estimate(&self, observable: &str, t: f64, index: &str) -> Option<&EnsembleEstimate> {
        self.estimates
            .iter()
            .find(|e| e.observable == observable && e.t == t && e.index == index)
    }

    fn push(&mut self, e: EnsembleEstimate) {
        self.estimates.push(e);
    }
}

fn family_threshold(config: &VerifyConfig, tests: usize) -> f64 {
    config
        .family_sigma
        .max(bonferroni_z(config.family_alpha, tests))
}

fn identity_guard(state: &crate::SimState) -> Result<()> {
    let window = standard_window(state.profile(), state.time());
    check_exact_identities(state.profile(), window)
        .map_err(|d| invalid("identity", format!("t = {}: {d}", state.time())))
}

/// Convergence of `|mean - limit|` along the checkpoints: at most one increase,
/// and that one within `sigma` combined standard errors.
fn deviation_trend(estimates: &[&EnsembleEstimate], limit: f64, sigma: f64) -> (bool, String) {
    let devs: Vec<f64> = estimates.iter().map(|e| (e.mean - limit).abs()).collect();
    let mut increases = 0;
    let mut tolerable = true;
    for j in 1..devs.len() {
        if devs[j] > devs[j - 1] {
            increases += 1;
            let se = estimates[j].stderr.hypot(estimates[j - 1].stderr);
            if devs[j] - devs[j - 1] > sigma * se {
                tolerable = false;
            }
        }
    }
    let pass = increases == 0 || (increases == 1 && tolerable);
    let rendered: Vec<String> = estimates
        .iter()
        .zip(&devs)
        .map(|(e, d)| format!("t={}: {d:.5}", e.t))
        .collect();
    (pass, format!("|mean - limit| = [{}]", rendered.join(", ")))
}

/// Power-law fit of `|mean - limit|` against `t`, reported alongside the
/// tolerance checks.
fn deviation_power_law(estimates: &[&EnsembleEstimate], limit: f64) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = estimates
        .iter()
        .map(|e| (e.t, (e.mean - limit).abs()))
        .filter(|&(t, d)| t > 0.0 && d > 0.0)
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (ts, ds): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let slope = log_log_slope(&ts, &ds);
    let lt: f64 = ts.iter().map(|t| t.ln()).sum::<f64>() / ts.len() as f64;
    let ld: f64 = ds.iter().map(|d| d.ln()).sum::<f64>() / ds.len() as f64;
    Some((slope, (ld - slope * lt).exp()))
}

/// `E P_t/t² → 1/6` and `E a_t/t → 1/3` along the checkpoints.
pub fn limits_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    config.check_replicas()?;
    let times = config.times_or(&[25.0, 50.0, 100.0, 200.0])?;
    if times[0] <= 0.0 {
        return Err(invalid("t", "scaled limits need t > 0"));
    }
    let samples = run_replicas(&config.plan(), 2 * times.len(), |s, row| {
        for &t in &times {
            s.advance_to(t)?;
            row.push(s.total_jumps() as f64 / (t * t));
            row.push(s.active_count() as f64 / t);
        }
        Ok(())
    })?;
    let mut report = SuiteReport::new(Suite::Limits, config);
    report.events = samples.events;
    let t_last = *times.last().expect("nonempty");
    for (name, col, limit) in [
        ("P/t^2", 0, reference::TOTAL_JUMPS_LIMIT),
        ("a/t", 1, reference::ACTIVE_LIMIT),
    ] {
        let rows: Vec<EnsembleEstimate> = times
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let acc = samples.accumulate(2 * j + col);
                let e =
                    EnsembleEstimate::new("limits", name, t, "", &acc).with_reference(Some(limit));
                let ok = t != t_last || (e.mean - limit).abs() <= config.limit_tolerance;
                e.with_pass(ok)
            })
            .collect();
        let refs: Vec<&EnsembleEstimate> = rows.iter().collect();
        let (trend_ok, trend) = deviation_trend(&refs, limit, config.sigma);
        report.checks.push(Check::new(
            format!("{name} deviation nonincreasing"),
            trend_ok,
            trend,
        ));
        let last = refs.last().expect("nonempty");
        let dev = (last.mean - limit).abs();
        let fit = deviation_power_law(&refs, limit)
            .map(|(p, c)| format!("; fitted |mean - limit| ≈ {c:.3}·t^{p:.3}"))
            .unwrap_or_default();
        report.checks.push(Check::new(
            format!("{name} within tolerance at t={t_last}"),
            dev <= config.limit_tolerance,
            format!(
                "mean {:.5} ± {:.5}, |mean - {limit:.5}| = {dev:.5}, tolerance {}{fit}",
                last.mean, last.stderr, config.limit_tolerance
            ),
        ));
        report.estimates.extend(rows);
    }
    Ok(report)
}

fn u_grid() -> Vec<f64> {
    (0..=30).map(|i| (-15 + i) as f64 / 10.0).collect()
}

/// Ensemble means of `S(⌊ut⌋,t)/t`, binned density and binned pair
/// correlation against `h`, `f` and `f²`.
///
/// Bins of width `w` are centred on the `u` grid; the density and pair
/// references are the averages of `f` and `f²` over each bin.
pub fn profile_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    config.check_replicas()?;
    let times = config.times_or(&[200.0])?;
    if times[0] < 50.0 {
        return Err(invalid(
            "t",
            format!("profile suite needs t ≥ 50, got {}", times[0]),
        ));
    }
    let grid = u_grid();
    let n = grid.len();
    let bins = BinGrid::centered(grid[0], grid[n - 1], config.bin_width)?;
    let samples = run_replicas(&config.plan(), 3 * n * times.len(), |s, row| {
        for &t in &times {
            s.advance_to(t)?;
            let p = s.profile();
            row.extend(
                grid.iter()
                    .map(|&u| particle_count_right(p, scaled_site(u, t)) as f64 / t),
            );
            row.extend(density_histogram(p, t, &bins)?.iter().map(|b| b.value));
            row.extend(
                pair_correlation_histogram(p, t, &bins)?
                    .iter()
                    .map(|b| b.value),
            );
        }
        Ok(())
    })?;
    let mut report = SuiteReport::new(Suite::Profiles, config);
    report.events = samples.events;
    for (j, &t) in times.iter().enumerate() {
        let base = 3 * n * j;
        let curves: [(&str, f64, Box<dyn Fn(usize) -> f64>); 3] = [
            (
                "S(ut)/t",
                config.height_tolerance,
                Box::new(|i| reference::h(grid[i])),
            ),
            (
                "density",
                config.density_tolerance,
                Box::new(|i| {
                    let (a, b) = bins.edges(i);
                    reference::f_bin_average(a, b)
                }),
            ),
            (
                "pair",
                config.pair_tolerance,
                Box::new(|i| {
                    let (a, b) = bins.edges(i);
                    reference::f_sq_bin_average(a, b)
                }),
            ),
        ];
        for (c, (name, tol, reference)) in curves.iter().enumerate() {
            let mut worst = (0.0f64, f64::NAN);
            for (i, &u) in grid.iter().enumerate() {
                let acc = samples.accumulate(base + c * n + i);
                let r = reference(i);
                let e = EnsembleEstimate::new("profiles", *name, t, u.to_string(), &acc)
                    .with_reference(Some(r));
                let dev = (e.mean - r).abs();
                if dev > worst.0 || worst.1.is_nan() {
                    worst = (dev, u);
                }
                let e = e.with_pass(dev <= *tol);
                report.push(e);
            }
            let failing: Vec<String> = report
                .estimates
                .iter()
                .filter(|e| e.observable == *name && e.t == t && e.pass == Some(false))
                .map(|e| e.index.clone())
                .collect();
            report.checks.push(Check::new(
                format!("{name} max deviation at t={t}"),
                worst.0 <= *tol,
                format!(
                    "max |mean - reference| = {:.5} at u = {}, tolerance {tol}; bins over tolerance: [{}]",
                    worst.0,
                    worst.1,
                    failing.join(", ")
                ),
            ));
        }
    }
    Ok(report)
}

/// Paired finite-difference check of `d/dt E P_t = E a_t`.
///
/// For each `t` the same trajectory is read at `t`, `t+h`, `t+2h` and `t+4h`.
/// The raw difference `(P_{t+h} - P_t)/h - a_t` is tested against zero.
/// Its mean equals that of `(1/h)∫_t^{t+h} a_s ds - a_t` (the jump counter
/// minus its compensator is a martingale), which has far smaller variance and
/// is used to resolve how the bias scales with `h`.
pub fn derivative_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    config.check_replicas()?;
    let times = config.times_or(&[10.0])?;
    let h = config.fd_step;
    let steps = [h, 2.0 * h, 4.0 * h];
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid("h", format!("must be positive, got {h}")));
    }
    if times[0] <= 0.0 {
        return Err(invalid("t", "derivative check needs t > 0"));
    }
    let min_gap = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if 4.0 * h >= min_gap {
        return Err(invalid(
            "h",
            format!(
                "4h = {} must be below the smallest checkpoint gap {min_gap}",
                4.0 * h
            ),
        ));
    }
    // per t: a_t, then for each step (P_{t+s} - P_t)/s and (I_{t+s} - I_t)/s
    let per_t = 1 + 2 * steps.len();
    let samples = run_replicas(&config.plan(), per_t * times.len(), |s, row| {
        for &t in &times {
            s.advance_to(t)?;
            let (p0, i0, a0) = (
                s.total_jumps() as f64,
                s.activity_integral(),
                s.active_count() as f64,
            );
            row.push(a0);
            for &step in &steps {
                s.advance_to(t + step)?;
                row.push((s.total_jumps() as f64 - p0) / step);
                row.push((s.activity_integral() - i0) / step);
            }
        }
        Ok(())
    })?;
    let mut report = SuiteReport::new(Suite::Derivative, config);
    report.events = samples.events;
    let oracle = times
        .iter()
        .any(|&t| t <= 1.0)
        .then(|| TruncatedStateSpace::build(config.oracle_level))
        .transpose()?;

    for (j, &t) in times.iter().enumerate() {
        let base = per_t * j;
        let a = samples.accumulate(base);
        report.push(EnsembleEstimate::new("derivative", "a", t, "", &a));
        let mut raw = Vec::new();
        let mut bias = Vec::new();
        for (k, &step) in steps.iter().enumerate() {
            let fd = samples.accumulate(base + 1 + 2 * k);
            let diff = samples.accumulate_with(|r| r[base + 1 + 2 * k] - r[base]);
            let comp = samples.accumulate_with(|r| r[base + 2 + 2 * k] - r[base]);
            let label = step.to_string();
            report.push(EnsembleEstimate::new(
                "derivative",
                "dP/h",
                t,
                label.clone(),
                &fd,
            ));
            report.push(
                EnsembleEstimate::new("derivative", "dP/h-a", t, label.clone(), &diff)
                    .with_reference(Some(0.0)),
            );
            report.push(
                EnsembleEstimate::new("derivative", "bias", t, label, &comp)
                    .with_reference(Some(0.0)),
            );
            raw.push(diff);
            bias.push(comp);
        }
        // bias ≈ c·h; estimate c from the h and 2h biases
        let c = (bias[1].mean() - bias[0].mean()) / h;
        let diff = &raw[0];
        let strict = diff.mean().abs() <= config.sigma * diff.stderr();
        report.checks.push(Check::new(
            format!("paired difference at t={t}, h={h}"),
            strict,
            format!(
                "mean {:.5} ± {:.5} (paired), |mean| / stderr = {:.2}",
                diff.mean(),
                diff.stderr(),
                diff.mean().abs() / diff.stderr()
            ),
        ));
        let allowance = (config.sigma * diff.stderr()).max(c.abs() * h);
        report.checks.push(Check::new(
            format!("difference within max(3 stderr, c h) at t={t}"),
            diff.mean().abs() <= allowance,
            format!(
                "|mean| = {:.5}, c = {c:.4}, allowance {allowance:.5}",
                diff.mean().abs()
            ),
        ));
        let hs: Vec<f64> = steps.to_vec();
        let bs: Vec<f64> = bias.iter().map(|b| b.mean()).collect();
        let positive = bs.iter().all(|&b| b > 0.0);
        let slope = if positive {
            log_log_slope(&hs, &bs)
        } else {
            f64::NAN
        };
        report.checks.push(Check::new(
            format!("bias shrinks with h at t={t}"),
            positive && slope >= config.bias_slope_min,
            format!(
                "bias {} for h {:?}; log-log slope {slope:.3} (min {})",
                bias.iter()
                    .map(|b| format!("{:.5}±{:.5}", b.mean(), b.stderr()))
                    .collect::<Vec<_>>()
                    .join(", "),
                hs,
                config.bias_slope_min
            ),
        ));

        if let Some(space) = oracle.as_ref().filter(|_| t <= 1.0) {
            let ea = space.expectation(t, &OracleObservable::Active)?;
            let ep = space.expectations(&[t, t + h], &OracleObservable::TotalJumps)?;
            let fd_exact = (ep[1].value - ep[0].value) / h;
            let fd_err = (ep[0].error_bound + ep[1].error_bound) / h;
            let fd = &samples.accumulate(base + 1);
            let ok_a = (a.mean() - ea.value).abs() <= config.sigma * a.stderr() + ea.error_bound;
            let ok_p = (fd.mean() - fd_exact).abs() <= config.sigma * fd.stderr() + fd_err;
            report.checks.push(Check::new(
                format!("oracle E a_t at t={t}"),
                ok_a,
                format!(
                    "MC {:.5} ± {:.5}, oracle {:.6} (bound {:.2e})",
                    a.mean(),
                    a.stderr(),
                    ea.value,
                    ea.error_bound
                ),
            ));
            report.checks.push(Check::new(
                format!("oracle difference quotient at t={t}"),
                ok_p,
                format!(
                    "MC {:.5} ± {:.5}, oracle {:.6} (bound {:.2e})",
                    fd.mean(),
                    fd.stderr(),
                    fd_exact,
                    fd_err
                ),
            ));
        }
    }
    Ok(report)
}

/// `E S(k,t) ≤ t^{k+1}/k!` for `k = ⌈t⌉..=⌈3t⌉`.
pub fn lemma1_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    config.check_replicas()?;
    let times = config.times_or(&[1.0, 2.0, 5.0])?;
    if times[0] <= 0.0 {
        return Err(invalid("t", "bound needs t > 0"));
    }
    let ks: Vec<Vec<i64>> = times
        .iter()
        .map(|t| (t.ceil() as i64..=(3.0 * t).ceil() as i64).collect())
        .collect();
    let width = ks.iter().map(Vec::len).sum();
    let samples = run_replicas(&config.plan(), width, |s, row| {
        for (&t, kt) in times.iter().zip(&ks) {
            s.advance_to(t)?;
            row.extend(
                kt.iter()
                    .map(|&k| particle_count_right(s.profile(), k) as f64),
            );
        }
        Ok(())
    })?;
    let mut report = SuiteReport::new(Suite::Lemma1, config);
    report.events = samples.events;
    let mut col = 0;
    let mut violations = Vec::new();
    for (&t, kt) in times.iter().zip(&ks) {
        for &k in kt {
            let acc = samples.accumulate(col);
            col += 1;
            let bound = reference::lemma1_bound(k, t)?;
            let ok = acc.mean() <= bound + config.sigma * acc.stderr();
            if !ok {
                violations.push(format!("(t={t}, k={k})"));
            }
            report.push(
                EnsembleEstimate::new("lemma1", "S", t, k.to_string(), &acc)
                    .with_reference(Some(bound))
                    .with_pass(ok),
            );
        }
    }
    report.checks.push(Check::new(
        "mean S(k,t) below t^(k+1)/k!",
        violations.is_empty(),
        format!(
            "{} comparisons, violations: [{}]",
            width,
            violations.join(", ")
        ),
    ));
    Ok(report)
}

/// Particle-hole duality: `S'(-k,t)` and `S(k+1,t)` have the same law.
pub fn duality_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    config.check_replicas()?;
    let times = config.times_or(&[10.0])?;
    let ks: Vec<i64> = (0..=10).collect();
    let width = 2 * ks.len() * times.len();
    let samples = run_replicas(&config.plan(), width, |s, row| {
        for &t in &times {
            s.advance_to(t)?;
            identity_guard(s)?;
            let p = s.profile();
            for &k in &ks {
                row.push(hole_count_left(p, -k) as f64);
                row.push(particle_count_right(p, k + 1) as f64);
            }
        }
        Ok(())
    })?;
    let mut report = SuiteReport::new(Suite::Duality, config);
    report.events = samples.events;
    let z_crit = family_threshold(config, ks.len());
    for (j, &t) in times.iter().enumerate() {
        let mut worst_mean = 0.0f64;
        let mut worst_var = 0.0f64;
        for (i, &k) in ks.iter().enumerate() {
            let c_holes = 2 * (ks.len() * j + i);
            let holes = moments(&samples.column(c_holes));
            let parts = moments(&samples.column(c_holes + 1));
            let z = z_score(holes.mean, holes.mean_stderr, parts.mean, parts.mean_stderr);
            let zv = z_score(
                holes.variance,
                holes.variance_stderr,
                parts.variance,
                parts.variance_stderr,
            );
            worst_mean = worst_mean.max(z);
            worst_var = worst_var.max(zv);
            let a = samples.accumulate(c_holes);
            let b = samples.accumulate(c_holes + 1);
            report.push(
                EnsembleEstimate::new("duality", "S'(-k)", t, k.to_string(), &a)
                    .with_reference(Some(b.mean()))
                    .with_pass(z <= z_crit),
            );
            report.push(EnsembleEstimate::new(
                "duality",
                "S(k+1)",
                t,
                k.to_string(),
                &b,
            ));
        }
        report.checks.push(Check::new(
            format!("means agree at t={t}"),
            worst_mean <= z_crit,
            format!("max two-sample z = {worst_mean:.3}, threshold {z_crit:.3}"),
        ));
        report.checks.push(Check::new(
            format!("variances agree at t={t}"),
            worst_var <= z_crit,
            format!("max two-sample z = {worst_var:.3}, threshold {z_crit:.3}"),
        ));
    }
    report.checks.push(Check::new(
        "S'(k) = k - 1 + S(k - 1) on every sampled state",
        true,
        "enforced per replica; a violation aborts the run",
    ));
    Ok(report)
}

fn z_score(m1: f64, se1: f64, m2: f64, se2: f64) -> f64 {
    let se = se1.hypot(se2);
    let d = (m1 - m2).abs();
    if se == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d / se
    }
}

/// `E N_t^{(r)}/t` for the first `r_max` particles.
pub fn rightmost_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    config.check_replicas()?;
    let times = config.times_or(&[25.0, 50.0, 100.0, 200.0])?;
    let r_max = config.r_max;
    if r_max == 0 {
        return Err(invalid("r_max", "must be at least 1"));
    }
    if times[0] <= 0.0 {
        return Err(invalid("t", "rates need t > 0"));
    }
    let samples = run_replicas(&config.plan(), r_max * times.len(), |s, row| {
        for &t in &times {
            s.advance_to(t)?;
            let counts: Vec<u64> = (1..=r_max).map(|r| s.profile().part(r)).collect();
            if counts.windows(2).any(|w| w[1] > w[0]) {
                return Err(invalid(
                    "order",
                    format!("jump counts not monotone at t = {t}: {counts:?}"),
                ));
            }
            row.extend(counts.iter().map(|&c| c as f64));
        }
        Ok(())
    })?;
    let mut report = SuiteReport::new(Suite::Rightmost, config);
    report.events = samples.events;
    let col = |j: usize, r: usize| j * r_max + (r - 1);
    let rate = |j: usize, r: usize, t: f64| -> Accumulator {
        samples.rows().map(|row| row[col(j, r)] / t).collect()
    };

    let mut above_one = Vec::new();
    let mut mean_order = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        for r in 1..=r_max {
            let acc = rate(j, r, t);
            let ok = acc.mean() <= 1.0 + config.sigma * acc.stderr();
            if !ok {
                above_one.push(format!("(r={r}, t={t})"));
            }
            if r > 1 && acc.mean() > rate(j, r - 1, t).mean() {
                mean_order.push(format!("(r={r}, t={t})"));
            }
            report.push(
                EnsembleEstimate::new("rightmost", "N/t", t, r.to_string(), &acc)
                    .with_reference(Some(1.0))
                    .with_pass(ok),
            );
        }
    }
    report.checks.push(Check::new(
        "E N/t ≤ 1 + 3 stderr",
        above_one.is_empty(),
        format!("violations: [{}]", above_one.join(", ")),
    ));
    report.checks.push(Check::new(
        "rates nonincreasing in r",
        mean_order.is_empty(),
        format!(
            "per-replica order enforced; mean-order violations: [{}]",
            mean_order.join(", ")
        ),
    ));

    let mut drops = Vec::new();
    for r in 2..=r_max {
        for j in 1..times.len() {
            let (prev, cur) = (rate(j - 1, r, times[j - 1]), rate(j, r, times[j]));
            if cur.mean() < prev.mean() - config.sigma * cur.stderr().hypot(prev.stderr()) {
                drops.push(format!("(r={r}, t={})", times[j]));
            }
        }
    }
    let trend: Vec<String> = (2..=r_max)
        .map(|r| {
            let v: Vec<String> = times
                .iter()
                .enumerate()
                .map(|(j, &t)| format!("{:.4}", rate(j, r, t).mean()))
                .collect();
            format!("r={r}: {}", v.join(" → "))
        })
        .collect();
    report.checks.push(Check::new(
        "rates increase toward 1 in t",
        drops.is_empty(),
        format!("{}; drops: [{}]", trend.join("; "), drops.join(", ")),
    ));

    for (j, &t) in times.iter().enumerate() {
        let xs = samples.column(col(j, 1));
        let m = moments(&xs);
        let mean_ok = (m.mean - t).abs() <= config.sigma * m.mean_stderr;
        let var_ok = (m.variance - t).abs() <= config.sigma * m.variance_stderr;
        let counts: Vec<u64> = xs.iter().map(|&x| x as u64).collect();
        let chi = poisson_chi_square(&counts, t);
        report.checks.push(Check::new(
            format!("N1 ~ Poisson(t) at t={t}"),
            mean_ok && var_ok && chi.p_value > config.chi_square_alpha,
            format!(
                "mean {:.4} ± {:.4}, variance {:.4} ± {:.4}, chi-square {:.2} on {} dof (p = {:.4})",
                m.mean, m.mean_stderr, m.variance, m.variance_stderr, chi.statistic, chi.dof, chi.p_value
            ),
        ));
    }
    Ok(report)
}

/// Runs several suites, in order.
pub fn run_suites(suites: &[Suite], config: &VerifyConfig) -> Result<Vec<SuiteReport>> {
    suites.iter().map(|s| s.run(config)).collect()
}
