//! Acceptance criteria, one PASS/FAIL line each; exits nonzero if any fails.
//!
//! Run with `cargo test --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use tasep_lab::ensemble::{self, EnsembleConfig, EnsembleEstimate, Observable};
use tasep_lab::io::write_estimates;
use tasep_lab::observables::{check_exact_identities, standard_window};
use tasep_lab::oracle::{derivative_identity_check, OracleObservable, TruncatedStateSpace};
use tasep_lab::suites::{
    derivative_suite, duality_suite, lemma1_suite, limits_suite, profile_suite, rightmost_suite,
    Check, SuiteReport, VerifyConfig,
};
use tasep_lab::{reference, RngStreamSpec, SimState};

struct Outcome {
    name: &'static str,
    checks: Vec<Check>,
    info: Vec<String>,
}

impl Outcome {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checks: Vec::new(),
            info: Vec::new(),
        }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn config(replicas: usize, times: &[f64]) -> VerifyConfig {
    VerifyConfig {
        master_seed: 20_240_601,
        replicas,
        times: times.to_vec(),
        ..VerifyConfig::default()
    }
}

fn suite_checks(out: &mut Outcome, report: &SuiteReport, select: impl Fn(&Check) -> bool) {
    out.checks
        .extend(report.checks.iter().filter(|c| select(c)).cloned());
}

fn identities() -> Outcome {
    let mut out = Outcome::new("exact identities on every state (10^3 trajectories to t = 20)");
    let mut states = 0u64;
    let mut failure = None;
    for i in 0..1_000 {
        let mut s = SimState::new_step_ic(RngStreamSpec::new(99, i));
        let result = s.advance_to_with(20.0, |st| {
            states += 1;
            let p = st.profile();
            check_exact_identities(p, standard_window(p, st.time()))
                .map_err(tasep_lab::Error::InvalidProfile)?;
            if st.active_set().len() != p.active_count() {
                return Err(tasep_lab::Error::InvalidProfile(
                    "active set out of sync".into(),
                ));
            }
            Ok(())
        });
        if let Err(e) = result {
            failure = Some(format!("replica {i}: {e}"));
            break;
        }
    }
    out.check(
        "area sum, S'(k) = k - 1 + S(k - 1), pair sum, a ≤ P + 1, partition order",
        failure.is_none(),
        failure.unwrap_or_else(|| format!("{states} states checked")),
    );
    out
}

fn oracle_equivalence() -> Outcome {
    let mut out = Outcome::new("oracle equivalence (t = 1, K = 25, R = 10^5)");
    let k25 = TruncatedStateSpace::build(25).unwrap();
    let k30 = TruncatedStateSpace::build(30).unwrap();
    let run = ensemble::run(&EnsembleConfig {
        master_seed: 31_337,
        replicas: 100_000,
        checkpoints: vec![1.0],
        observables: vec![Observable::TotalJumps, Observable::Active],
        threads: None,
        check_identities: false,
    })
    .unwrap();
    for (e, obs) in run
        .estimates
        .iter()
        .zip([OracleObservable::TotalJumps, OracleObservable::Active])
    {
        let o = k25.expectation(1.0, &obs).unwrap();
        let dev = (e.mean - o.value).abs();
        let allowed = 3.0 * e.stderr + o.error_bound;
        out.check(
            format!("Monte Carlo E {} vs oracle", e.observable),
            dev <= allowed,
            format!(
                "MC {:.5} ± {:.5}, oracle {:.7} (bound {:.1e}), |diff| {dev:.5} ≤ {allowed:.5}",
                e.mean, e.stderr, o.value, o.error_bound
            ),
        );
        let o30 = k30.expectation(1.0, &obs).unwrap();
        let gap = (o.value - o30.value).abs();
        out.check(
            format!("K = 25 vs K = 30 for E {}", e.observable),
            gap <= o.error_bound + o30.error_bound,
            format!("|diff| {gap:.2e} ≤ {:.2e}", o.error_bound + o30.error_bound),
        );
    }
    let mut worst = 0.0f64;
    let mut sizes_match = true;
    for k in 1..=4usize {
        let space = TruncatedStateSpace::build(k).unwrap();
        sizes_match &= space.len() == common::brute_states(k as u64).len();
        for t in [0.1, 0.25, 0.5] {
            let exact = common::taylor_transient(k as u64, t);
            let d = space.transient_distribution(t).unwrap();
            for (s, p) in space.states().iter().zip(&d.probs) {
                worst = worst.max((p - exact[s.parts()]).abs());
            }
        }
    }
    out.check(
        "K ≤ 4 uniformization vs Taylor matrix exponential",
        sizes_match && worst < 1e-10,
        format!("max |diff| {worst:.2e}"),
    );
    out
}

fn limit_info(out: &mut Outcome, report: &SuiteReport, observable: &str, limit: f64, tol: f64) {
    let rows: Vec<&EnsembleEstimate> = report
        .estimates
        .iter()
        .filter(|e| e.observable == observable)
        .collect();
    let ts: Vec<f64> = rows.iter().map(|e| e.t).collect();
    let ds: Vec<f64> = rows.iter().map(|e| (e.mean - limit).abs()).collect();
    if ds.iter().all(|&d| d > 0.0) {
        let p = tasep_lab::stats::log_log_slope(&ts, &ds);
        let lt = ts.iter().map(|t| t.ln()).sum::<f64>() / ts.len() as f64;
        let ld = ds.iter().map(|d| d.ln()).sum::<f64>() / ds.len() as f64;
        let c = (ld - p * lt).exp();
        let t_needed = (tol / c).powf(1.0 / p);
        out.info.push(format!(
            "{observable}: |mean - {limit:.4}| ≈ {c:.3}·t^{p:.3}; reaching {tol} at this rate needs t ≈ {t_needed:.0}"
        ));
    }
}

fn limits(
    report: &SuiteReport,
    observable: &'static str,
    limit: f64,
    title: &'static str,
) -> Outcome {
    let mut out = Outcome::new(title);
    suite_checks(&mut out, report, |c| c.name.starts_with(observable));
    limit_info(&mut out, report, observable, limit, 0.01);
    out
}

fn derivative() -> Outcome {
    let mut out =
        Outcome::new("E a_t = d/dt E P_t (t = 10, h = 0.05, R = 10^5; oracle at t = 0.5)");
    let report = derivative_suite(&config(100_000, &[1.0, 10.0])).unwrap();
    suite_checks(&mut out, &report, |c| {
        c.name.starts_with("paired difference at t=10")
            || c.name.starts_with("bias shrinks")
            || c.name.starts_with("oracle")
    });
    for c in report
        .checks
        .iter()
        .filter(|c| c.name.starts_with("difference within"))
    {
        out.info
            .push(format!("{}: {} ({})", c.name, verdict(c.pass), c.detail));
    }
    let space = TruncatedStateSpace::build(25).unwrap();
    let d = derivative_identity_check(&space, 0.5, 1e-3).unwrap();
    out.check(
        "oracle |D - A| at t = 0.5",
        d.abs_diff < 1e-5,
        format!(
            "central difference {:.9}, E a {:.9}, |D - A| {:.2e}",
            d.central_difference, d.active, d.abs_diff
        ),
    );
    out
}

fn profiles() -> Outcome {
    let mut out = Outcome::new("profiles h, f, f^2 at t = 200 (R = 10^4)");
    let report = profile_suite(&config(10_000, &[200.0])).unwrap();
    suite_checks(&mut out, &report, |_| true);
    for name in ["density", "pair"] {
        let mut rows: Vec<&EnsembleEstimate> = report
            .estimates
            .iter()
            .filter(|e| e.observable == name && e.pass == Some(false))
            .collect();
        rows.sort_by(|a, b| b.abs_dev().unwrap().total_cmp(&a.abs_dev().unwrap()));
        for e in rows.iter().take(4) {
            out.info.push(format!(
                "{name} bin u = {}: mean {:.4} ± {:.4} vs bin-averaged reference {:.4}",
                e.index,
                e.mean,
                e.stderr,
                e.reference.unwrap()
            ));
        }
    }
    out
}

fn rightmost() -> Outcome {
    let mut out = Outcome::new("E N^(r)/t for r ≤ 5, t ∈ {25, 50, 100, 200} (R = 10^4)");
    let report = rightmost_suite(&config(10_000, &[25.0, 50.0, 100.0, 200.0])).unwrap();
    suite_checks(&mut out, &report, |_| true);
    if let Some(e) = report.estimate("N/t", 200.0, "5") {
        out.info
            .push(format!("r = 5, t = 200: {:.4} ± {:.4}", e.mean, e.stderr));
    }
    out
}

fn lemma1() -> Outcome {
    let mut out = Outcome::new("E S(k,t) ≤ t^(k+1)/k! for t ∈ {1, 2, 5}, k = ⌈t⌉..⌈3t⌉");
    let report = lemma1_suite(&config(10_000, &[1.0, 2.0, 5.0])).unwrap();
    suite_checks(&mut out, &report, |_| true);
    out
}

fn duality() -> Outcome {
    let mut out = Outcome::new("particle-hole duality, k = 0..10, t = 10 (R = 10^4)");
    let report = duality_suite(&config(10_000, &[10.0])).unwrap();
    suite_checks(&mut out, &report, |c| !c.name.starts_with("variances"));
    for c in report
        .checks
        .iter()
        .filter(|c| c.name.starts_with("variances"))
    {
        out.info
            .push(format!("{}: {} ({})", c.name, verdict(c.pass), c.detail));
    }
    out
}

fn csv_bytes(threads: usize) -> Vec<u8> {
    let run = ensemble::run(&EnsembleConfig {
        master_seed: 7,
        replicas: 2_000,
        checkpoints: vec![1.0, 5.0, 20.0],
        observables: vec![
            Observable::TotalJumps,
            Observable::Active,
            Observable::JumpCount(1),
            Observable::ParticlesRight(3),
        ],
        threads: Some(threads),
        check_identities: true,
    })
    .unwrap();
    let mut report = lemma1_suite(&VerifyConfig {
        threads: Some(threads),
        ..config(500, &[1.0, 2.0])
    })
    .unwrap();
    let mut rows = run.estimates;
    rows.append(&mut report.estimates);
    let mut buf = Vec::new();
    write_estimates(&mut buf, &rows).unwrap();
    buf
}

fn reproducibility() -> Outcome {
    let mut out = Outcome::new("byte-identical CSV across thread counts");
    let one = csv_bytes(1);
    for threads in [2, 3, 8] {
        let other = csv_bytes(threads);
        out.check(
            format!("1 thread vs {threads} threads"),
            one == other,
            format!("{} bytes", one.len()),
        );
    }
    out
}

fn main() -> ExitCode {
    // libtest-style flags (e.g. --nocapture) are accepted and ignored
    let started = Instant::now();
    let limits_report = limits_suite(&config(10_000, &[25.0, 50.0, 100.0, 200.0])).unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("identities", Box::new(identities)),
        ("oracle", Box::new(oracle_equivalence)),
        (
            "pole",
            Box::new(|| {
                limits(
                    &limits_report,
                    "P/t^2",
                    reference::TOTAL_JUMPS_LIMIT,
                    "E P_t/t^2 → 1/6 (R = 10^4)",
                )
            }),
        ),
        (
            "active",
            Box::new(|| {
                limits(
                    &limits_report,
                    "a/t",
                    reference::ACTIVE_LIMIT,
                    "E a_t/t → 1/3 (R = 10^4)",
                )
            }),
        ),
        ("derivative", Box::new(derivative)),
        ("profiles", Box::new(profiles)),
        ("rightmost", Box::new(rightmost)),
        ("lemma1", Box::new(lemma1)),
        ("duality", Box::new(duality)),
        ("reproducibility", Box::new(reproducibility)),
    ];
    let mut failed = Vec::new();
    for (key, criterion) in &criteria {
        let t0 = Instant::now();
        let o = criterion();
        println!(
            "{} [{key}] {} ({:.1}s)",
            verdict(o.passed()),
            o.name,
            t0.elapsed().as_secs_f64()
        );
        for c in &o.checks {
            println!("    {} {}: {}", verdict(c.pass), c.name, c.detail);
        }
        for line in &o.info {
            println!("    info: {line}");
        }
        if !o.passed() {
            failed.push(*key);
        }
    }
    let total = criteria.len();
    println!(
        "acceptance: {}/{total} criteria passed in {:.1}s{}",
        total - failed.len(),
        started.elapsed().as_secs_f64(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {}", failed.join(", "))
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
