//! The uniformization oracle against a brute-force matrix exponential, and
//! the two samplers against the oracle.

mod common;

use common::{brute_states, taylor_transient};
use tasep_lab::oracle::{OracleObservable, TruncatedStateSpace};
use tasep_lab::stats::{bonferroni_z, Accumulator};
use tasep_lab::{ClockReference, RngStreamSpec, SimState};

#[test]
fn uniformization_matches_taylor_exponential() {
    for k in 1..=4usize {
        let space = TruncatedStateSpace::build(k).unwrap();
        let brute = brute_states(k as u64);
        assert_eq!(space.len(), brute.len(), "K = {k}");
        for &t in &[0.05, 0.2, 0.5] {
            let exact = taylor_transient(k as u64, t);
            let d = space.transient_distribution(t).unwrap();
            for (state, p) in space.states().iter().zip(&d.probs) {
                let q = exact[state.parts()];
                assert!(
                    (p - q).abs() < 1e-10,
                    "K = {k}, t = {t}, {:?}: {p} vs {q}",
                    state.parts()
                );
            }
        }
    }
}

#[test]
fn two_levels_agree_within_bounds() {
    let a = TruncatedStateSpace::build(25).unwrap();
    let b = TruncatedStateSpace::build(30).unwrap();
    for obs in [
        OracleObservable::TotalJumps,
        OracleObservable::Active,
        OracleObservable::JumpCount(1),
    ] {
        let x = a.expectation(1.0, &obs).unwrap();
        let y = b.expectation(1.0, &obs).unwrap();
        assert!(
            (x.value - y.value).abs() <= x.error_bound + y.error_bound,
            "{obs:?}: {x:?} vs {y:?}"
        );
    }
}

#[test]
fn gillespie_and_clock_reference_match_oracle_state_law() {
    let t = 1.0;
    let r = 40_000u64;
    let space = TruncatedStateSpace::build(25).unwrap();
    let exact = space.transient_distribution(t).unwrap();
    let tracked: Vec<usize> = (0..space.len())
        .filter(|&i| exact.probs[i] > 0.02)
        .collect();
    assert!(tracked.len() >= 5);
    let z_crit = bonferroni_z(0.01, 2 * tracked.len()).max(4.0);

    let mut gillespie = vec![0u64; space.len()];
    let mut clocks = vec![0u64; space.len()];
    let (mut pg, mut pc) = (Accumulator::default(), Accumulator::default());
    for i in 0..r {
        let mut s = SimState::new_step_ic(RngStreamSpec::new(2024, i));
        s.advance_to(t).unwrap();
        pg.push(s.total_jumps() as f64);
        if let Some(j) = space.index_of(s.profile().parts()) {
            gillespie[j] += 1;
        }
        let mut c = ClockReference::new(RngStreamSpec::new(4048, i), 40);
        c.advance_to(t).unwrap();
        pc.push(c.profile().total_jumps() as f64);
        if let Some(j) = space.index_of(c.profile().parts()) {
            clocks[j] += 1;
        }
    }
    for &j in &tracked {
        let p = exact.probs[j];
        let sd = (r as f64 * p * (1.0 - p)).sqrt();
        for (name, counts) in [("gillespie", &gillespie), ("clocks", &clocks)] {
            let z = (counts[j] as f64 - r as f64 * p).abs() / sd;
            assert!(
                z < z_crit,
                "{name} {:?}: z = {z:.2}",
                space.states()[j].parts()
            );
        }
    }
    let ep = space.expectation(t, &OracleObservable::TotalJumps).unwrap();
    for acc in [&pg, &pc] {
        assert!((acc.mean() - ep.value).abs() <= 3.0 * acc.stderr() + ep.error_bound);
    }
}
