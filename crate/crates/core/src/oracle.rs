//! Exact expectations at small times.
//!
//! The chain is restricted to partitions of size at most `K`, with every state
//! of size `K` made absorbing, and its transient law is computed by
//! uniformization. The truncated and the true process coincide until the
//! total jump count reaches `K`.
//!
//! Truncation bound: a particle can only become active through a jump, so
//! `a ≤ P + 1` and the jump counter is dominated by a Yule process started
//! from one individual. Its value at time `t` is geometric, hence
//! `P(P_t ≥ n) ≤ q^n` with `q = 1 - e^{-t}`. An observable that changes by at
//! most `L` per jump then differs between the two chains by at most
//! `L·E(P_t - K)^+ ≤ L·q^{K+1}/(1 - q)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{invalid, Result};
use crate::observables::particle_count_right;
use crate::profile::JumpProfile;

/// Largest supported truncation level.
pub const K_MAX: usize = 30;

/// Poisson mass left out of the uniformization series.
pub const POISSON_TAIL: f64 = 1e-14;

/// All partitions of size `≤ K` and their jump transitions.
#[derive(Debug, Clone)]
pub struct TruncatedStateSpace {
    level: usize,
    states: Vec<JumpProfile>,
    index: HashMap<Vec<u64>, usize>,
    offsets: Vec<usize>,
    successors: Vec<usize>,
}

/// Partitions of `n` with parts at most `max_part`, largest first part first.
fn partitions_into(n: u64, max_part: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
    if n == 0 {
        out.push(prefix.clone());
        return;
    }
    for part in (1..=max_part.min(n)).rev() {
        prefix.push(part);
        partitions_into(n - part, part, prefix, out);
        prefix.pop();
    }
}

impl TruncatedStateSpace {
    /// Enumerates states ordered by size, then by parts in descending
    /// lexicographic order.
    pub fn build(level: usize) -> Result<Self> {
        if !(1..=K_MAX).contains(&level) {
            return Err(invalid("K", format!("must be in 1..={K_MAX}, got {level}")));
        }
        let mut raw = Vec::new();
        for n in 0..=level as u64 {
            partitions_into(n, n, &mut Vec::new(), &mut raw);
        }
        let states: Vec<JumpProfile> = raw
            .iter()
            .map(|p| JumpProfile::from_parts(p.clone()).expect("generated partitions are valid"))
            .collect();
        let index: HashMap<Vec<u64>, usize> =
            raw.into_iter().enumerate().map(|(i, p)| (p, i)).collect();

        let mut offsets = Vec::with_capacity(states.len() + 1);
        let mut successors = Vec::new();
        offsets.push(0);
        for s in &states {
            if (s.total_jumps() as usize) < level {
                for r in s.active_indices() {
                    let mut next = s.clone();
                    next.jump_unchecked(r);
                    successors.push(index[next.parts()]);
                }
            }
            offsets.push(successors.len());
        }
        Ok(Self {
            level,
            states,
            index,
            offsets,
            successors,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[JumpProfile] {
        &self.states
    }

    pub fn index_of(&self, parts: &[u64]) -> Option<usize> {
        self.index.get(parts).copied()
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.successors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        self.states[i].total_jumps() as usize == self.level
    }

    /// Uniformization rate: the largest total exit rate.
    pub fn uniform_rate(&self) -> f64 {
        (0..self.len())
            .map(|i| self.out_degree(i))
            .max()
            .unwrap_or(0)
            .max(1) as f64
    }

    /// One step of the uniformized jump chain, `v ↦ v·(I + Q/Λ)`.
    fn step(&self, v: &[f64], out: &mut [f64], rate: f64) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, &mass) in v.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let succ = self.successors(i);
            let move_p = mass / rate;
            out[i] += mass - move_p * succ.len() as f64;
            for &j in succ {
                out[j] += move_p;
            }
        }
    }

    /// Transient laws at each of `times`.
    pub fn transient_distributions(&self, times: &[f64]) -> Result<Vec<Transient>> {
        for &t in times {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(invalid(
                    "t",
                    format!("must be finite and nonnegative, got {t}"),
                ));
            }
        }
        let rate = self.uniform_rate();
        let means: Vec<f64> = times.iter().map(|t| rate * t).collect();
        let stops: Vec<usize> = means.iter().map(|&mu| poisson_cutoff(mu)).collect();
        let n_max = stops.iter().copied().max().unwrap_or(0);

        let mut out: Vec<Vec<f64>> = vec![vec![0.0; self.len()]; times.len()];
        let mut v = vec![0.0; self.len()];
        let mut next = vec![0.0; self.len()];
        v[0] = 1.0;
        for n in 0..=n_max {
            for (i, &mu) in means.iter().enumerate() {
                if n > stops[i] {
                    continue;
                }
                let w = poisson_weight(n, mu);
                if w == 0.0 {
                    continue;
                }
                for (acc, &p) in out[i].iter_mut().zip(&v) {
                    *acc += w * p;
                }
            }
            if n < n_max {
                self.step(&v, &mut next, rate);
                std::mem::swap(&mut v, &mut next);
            }
        }
        Ok(times
            .iter()
            .zip(out)
            .zip(means.iter().zip(&stops))
            .map(|((&t, probs), (&mu, &stop))| Transient {
                t,
                probs,
                poisson_tail: poisson_tail_above(stop, mu),
            })
            .collect())
    }

    pub fn transient_distribution(&self, t: f64) -> Result<Transient> {
        Ok(self.transient_distributions(&[t])?.remove(0))
    }

    /// `E g(λ_t)` for a built-in observable.
    pub fn expectation(&self, t: f64, observable: &OracleObservable) -> Result<OracleResult> {
        Ok(self.expectations(&[t], observable)?.remove(0))
    }

    pub fn expectations(
        &self,
        times: &[f64],
        observable: &OracleObservable,
    ) -> Result<Vec<OracleResult>> {
        let name = observable.name();
        let cap = observable.growth_cap();
        self.expectations_with(times, |p| observable.evaluate(p), Some(cap))
            .map(|v| {
                v.into_iter()
                    .map(|mut r| {
                        r.observable = name.clone();
                        r
                    })
                    .collect()
            })
    }

    /// `E g(λ_t)` for an arbitrary `g`; the bound needs a growth cap.
    pub fn expectations_with<G>(
        &self,
        times: &[f64],
        g: G,
        cap: Option<GrowthCap>,
    ) -> Result<Vec<OracleResult>>
    where
        G: Fn(&JumpProfile) -> f64,
    {
        let cap = cap.ok_or_else(|| {
            invalid(
                "growth_cap",
                "an observable without a growth cap has no truncation bound",
            )
        })?;
        let values: Vec<f64> = self.states.iter().map(&g).collect();
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dists = self.transient_distributions(times)?;
        Ok(dists
            .iter()
            .map(|d| OracleResult {
                observable: "custom".into(),
                t: d.t,
                level: self.level,
                value: d.probs.iter().zip(&values).map(|(p, v)| p * v).sum(),
                error_bound: cap.truncation_bound(self.level, d.t) + d.poisson_tail * sup,
            })
            .collect())
    }
}

/// Transient law of the truncated chain.
#[derive(Debug, Clone)]
pub struct Transient {
    pub t: f64,
    pub probs: Vec<f64>,
    /// Poisson mass dropped from the series; the vector sums to `1 - tail`.
    pub poisson_tail: f64,
}

fn poisson_weight(n: usize, mu: f64) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let n = n as f64;
    (-mu + n * mu.ln() - ln_gamma(n + 1.0)).exp()
}

/// `P(Poisson(mu) > n)`.
fn poisson_tail_above(n: usize, mu: f64) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    // P(N > n) = P(n + 1, mu), the lower regularised gamma function.
    gamma_lr(n as f64 + 1.0, mu)
}

fn poisson_cutoff(mu: f64) -> usize {
    let mut n = mu.ceil() as usize;
    while poisson_tail_above(n, mu) > POISSON_TAIL {
        n += 1 + n / 16;
    }
    n
}

/// How fast an observable can change with each jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GrowthCap {
    /// `|g(λ') - g(λ)| ≤ L` for every single jump `λ → λ'`.
    PerJump(f64),
    /// `|g| ≤ B` everywhere.
    Bounded(f64),
}

impl GrowthCap {
    /// Bound on `|E g(λ_t) - E g(λ_t^K)|`.
    pub fn truncation_bound(&self, level: usize, t: f64) -> f64 {
        let q = -(-t).exp_m1();
        let reach_beyond = q.powi(level as i32 + 1);
        match *self {
            GrowthCap::PerJump(l) => l * reach_beyond * t.exp(),
            GrowthCap::Bounded(b) => 2.0 * b * reach_beyond,
        }
    }
}

/// `(1 - e^{-t})^K`, the Yule bound on `P(P_t ≥ K)`.
pub fn yule_tail(level: usize, t: f64) -> f64 {
    (-(-t).exp_m1()).powi(level as i32)
}

/// Observables with a known per-jump growth cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleObservable {
    /// `P_t`.
    TotalJumps,
    /// `a_t`.
    Active,
    /// `S(k, t)`.
    ParticlesRight(i64),
    /// `N_t^{(r)}`.
    JumpCount(usize),
}

impl OracleObservable {
    pub fn evaluate(&self, p: &JumpProfile) -> f64 {
        match *self {
            OracleObservable::TotalJumps => p.total_jumps() as f64,
            OracleObservable::Active => p.active_count() as f64,
            OracleObservable::ParticlesRight(k) => particle_count_right(p, k) as f64,
            OracleObservable::JumpCount(r) => p.part(r.max(1)) as f64,
        }
    }

    /// Each jump changes `P`, `S(k)` and `N^{(r)}` by at most one, and the
    /// active count by at most one (particle `r` may block, `r + 1` unblocks).
    pub fn growth_cap(&self) -> GrowthCap {
        GrowthCap::PerJump(1.0)
    }

    pub fn name(&self) -> String {
        match *self {
            OracleObservable::TotalJumps => "P".into(),
            OracleObservable::Active => "a".into(),
            OracleObservable::ParticlesRight(k) => format!("S:{k}"),
            OracleObservable::JumpCount(r) => format!("N:{r}"),
        }
    }

    /// Parses `P`, `a`, `S:k` or `N:r`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || {
            invalid(
                "observable",
                format!("expected P, a, S:k or N:r, got {s:?}"),
            )
        };
        match s {
            "P" => Ok(Self::TotalJumps),
            "a" => Ok(Self::Active),
            _ => {
                let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
                match kind {
                    "S" => Ok(Self::ParticlesRight(arg.trim().parse().map_err(|_| bad())?)),
                    "N" => {
                        let r: usize = arg.trim().parse().map_err(|_| bad())?;
                        if r == 0 {
                            return Err(invalid("observable", "particle index must be at least 1"));
                        }
                        Ok(Self::JumpCount(r))
                    }
                    _ => Err(bad()),
                }
            }
        }
    }
}

/// Exact expectation under truncation, with a rigorous error bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub observable: String,
    pub t: f64,
    #[serde(rename = "K")]
    pub level: usize,
    pub value: f64,
    pub error_bound: f64,
}

/// Central-difference check of `d/dt E P_t = E a_t` on the truncated chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub t: f64,
    pub h: f64,
    #[serde(rename = "K")]
    pub level: usize,
    /// `(E P_{t+h} - E P_{t-h}) / 2h`.
    pub central_difference: f64,
    /// Same with step `h/2`.
    pub central_difference_half: f64,
    /// `E a_t`.
    pub active: f64,
    pub abs_diff: f64,
    /// Richardson estimate of the `h²` coefficient.
    pub richardson_c: f64,
    pub certified_bound: f64,
    pub pass: bool,
}

/// Compares the central difference of `E P` with `E a` at `t`.
pub fn derivative_identity_check(
    space: &TruncatedStateSpace,
    t: f64,
    h: f64,
) -> Result<DerivativeCheck> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    if !(h > 0.0) || h >= t {
        return Err(invalid("h", format!("must satisfy 0 < h < t, got {h}")));
    }
    let times = [t - h, t - h / 2.0, t, t + h / 2.0, t + h];
    let dists = space.transient_distributions(&times)?;
    let jumps: Vec<f64> = space
        .states
        .iter()
        .map(|s| s.total_jumps() as f64)
        .collect();
    let mean =
        |d: &Transient, g: &[f64]| -> f64 { d.probs.iter().zip(g).map(|(p, v)| p * v).sum() };
    let g: Vec<f64> = dists.iter().map(|d| mean(d, &jumps)).collect();

    let active: Vec<f64> = space
        .states
        .iter()
        .map(|s| s.active_count() as f64)
        .collect();
    let at_level: Vec<f64> = (0..space.len())
        .map(|i| space.is_absorbing(i) as u8 as f64)
        .collect();
    let a_mean = mean(&dists[2], &active);
    let absorbed = mean(&dists[2], &at_level);
    let a_max = active.iter().fold(0.0f64, |m, &v| m.max(v));

    let d_full = (g[4] - g[0]) / (2.0 * h);
    let d_half = (g[3] - g[1]) / h;
    let c = (d_full - d_half).abs() / (0.75 * h * h);
    let abs_diff = (d_full - a_mean).abs();
    // On the truncated chain d/dt E P = E[a; |λ| < K] exactly; the absorbed
    // mass and the dropped Poisson tail are the only other error sources.
    let tail = dists.iter().map(|d| d.poisson_tail).fold(0.0, f64::max);
    let certified_bound = c * h * h + a_max * absorbed + tail * space.level as f64 / h + 1e-11;
    Ok(DerivativeCheck {
        t,
        h,
        level: space.level,
        central_difference: d_full,
        central_difference_half: d_half,
        active: a_mean,
        abs_diff,
        richardson_c: c,
        certified_bound,
        pass: abs_diff <= certified_bound,
    })
}

/// `E P_t` against `∫_0^t E[a_s; |λ_s| < K] ds` by composite Simpson.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedCheck {
    pub t: f64,
    #[serde(rename = "K")]
    pub level: usize,
    pub expected_jumps: f64,
    pub integrated_activity: f64,
    pub abs_diff: f64,
}

pub fn integrated_identity_check(
    space: &TruncatedStateSpace,
    t: f64,
    intervals: usize,
) -> Result<IntegratedCheck> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    let n = intervals.max(2) + intervals % 2;
    let dx = t / n as f64;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * dx).collect();
    let dists = space.transient_distributions(&times)?;
    let rate: Vec<f64> = (0..space.len())
        .map(|i| {
            if space.is_absorbing(i) {
                0.0
            } else {
                space.states[i].active_count() as f64
            }
        })
        .collect();
    let vals: Vec<f64> = dists
        .iter()
        .map(|d| d.probs.iter().zip(&rate).map(|(p, v)| p * v).sum())
        .collect();
    let mut integral = vals[0] + vals[n];
    for (i, v) in vals.iter().enumerate().take(n).skip(1) {
        integral += if i % 2 == 1 { 4.0 } else { 2.0 } * v;
    }
    integral *= dx / 3.0;
    let jumps: f64 = dists[n]
        .probs
        .iter()
        .zip(&space.states)
        .map(|(p, s)| p * s.total_jumps() as f64)
        .sum();
    Ok(IntegratedCheck {
        t,
        level: space.level,
        expected_jumps: jumps,
        integrated_activity: integral,
        abs_diff: (jumps - integral).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_spaces() {
        let s1 = TruncatedStateSpace::build(1).unwrap();
        assert_eq!(s1.len(), 2);
        assert_eq!(s1.states()[1].parts(), &[1]);
        assert_eq!(s1.successors(0), &[1]);
        assert!(s1.successors(1).is_empty());

        let s2 = TruncatedStateSpace::build(2).unwrap();
        let parts: Vec<&[u64]> = s2.states().iter().map(|s| s.parts()).collect();
        assert_eq!(parts, vec![&[][..], &[1], &[2], &[1, 1]]);
        assert_eq!(s2.out_degree(1), 2);
    }

    #[test]
    fn state_counts_follow_partition_numbers() {
        // p(0..=6) = 1, 1, 2, 3, 5, 7, 11
        assert_eq!(TruncatedStateSpace::build(6).unwrap().len(), 30);
        assert!(TruncatedStateSpace::build(0).is_err());
        assert!(TruncatedStateSpace::build(K_MAX + 1).is_err());
    }

    #[test]
    fn out_degree_is_active_count() {
        let s = TruncatedStateSpace::build(8).unwrap();
        for i in 0..s.len() {
            if !s.is_absorbing(i) {
                assert_eq!(s.out_degree(i), s.states()[i].active_count());
            } else {
                assert_eq!(s.out_degree(i), 0);
            }
        }
    }

    #[test]
    fn transient_at_zero_is_point_mass() {
        let s = TruncatedStateSpace::build(5).unwrap();
        let d = s.transient_distribution(0.0).unwrap();
        assert_eq!(d.probs[0], 1.0);
        assert_eq!(d.probs.iter().sum::<f64>(), 1.0);
        assert!(s.transient_distribution(-0.1).is_err());
    }

    #[test]
    fn single_clock_survival() {
        let s = TruncatedStateSpace::build(1).unwrap();
        let mut prev = 1.0;
        for t in [0.1, 0.3, 0.7, 1.5] {
            let d = s.transient_distribution(t).unwrap();
            assert!((d.probs[0] - (-t).exp()).abs() < 1e-13);
            assert!(d.probs[0] < prev);
            prev = d.probs[0];
        }
    }

    #[test]
    fn distributions_are_probability_vectors() {
        let s = TruncatedStateSpace::build(12).unwrap();
        for d in s.transient_distributions(&[0.2, 1.0, 2.5]).unwrap() {
            assert!(d.probs.iter().all(|&p| p >= 0.0));
            assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn k1_expected_jumps() {
        let s = TruncatedStateSpace::build(1).unwrap();
        let r = s.expectation(0.7, &OracleObservable::TotalJumps).unwrap();
        assert!((r.value - (1.0 - (-0.7f64).exp())).abs() < 1e-13);
        assert!((r.value - 0.50341).abs() < 1e-5);
    }

    #[test]
    fn zero_time_values() {
        let s = TruncatedStateSpace::build(10).unwrap();
        let p = s.expectation(0.0, &OracleObservable::TotalJumps).unwrap();
        assert_eq!((p.value, p.error_bound), (0.0, 0.0));
        let a = s.expectation(1e-9, &OracleObservable::Active).unwrap();
        assert!((a.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn error_bound_shrinks_with_level() {
        let b = |k| GrowthCap::PerJump(1.0).truncation_bound(k, 1.0);
        assert!(b(25) < b(20));
        assert!(b(25) < 4e-4);
        assert!(yule_tail(25, 1.0) < 1.1e-5);
    }

    #[test]
    fn two_levels_agree() {
        let a = TruncatedStateSpace::build(25).unwrap();
        let b = TruncatedStateSpace::build(30).unwrap();
        for obs in [OracleObservable::TotalJumps, OracleObservable::Active] {
            let ra = a.expectation(1.0, &obs).unwrap();
            let rb = b.expectation(1.0, &obs).unwrap();
            assert!((ra.value - rb.value).abs() <= ra.error_bound + rb.error_bound);
        }
    }

    #[test]
    fn custom_needs_cap() {
        let s = TruncatedStateSpace::build(4).unwrap();
        assert!(s
            .expectations_with(&[1.0], |p| p.total_jumps() as f64, None)
            .is_err());
        let r = s
            .expectations_with(
                &[1.0],
                |p| (p.total_jumps() > 0) as u8 as f64,
                Some(GrowthCap::Bounded(1.0)),
            )
            .unwrap();
        assert!((r[0].value - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn derivative_check_small_t() {
        let s = TruncatedStateSpace::build(25).unwrap();
        let c = derivative_identity_check(&s, 0.5, 1e-3).unwrap();
        assert!(c.abs_diff < 1e-5, "{c:?}");
        assert!(c.pass, "{c:?}");
        let early = derivative_identity_check(&s, 1e-3, 1e-5).unwrap();
        assert!((early.active - 1.0).abs() < 1e-2);
        let p = s.expectation(1e-4, &OracleObservable::TotalJumps).unwrap();
        assert!((p.value / 1e-4 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn integrated_form() {
        let s = TruncatedStateSpace::build(25).unwrap();
        let c = integrated_identity_check(&s, 1.0, 64).unwrap();
        assert!(c.abs_diff < 1e-8, "{c:?}");
    }

    #[test]
    fn observable_parsing() {
        assert_eq!(
            OracleObservable::parse("P").unwrap(),
            OracleObservable::TotalJumps
        );
        assert_eq!(
            OracleObservable::parse("S:-3").unwrap(),
            OracleObservable::ParticlesRight(-3)
        );
        assert_eq!(
            OracleObservable::parse("N:2").unwrap(),
            OracleObservable::JumpCount(2)
        );
        assert!(OracleObservable::parse("N:0").is_err());
        assert!(OracleObservable::parse("Q").is_err());
    }

    #[test]
    fn result_json_keys() {
        let s = TruncatedStateSpace::build(3).unwrap();
        let r = s.expectation(0.5, &OracleObservable::Active).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["observable", "t", "K", "value", "error_bound"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
