//! Test-only brute-force transient law of the truncated partition chain.

use std::collections::HashMap;

/// Weakly decreasing positive tuples of total at most `k`, by exhaustive search.
pub fn brute_states(k: u64) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    while let Some(v) = frontier.pop() {
        let used: u64 = v.iter().sum();
        let cap = v.last().copied().unwrap_or(k);
        for x in 1..=cap.min(k - used) {
            let mut w = v.clone();
            w.push(x);
            out.push(w.clone());
            frontier.push(w);
        }
    }
    out
}

/// Particle r (1-based) may jump iff r = 1 or its count is below that of r-1.
fn moves(v: &[u64]) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    for r in 0..=v.len() {
        let mine = v.get(r).copied().unwrap_or(0);
        if r == 0 || mine < v[r - 1] {
            let mut w = v.to_vec();
            if r == v.len() {
                w.push(1);
            } else {
                w[r] += 1;
            }
            out.push(w);
        }
    }
    out
}

/// Row vector `e_0 exp(Qt)` by a plain Taylor series.
pub fn taylor_transient(k: u64, t: f64) -> HashMap<Vec<u64>, f64> {
    let states = brute_states(k);
    let index: HashMap<Vec<u64>, usize> = states
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    let n = states.len();
    let apply_q = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, s) in states.iter().enumerate() {
            if s.iter().sum::<u64>() == k {
                continue;
            }
            for w in moves(s) {
                out[index[&w]] += v[i];
                out[i] -= v[i];
            }
        }
        out
    };
    let mut term = vec![0.0; n];
    term[index[&Vec::new()]] = 1.0;
    let mut sum = term.clone();
    for m in 1..200 {
        term = apply_q(&term)
            .into_iter()
            .map(|x| x * t / m as f64)
            .collect();
        for (s, x) in sum.iter_mut().zip(&term) {
            *s += x;
        }
        if term.iter().all(|x| x.abs() < 1e-300) {
            break;
        }
    }
    states.into_iter().zip(sum).collect()
}
