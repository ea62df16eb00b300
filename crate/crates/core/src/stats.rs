//! Sample statistics used by the verification suites.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Streaming mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::default();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Mean, variance and the standard error of the sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub n: usize,
    pub mean: f64,
    pub mean_stderr: f64,
    pub variance: f64,
    pub variance_stderr: f64,
}

pub fn moments(xs: &[f64]) -> MomentSummary {
    let acc: Accumulator = xs.iter().copied().collect();
    let n = xs.len();
    let mean = acc.mean();
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n.max(1) as f64;
    let var = acc.variance();
    MomentSummary {
        n,
        mean,
        mean_stderr: acc.stderr(),
        variance: var,
        variance_stderr: ((m4 - var * var).max(0.0) / n.max(1) as f64).sqrt(),
    }
}

/// Two-sided standard-normal critical value for level `alpha` split over
/// `tests` comparisons.
pub fn bonferroni_z(alpha: f64, tests: usize) -> f64 {
    let normal = Normal::standard();
    normal.inverse_cdf(1.0 - alpha / (2.0 * tests.max(1) as f64))
}

/// Pearson goodness-of-fit of integer samples against `Poisson(mean)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Cells are merged from both tails until each expects at least 5 counts.
pub fn poisson_chi_square(samples: &[u64], mean: f64) -> ChiSquareReport {
    let n = samples.len() as f64;
    let max = samples.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0f64; max + 2];
    for &s in samples {
        counts[s as usize] += 1.0;
    }
    // pmf on 0..=max, last cell is the upper tail {max+1, …}
    let mut pmf = Vec::with_capacity(max + 2);
    let mut p = (-mean).exp();
    for k in 0..=max {
        pmf.push(p);
        p *= mean / (k + 1) as f64;
    }
    let head: f64 = pmf.iter().sum();
    pmf.push((1.0 - head).max(0.0));

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (c, q) in counts.iter().zip(&pmf) {
        obs += c;
        exp += q * n;
        if exp >= 5.0 {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += obs;
        last.1 += exp;
    } else {
        cells.push((obs, exp));
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len().saturating_sub(1).max(1);
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| 1.0 - d.cdf(statistic))
        .unwrap_or(f64::NAN);
    ChiSquareReport {
        statistic,
        dof,
        p_value,
        bins: cells.len(),
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 4.0, 9.0, 12.5];
        let acc: Accumulator = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((acc.mean() - mean).abs() < 1e-12);
        assert!((acc.variance() - var).abs() < 1e-12);
        assert!((acc.stderr() - (var / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bonferroni_values() {
        assert!((bonferroni_z(0.05, 1) - 1.959964).abs() < 1e-5);
        assert!(bonferroni_z(0.01, 11) > bonferroni_z(0.01, 1));
    }

    #[test]
    fn chi_square_accepts_poisson_rejects_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = Poisson::new(2.0).unwrap();
        let xs: Vec<u64> = (0..10_000).map(|_| d.sample(&mut rng) as u64).collect();
        assert!(poisson_chi_square(&xs, 2.0).p_value > 0.01);
        assert!(poisson_chi_square(&xs, 2.3).p_value < 1e-6);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [0.2, 0.1, 0.05];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x * x).collect();
        assert!((log_log_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }
}
