//! Monte Carlo result records and streaming moment accumulators.

use serde::{Deserialize, Serialize};

/// A single Monte Carlo estimate: value, standard error, sample count and
/// the master seed that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl Estimate {
    pub fn exact(value: f64, n_samples: u64, seed: u64) -> Self {
        Estimate { value, stderr: 0.0, n_samples, seed }
    }

    /// Two-sample z-score against another independent estimate.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        z_score(self.value, self.stderr, other.value, other.stderr)
    }
}

/// Standardized difference of two independent estimates. Returns 0 when both
/// standard errors vanish and the values agree exactly.
pub fn z_score(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let pooled = (se_a * se_a + se_b * se_b).sqrt();
    if pooled == 0.0 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b) / pooled
    }
}

/// Welford single-pass mean/variance accumulator.
///
/// Merging is Chan's pairwise update. Estimators always merge chunk
/// accumulators in a fixed chunk order, so pooled results do not depend on
/// the number of worker threads.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Welford::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = other.mean - self.mean;
        self.mean += delta * n_b / n;
        self.m2 += other.m2 + delta * delta * n_a * n_b / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n - 1 denominator).
    pub fn variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    /// Standard error of the mean: sample standard deviation / sqrt(n).
    pub fn stderr(&self) -> f64 {
        if self.count > 1 {
            (self.variance() / self.count as f64).sqrt()
        } else {
            0.0
        }
    }

    pub fn estimate(&self, seed: u64) -> Estimate {
        Estimate { value: self.mean(), stderr: self.stderr(), n_samples: self.count, seed }
    }
}

/// Success counter for Bernoulli proportions.
#[derive(Debug, Clone, Copy, Default)]
pub struct Counter {
    pub hits: u64,
    pub total: u64,
}

impl Counter {
    pub fn push(&mut self, hit: bool) {
        self.total += 1;
        if hit {
            self.hits += 1;
        }
    }

    pub fn merge(&mut self, other: &Counter) {
        self.hits += other.hits;
        self.total += other.total;
    }

    pub fn proportion(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.hits as f64 / self.total as f64
        }
    }

    /// Proportion estimate with the Wilson-score standard error, nonzero
    /// even at 0 or n hits.
    pub fn estimate(&self, seed: u64) -> Estimate {
        Estimate {
            value: self.proportion(),
            stderr: wilson_stderr(self.hits, self.total),
            n_samples: self.total,
            seed,
        }
    }
}

/// Wilson-score standard error (z = 1) for `hits` successes out of `n`.
pub fn wilson_stderr(hits: u64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    let nf = n as f64;
    let p = hits as f64 / nf;
    (p * (1.0 - p) / nf + 1.0 / (4.0 * nf * nf)).sqrt() / (1.0 + 1.0 / nf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.5, -3.0];
        let mut w = Welford::new();
        for &x in &xs {
            w.push(x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((w.mean() - mean).abs() < 1e-12);
        assert!((w.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn welford_merge_equals_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin() * 3.0 + 1.0).collect();
        let mut whole = Welford::new();
        for &x in &xs {
            whole.push(x);
        }
        let mut left = Welford::new();
        let mut right = Welford::new();
        for &x in &xs[..37] {
            left.push(x);
        }
        for &x in &xs[37..] {
            right.push(x);
        }
        left.merge(&right);
        assert!((left.mean() - whole.mean()).abs() < 1e-12);
        assert!((left.variance() - whole.variance()).abs() < 1e-12);
        assert_eq!(left.count(), whole.count());
    }

    #[test]
    fn wilson_stderr_nonzero_at_boundaries() {
        assert!(wilson_stderr(0, 1000) > 0.0);
        assert!(wilson_stderr(1000, 1000) > 0.0);
        // Interior agrees with the plain binomial stderr to first order.
        let se = wilson_stderr(500, 1000);
        let plain = (0.25f64 / 1000.0).sqrt();
        assert!((se - plain).abs() < 1e-4);
    }

    #[test]
    fn z_score_degenerate() {
        assert_eq!(z_score(1.0, 0.0, 1.0, 0.0), 0.0);
        assert!(z_score(1.0, 0.0, 2.0, 0.0).is_infinite());
    }
}
