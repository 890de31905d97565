//! Running means and standard errors for Monte Carlo estimates.

use serde::{Deserialize, Serialize};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut acc = Accumulator::default();
        samples.iter().for_each(|&s| acc.push(s));
        acc.estimate()
    }

    /// `|a − b|` and the standard error of the difference of independent estimates.
    pub fn diff(&self, other: &Estimate) -> (f64, f64) {
        (
            (self.mean - other.mean).abs(),
            self.std_error.hypot(other.std_error),
        )
    }
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    n: usize,
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

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        Estimate {
            mean: self.mean,
            std_error: se,
            count: self.n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..101).map(|i| ((i * 37) % 17) as f64 * 0.3).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let e = Estimate::from_samples(&xs);
        assert!((e.mean - mean).abs() < 1e-12);
        assert!((e.std_error - (var / xs.len() as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn merge_is_concatenation() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64).cos()).collect();
        let mut a = Accumulator::default();
        let mut b = Accumulator::default();
        xs[..20].iter().for_each(|&x| a.push(x));
        xs[20..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        let e = Estimate::from_samples(&xs);
        assert!((a.estimate().mean - e.mean).abs() < 1e-12);
        assert!((a.estimate().std_error - e.std_error).abs() < 1e-12);
    }
}
