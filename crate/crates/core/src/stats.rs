//! Summation and Monte Carlo summary statistics.

use serde::{Deserialize, Serialize};

/// Pairwise (cascade) summation: error grows like O(log n) instead of O(n).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Self { mean, se: (var / n as f64).sqrt(), n }
    }

    /// Mean and standard error of `f(x)` over the sample.
    pub fn of_map(xs: &[f64], f: impl Fn(f64) -> f64) -> Self {
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        Self::of(&ys)
    }

    /// |self − other| in units of the combined standard error.
    pub fn z_against(&self, value: f64) -> f64 {
        (self.mean - value).abs() / self.se
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let xs: Vec<f64> = (1..=10_000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 50_005_000.0);
    }

    #[test]
    fn mean_se_of_constant() {
        let m = MeanSe::of(&[2.0; 10]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.se, 0.0);
    }
}
