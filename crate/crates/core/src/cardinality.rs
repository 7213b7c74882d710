//! Discrete distributions over a target count, truncated at `n_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, xlogy, LnFactorials};

/// Probability mass over `0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CardinalityDistribution {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for CardinalityDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        CardinalityDistribution::new(v)
    }
}

impl From<CardinalityDistribution> for Vec<f64> {
    fn from(c: CardinalityDistribution) -> Self {
        c.probs
    }
}

impl CardinalityDistribution {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty cardinality distribution".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain("cardinality entries must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::Domain(format!("cardinality sums to {sum}, not 1")));
        }
        Ok(CardinalityDistribution { probs })
    }

    /// Normalizes nonnegative weights. Fails when they carry no mass.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::Domain(format!("cannot normalize weights with total {sum}")));
        }
        for w in weights.iter_mut() {
            *w /= sum;
        }
        Ok(CardinalityDistribution { probs: weights })
    }

    /// Normalizes `exp(ln_weights)` with a shared max shift. `None` if all are zero.
    pub fn from_log_weights(ln_weights: &[f64]) -> Option<Self> {
        let norm = log_sum_exp(ln_weights);
        if !norm.is_finite() {
            return None;
        }
        let probs: Vec<f64> = ln_weights.iter().map(|l| (l - norm).exp()).collect();
        // exp() rounding can leave the sum a few ulps away from one.
        let sum: f64 = probs.iter().sum();
        Some(CardinalityDistribution {
            probs: probs.into_iter().map(|p| p / sum).collect(),
        })
    }

    pub fn delta(n: usize, n_max: usize) -> Self {
        let mut probs = vec![0.0; n_max.max(n) + 1];
        probs[n] = 1.0;
        CardinalityDistribution { probs }
    }

    /// Poisson(mean) truncated to `0..=n_max` and renormalized.
    pub fn poisson(mean: f64, n_max: usize) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::Domain(format!("invalid poisson mean {mean}")));
        }
        if mean == 0.0 {
            return Ok(Self::delta(0, n_max));
        }
        let table = LnFactorials::new(n_max);
        let ln_mean = mean.ln();
        let ln_w: Vec<f64> = (0..=n_max)
            .map(|n| -mean + xlogy(n, ln_mean) - table.ln_factorial(n))
            .collect();
        Self::from_log_weights(&ln_w).ok_or_else(|| Error::Domain("poisson underflow".into()))
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// `argmax ρ(n)`, ties resolved towards the smaller count.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (n, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = n;
            }
        }
        best
    }

    /// Binomial thinning: each of the `l` members survives independently with
    /// probability `p`. Support is unchanged.
    pub fn thin(&self, p: f64, table: &LnFactorials) -> Self {
        let n_max = self.n_max();
        if p >= 1.0 {
            return self.clone();
        }
        if p <= 0.0 {
            return Self::delta(0, n_max);
        }
        let (ln_p, ln_q) = (p.ln(), (1.0 - p).ln());
        let mut out = vec![0.0; n_max + 1];
        for (l, &rho) in self.probs.iter().enumerate() {
            if rho == 0.0 {
                continue;
            }
            let ln_rho = rho.ln();
            for (j, o) in out.iter_mut().enumerate().take(l + 1) {
                *o += (ln_rho + table.ln_binomial(l, j) + xlogy(j, ln_p) + xlogy(l - j, ln_q)).exp();
            }
        }
        let sum: f64 = out.iter().sum();
        CardinalityDistribution {
            probs: out.into_iter().map(|v| v / sum).collect(),
        }
    }

    /// Distribution of the sum of two independent counts, truncated to
    /// `0..=n_max`. Returns the renormalized result and the mass that fell
    /// beyond `n_max`.
    pub fn convolve(&self, other: &Self, n_max: usize) -> (Self, f64) {
        let mut out = vec![0.0; n_max + 1];
        let mut kept = 0.0;
        for (a, &pa) in self.probs.iter().enumerate() {
            if pa == 0.0 || a > n_max {
                continue;
            }
            for (b, &pb) in other.probs.iter().enumerate().take(n_max - a + 1) {
                out[a + b] += pa * pb;
                kept += pa * pb;
            }
        }
        let total = self.sum() * other.sum();
        let lost = (total - kept).max(0.0);
        let probs = out.into_iter().map(|v| v / kept).collect();
        (CardinalityDistribution { probs }, lost)
    }

    /// Same distribution over a different support length; mass beyond the new
    /// `n_max` is dropped and the remainder renormalized. Returns the lost mass.
    pub fn resized(&self, n_max: usize) -> (Self, f64) {
        let mut probs = self.probs.clone();
        probs.resize(n_max + 1, 0.0);
        let kept: f64 = probs.iter().sum();
        let lost = (self.sum() - kept).max(0.0);
        if kept > 0.0 {
            for p in probs.iter_mut() {
                *p /= kept;
            }
        }
        (CardinalityDistribution { probs }, lost)
    }
}
