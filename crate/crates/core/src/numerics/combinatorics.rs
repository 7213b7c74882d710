//! Log-domain weights and combinatorial coefficients.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// A nonnegative weight stored as its natural logarithm.
///
/// Negative infinity encodes an exact zero. NaN is never admitted.
#[derive(Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogWeight(f64);

impl LogWeight {
    pub const ZERO: LogWeight = LogWeight(f64::NEG_INFINITY);
    pub const ONE: LogWeight = LogWeight(0.0);

    pub fn new(ln_value: f64) -> Result<Self> {
        if ln_value.is_nan() || ln_value == f64::INFINITY {
            return Err(Error::Domain(format!("invalid log weight {ln_value}")));
        }
        Ok(LogWeight(ln_value))
    }

    pub fn from_linear(value: f64) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::Domain(format!("invalid linear weight {value}")));
        }
        Ok(LogWeight(value.ln()))
    }

    #[inline]
    pub fn ln(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn exp(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl fmt::Debug for LogWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LogWeight(ln={})", self.0)
    }
}

impl std::ops::Mul for LogWeight {
    type Output = LogWeight;
    // Multiplication of weights is addition of their logarithms.
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: LogWeight) -> LogWeight {
        LogWeight(self.0 + rhs.0)
    }
}

/// `k * ln_x` with the convention `0 * ln 0 = 0`, i.e. `x^0 = 1` for every `x >= 0`.
#[inline]
pub fn xlogy(k: usize, ln_x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_x
    }
}

/// `ln Σ exp(v)`; negative infinity for an empty or all-zero input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln C(l, j)`; the zero weight when `j > l`.
pub fn log_binomial(l: u64, j: u64) -> LogWeight {
    if j > l {
        return LogWeight::ZERO;
    }
    if j == 0 || j == l {
        return LogWeight::ONE;
    }
    let (l, j) = (l as f64, j as f64);
    LogWeight(ln_gamma(l + 1.0) - ln_gamma(j + 1.0) - ln_gamma(l - j + 1.0))
}

/// `ln P(n, j) = ln n!/(n-j)!`; the zero weight when `j > n`.
pub fn log_permutation(n: u64, j: u64) -> LogWeight {
    if j > n {
        return LogWeight::ZERO;
    }
    if j == 0 {
        return LogWeight::ONE;
    }
    let (n, j) = (n as f64, j as f64);
    LogWeight(ln_gamma(n + 1.0) - ln_gamma(n - j + 1.0))
}

/// Table of `ln k!` for the inner loops of the cardinality recursions.
#[derive(Debug, Clone)]
pub struct LnFactorials {
    table: Vec<f64>,
}

impl LnFactorials {
    pub fn new(max: usize) -> Self {
        let table = (0..=max).map(|k| ln_gamma(k as f64 + 1.0)).collect();
        LnFactorials { table }
    }

    pub fn max(&self) -> usize {
        self.table.len() - 1
    }

    #[inline]
    pub fn ln_factorial(&self, k: usize) -> f64 {
        self.table[k]
    }

    #[inline]
    pub fn ln_binomial(&self, l: usize, j: usize) -> f64 {
        if j > l {
            f64::NEG_INFINITY
        } else {
            self.table[l] - self.table[j] - self.table[l - j]
        }
    }

    #[inline]
    pub fn ln_permutation(&self, n: usize, j: usize) -> f64 {
        if j > n {
            f64::NEG_INFINITY
        } else {
            self.table[n] - self.table[n - j]
        }
    }
}
