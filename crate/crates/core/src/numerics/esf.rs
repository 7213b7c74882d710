//! Elementary symmetric functions.
//!
//! Both entry points use the Vieta recurrence: the coefficients of
//! `∏ (1 + v_i x)` are accumulated one factor at a time, O(n²) overall.
//! Inputs are divided by their maximum first so that the intermediate
//! coefficients are bounded by binomial coefficients.

use crate::error::{Error, Result};

fn check(values: &[f64]) -> Result<f64> {
    let mut max = 0.0f64;
    for &v in values {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Domain(format!(
                "elementary symmetric function input must be finite and nonnegative, got {v}"
            )));
        }
        max = max.max(v);
    }
    Ok(max)
}

/// Vieta recurrence on `values / scale`, renormalizing the coefficient vector
/// whenever it grows large. Returns the coefficients and the log of the factor
/// that was divided out of all of them.
fn scaled_coefficients(values: &[f64], scale: f64) -> (Vec<f64>, f64) {
    let n = values.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    let mut ln_renorm = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let v = v / scale;
        for j in (1..=i + 1).rev() {
            e[j] += v * e[j - 1];
        }
        let peak = e[..=i + 1].iter().copied().fold(0.0, f64::max);
        if peak > 1e200 {
            for c in e.iter_mut() {
                *c /= peak;
            }
            ln_renorm += peak.ln();
        }
    }
    (e, ln_renorm)
}

/// `e_0 .. e_n` of `values` in linear scale. `e_0 = 1`.
///
/// Large inputs overflow to infinity; use [`log_esf`] for those.
pub fn esf(values: &[f64]) -> Result<Vec<f64>> {
    let max = check(values)?;
    if max == 0.0 {
        let mut e = vec![0.0; values.len() + 1];
        e[0] = 1.0;
        return Ok(e);
    }
    let (mut e, ln_renorm) = scaled_coefficients(values, max);
    let ln_max = max.ln();
    for (j, c) in e.iter_mut().enumerate() {
        *c = if *c == 0.0 {
            0.0
        } else {
            (c.ln() + ln_renorm + j as f64 * ln_max).exp()
        };
    }
    e[0] = 1.0;
    Ok(e)
}

/// `ln e_0 .. ln e_n` of `values`; negative infinity marks a zero coefficient.
pub fn log_esf(values: &[f64]) -> Result<Vec<f64>> {
    let max = check(values)?;
    let mut out = vec![f64::NEG_INFINITY; values.len() + 1];
    out[0] = 0.0;
    if max == 0.0 {
        return Ok(out);
    }
    let (e, ln_renorm) = scaled_coefficients(values, max);
    let ln_max = max.ln();
    for j in 1..e.len() {
        if e[j] > 0.0 {
            out[j] = e[j].ln() + ln_renorm + j as f64 * ln_max;
        }
    }
    Ok(out)
}
