//! Beta densities for the detection-probability variable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest shape parameter admitted after dilation or moment matching.
pub const MIN_SHAPE: f64 = 0.1;

/// Beta density over an unknown detection probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBeta")]
pub struct BetaDensity {
    s: f64,
    t: f64,
}

#[derive(Deserialize)]
struct RawBeta {
    s: f64,
    t: f64,
}

impl TryFrom<RawBeta> for BetaDensity {
    type Error = Error;
    fn try_from(raw: RawBeta) -> Result<Self> {
        BetaDensity::new(raw.s, raw.t)
    }
}

impl BetaDensity {
    pub fn new(s: f64, t: f64) -> Result<Self> {
        if !(s > 0.0 && t > 0.0 && s.is_finite() && t.is_finite()) {
            return Err(Error::Domain(format!("invalid beta parameters ({s}, {t})")));
        }
        Ok(BetaDensity { s, t })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn mean(&self) -> f64 {
        self.s / (self.s + self.t)
    }

    /// `st / ((s+t)² (s+t+1))`
    pub fn variance(&self) -> f64 {
        let n = self.s + self.t;
        self.s * self.t / (n * n * (n + 1.0))
    }

    /// Posterior after one detection (`s + 1`).
    pub fn detected(&self) -> BetaDensity {
        BetaDensity {
            s: self.s + 1.0,
            t: self.t,
        }
    }

    /// Posterior after one miss (`t + 1`).
    pub fn missed(&self) -> BetaDensity {
        BetaDensity {
            s: self.s,
            t: self.t + 1.0,
        }
    }

    /// Beta with the given mean and (at most) the given variance.
    ///
    /// The concentration `s + t` is raised where needed so that both shapes stay
    /// at or above [`MIN_SHAPE`]; the mean is kept exactly.
    pub fn from_mean_variance(mean: f64, variance: f64) -> Result<Self> {
        if !(mean > 0.0 && mean < 1.0) || !(variance > 0.0) {
            return Err(Error::Domain(format!(
                "no beta with mean {mean} and variance {variance}"
            )));
        }
        let concentration = (mean * (1.0 - mean) / variance - 1.0)
            .max(MIN_SHAPE / mean.min(1.0 - mean));
        Ok(BetaDensity {
            s: mean * concentration,
            t: (1.0 - mean) * concentration,
        })
    }
}

pub fn beta_mean(b: &BetaDensity) -> f64 {
    b.mean()
}
