//! Gaussian densities with Kalman prediction and Joseph-form correction.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::LogWeight;

/// Multivariate normal density over the kinematic state.
///
/// The covariance is kept symmetric and positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian", into = "RawGaussian")]
pub struct GaussianDensity {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGaussian {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<RawGaussian> for GaussianDensity {
    type Error = Error;
    fn try_from(raw: RawGaussian) -> Result<Self> {
        let cov = crate::serde_matrix::from_rows(&raw.cov)?;
        GaussianDensity::new(DVector::from_vec(raw.mean), cov)
    }
}

impl From<GaussianDensity> for RawGaussian {
    fn from(g: GaussianDensity) -> Self {
        RawGaussian {
            mean: g.mean.iter().copied().collect(),
            cov: crate::serde_matrix::to_rows(&g.cov),
        }
    }
}

/// `(P + Pᵀ) / 2`
pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

pub(crate) fn is_symmetric(p: &DMatrix<f64>) -> bool {
    let scale = p.amax().max(f64::MIN_POSITIVE);
    (p - p.transpose()).amax() <= 1e-9 * scale
}

impl GaussianDensity {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean has {} entries but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("gaussian has non-finite entries".into()));
        }
        if !is_symmetric(&cov) {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        if Cholesky::new(cov.clone()).is_none() {
            return Err(Error::NotPositiveDefinite { what: "covariance" });
        }
        Ok(GaussianDensity { mean, cov })
    }

    /// Skips the positive-definiteness check. Callers guarantee the invariant.
    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        GaussianDensity { mean, cov }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn predict(&self, f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<GaussianDensity> {
        gaussian_predict(self, f, q)
    }

    pub fn update(
        &self,
        z: &DVector<f64>,
        h: &DMatrix<f64>,
        r: &DMatrix<f64>,
    ) -> Result<(GaussianDensity, LogWeight)> {
        gaussian_update(self, z, h, r)
    }
}

pub fn gaussian_predict(
    g: &GaussianDensity,
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<GaussianDensity> {
    let n = g.dim();
    if f.shape() != (n, n) || q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "state dimension {n}, transition {:?}, process noise {:?}",
            f.shape(),
            q.shape()
        )));
    }
    let mean = f * &g.mean;
    let cov = symmetrize(&(f * &g.cov * f.transpose() + q));
    Ok(GaussianDensity { mean, cov })
}

/// Everything about a Kalman correction that does not depend on the
/// measurement value, so one component can be corrected by many measurements.
#[derive(Debug, Clone)]
pub struct UpdateFactors {
    predicted_z: DVector<f64>,
    gain: DMatrix<f64>,
    posterior_cov: DMatrix<f64>,
    s_chol: Cholesky<f64, Dyn>,
    ln_norm: f64,
}

impl UpdateFactors {
    pub fn new(g: &GaussianDensity, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Self> {
        let n = g.dim();
        let m = h.nrows();
        if h.ncols() != n || r.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "state dimension {n}, observation {:?}, measurement noise {:?}",
                h.shape(),
                r.shape()
            )));
        }
        let ph_t = &g.cov * h.transpose();
        let s = symmetrize(&(h * &ph_t + r));
        let s_chol = Cholesky::new(s).ok_or(Error::NotPositiveDefinite {
            what: "innovation covariance",
        })?;
        // K = P Hᵀ S⁻¹ computed as (S⁻¹ H P)ᵀ.
        let gain = s_chol.solve(&ph_t.transpose()).transpose();
        let i_kh = DMatrix::<f64>::identity(n, n) - &gain * h;
        let joseph = &i_kh * &g.cov * i_kh.transpose() + &gain * r * gain.transpose();
        let posterior_cov = symmetrize(&joseph);
        let ln_det: f64 = s_chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let ln_norm = -0.5 * (m as f64 * (2.0 * PI).ln() + ln_det);
        Ok(UpdateFactors {
            predicted_z: h * &g.mean,
            gain,
            posterior_cov,
            s_chol,
            ln_norm,
        })
    }

    /// `ln N(z; H m, S)`
    pub fn log_likelihood(&self, z: &DVector<f64>) -> f64 {
        let innovation = z - &self.predicted_z;
        let whitened = self.s_chol.l().solve_lower_triangular(&innovation);
        let maha = whitened.map_or(f64::INFINITY, |w| w.norm_squared());
        self.ln_norm - 0.5 * maha
    }

    pub fn posterior_mean(&self, prior_mean: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        prior_mean + &self.gain * (z - &self.predicted_z)
    }

    pub fn posterior_cov(&self) -> &DMatrix<f64> {
        &self.posterior_cov
    }

    pub fn posterior(&self, prior: &GaussianDensity, z: &DVector<f64>) -> GaussianDensity {
        GaussianDensity {
            mean: self.posterior_mean(&prior.mean, z),
            cov: self.posterior_cov.clone(),
        }
    }
}

/// Kalman correction of `g` by measurement `z`; also returns `ln N(z; H m, S)`.
pub fn gaussian_update(
    g: &GaussianDensity,
    z: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(GaussianDensity, LogWeight)> {
    if z.len() != h.nrows() {
        return Err(Error::Dimension(format!(
            "measurement has {} entries, observation matrix {} rows",
            z.len(),
            h.nrows()
        )));
    }
    let factors = UpdateFactors::new(g, h, r)?;
    let ll = LogWeight::new(factors.log_likelihood(z))?;
    Ok((factors.posterior(g, z), ll))
}
