//! Gaussian-mixture multiple-model CPHD filter.
//!
//! The intensity is a mixture of [`GaussianComponent`]s, each tied to one
//! motion model and carrying a track tag. The cardinality distribution is
//! propagated alongside it. Clutter is Poisson with uniform spatial density
//! over the clutter region.

mod extract;
mod reduce;

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub(crate) use extract::{extract_tagged, Tagged};
pub use extract::{extract, TrackEstimate};
pub use reduce::reduce;

use crate::cardinality::CardinalityDistribution;
use crate::error::{Error, Result};
use crate::mixture::ReductionParams;
use crate::models::{BirthModel, ModelBundle, Point};
use crate::numerics::{log_esf, xlogy, GaussianDensity, LnFactorials, UpdateFactors};

/// Track identity carried by mixture components.
pub type Tag = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub density: GaussianDensity,
    /// Zero-based motion-model index.
    pub model: usize,
    pub tag: Tag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CphdState {
    pub components: Vec<GaussianComponent>,
    pub cardinality: CardinalityDistribution,
    pub frame: usize,
    next_tag: Tag,
    /// Tags handed to birth components by the latest prediction.
    newborn: Range<Tag>,
}

impl CphdState {
    /// No targets, certainly (`ρ = δ₀`), before the first frame.
    pub fn empty(n_max: usize) -> Self {
        CphdState {
            components: Vec::new(),
            cardinality: CardinalityDistribution::delta(0, n_max),
            frame: 0,
            next_tag: 1,
            newborn: 0..0,
        }
    }

    pub fn new(
        components: Vec<GaussianComponent>,
        cardinality: CardinalityDistribution,
        frame: usize,
    ) -> Self {
        let next_tag = components.iter().map(|c| c.tag + 1).max().unwrap_or(1);
        CphdState {
            components,
            cardinality,
            frame,
            next_tag,
            newborn: 0..0,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub(crate) fn fresh_tag(&mut self) -> Tag {
        let t = self.next_tag;
        self.next_tag += 1;
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CphdConfig {
    /// Largest representable target count.
    pub n_max: usize,
    pub reduction: ReductionParams,
    /// Expected number of targets present at the first frame. The birth
    /// mixture is rescaled to this mass for the first prediction only.
    pub initial_birth_mean: f64,
}

impl Default for CphdConfig {
    fn default() -> Self {
        CphdConfig {
            n_max: 60,
            reduction: ReductionParams::default(),
            initial_birth_mean: 20.0,
        }
    }
}

/// Birth model with its mixture rescaled to carry `mean` expected targets.
pub(crate) fn rescaled_birth(birth: &BirthModel, mean: f64, n_max: usize) -> Result<BirthModel> {
    let total = birth.total_weight();
    if mean <= 0.0 || total <= 0.0 {
        return Ok(birth.clone());
    }
    Ok(BirthModel {
        components: birth
            .components
            .iter()
            .map(|(w, g)| (w * mean / total, g.clone()))
            .collect(),
        cardinality: CardinalityDistribution::poisson(mean, n_max)?,
    })
}

/// Running `ln Σ exp(x)` without materializing the terms.
#[derive(Clone, Copy)]
pub(crate) struct LogAccumulator {
    max: f64,
    sum: f64,
}

impl LogAccumulator {
    pub(crate) fn new() -> Self {
        LogAccumulator {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    pub(crate) fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Inputs to the Υ functions that do not depend on the measurement subset.
struct UpsilonTerms<'a> {
    table: &'a LnFactorials,
    ln_lambda: f64,
    ln_miss: f64,
    ln_mass: f64,
}

impl UpsilonTerms<'_> {
    /// `ln Υᵘ(n)` up to the factor `e^{-λ}` shared by every Υ of the frame.
    ///
    /// With Poisson clutter, `(|Z|-j)! ρ_K(|Z|-j) = e^{-λ} λ^{|Z|-j}`, and the
    /// powers of the intensity mass are folded into the normalized ESF input,
    /// leaving `Σ_j λ^{m-j} P(n, j+u) (1-p_D)^{n-j-u} e_j(ξ) / W^u`.
    fn ln_upsilon(&self, ln_esf: &[f64], u: usize, n: usize) -> f64 {
        if n < u {
            return f64::NEG_INFINITY;
        }
        let m = ln_esf.len() - 1;
        let mut acc = LogAccumulator::new();
        for (j, &le) in ln_esf.iter().enumerate().take(m.min(n - u) + 1) {
            if le == f64::NEG_INFINITY {
                continue;
            }
            acc.add(
                xlogy(m - j, self.ln_lambda)
                    + self.table.ln_permutation(n, j + u)
                    + xlogy(n - j - u, self.ln_miss)
                    + le
                    - xlogy(u, self.ln_mass),
            );
        }
        acc.value()
    }

    /// `ln ⟨Υᵘ, ρ⟩`
    fn ln_inner(&self, ln_esf: &[f64], u: usize, ln_rho: &[f64]) -> f64 {
        let mut acc = LogAccumulator::new();
        for (n, &lr) in ln_rho.iter().enumerate() {
            if lr == f64::NEG_INFINITY {
                continue;
            }
            acc.add(lr + self.ln_upsilon(ln_esf, u, n));
        }
        acc.value()
    }
}

pub struct CphdFilter {
    bundle: ModelBundle,
    config: CphdConfig,
    initial_birth: BirthModel,
    table: LnFactorials,
}

impl CphdFilter {
    pub fn new(bundle: ModelBundle, config: CphdConfig) -> Result<Self> {
        let bundle = bundle.validated()?;
        if config.n_max == 0 {
            return Err(Error::Domain("n_max must be positive".into()));
        }
        let initial_birth = rescaled_birth(&bundle.birth, config.initial_birth_mean, config.n_max)?;
        Ok(CphdFilter {
            table: LnFactorials::new(config.n_max + 1),
            bundle,
            config,
            initial_birth,
        })
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn config(&self) -> &CphdConfig {
        &self.config
    }

    pub fn initial_state(&self) -> CphdState {
        CphdState::empty(self.config.n_max)
    }

    /// Prediction to the next frame: survival thinning and birth convolution of
    /// the cardinality; model-switching propagation of every component plus
    /// freshly tagged birth components.
    pub fn predict(&self, state: &CphdState) -> Result<CphdState> {
        let frame = state.frame + 1;
        let p_s = self.bundle.rates.p_s;
        let n_max = self.config.n_max;
        let birth = if state.frame == 0 {
            &self.initial_birth
        } else {
            &self.bundle.birth
        };

        let (survivors, _) = state.cardinality.resized(n_max);
        let survivors = survivors.thin(p_s, &self.table);
        let (cardinality, lost) = survivors.convolve(&birth.cardinality, n_max);
        if lost > 1e-9 {
            log::warn!("frame {frame}: predicted cardinality truncated at n_max = {n_max}, dropped mass {lost:.3e}");
        }

        let motion = &self.bundle.motion;
        let mut components = Vec::with_capacity(state.components.len() * motion.len() + birth.components.len() * motion.len());
        for c in &state.components {
            for (r, model) in motion.models.iter().enumerate() {
                let w = c.weight * p_s * motion.transition(c.model, r);
                if w <= 0.0 {
                    continue;
                }
                components.push(GaussianComponent {
                    weight: w,
                    density: c.density.predict(&model.f, &model.q).map_err(|e| e.at_frame(frame))?,
                    model: r,
                    tag: c.tag,
                });
            }
        }

        let mut next = CphdState {
            components,
            cardinality,
            frame,
            next_tag: state.next_tag,
            newborn: 0..0,
        };
        let first_newborn = next.next_tag;
        for (w, g) in &birth.components {
            let tag = next.fresh_tag();
            for (r, &pi) in motion.pi.iter().enumerate() {
                if w * pi > 0.0 {
                    next.components.push(GaussianComponent {
                        weight: w * pi,
                        density: g.clone(),
                        model: r,
                        tag,
                    });
                }
            }
        }
        next.newborn = first_newborn..next.next_tag;
        Ok(next)
    }

    /// Measurement update with clutter rate `lambda` and detection probability `p_d`.
    pub fn update(&self, state: &CphdState, measurements: &[Point], lambda: f64, p_d: f64) -> Result<CphdState> {
        let frame = state.frame;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("clutter rate {lambda} must be finite and nonnegative")).at_frame(frame));
        }
        if !(0.0..=1.0).contains(&p_d) {
            return Err(Error::Domain(format!("detection probability {p_d} outside [0, 1]")).at_frame(frame));
        }
        let region = &self.bundle.clutter.region;
        let zs: Vec<DVector<f64>> = measurements
            .iter()
            .filter(|z| region.contains(z))
            .map(|z| DVector::from_column_slice(z.as_slice()))
            .collect();
        if zs.len() < measurements.len() {
            log::warn!("frame {frame}: ignored {} measurements outside the clutter region", measurements.len() - zs.len());
        }
        let m = zs.len();
        let volume = region.area();
        let h = &self.bundle.measurement.h;
        let r = &self.bundle.measurement.r;

        let factors: Vec<UpdateFactors> = state
            .components
            .iter()
            .map(|c| UpdateFactors::new(&c.density, h, r))
            .collect::<Result<_>>()
            .map_err(|e| e.at_frame(frame))?;

        // ψ_z(x) = ⟨1,κ⟩/κ(z) · g(z|x) · p_D = V · g(z|x) · p_D for uniform clutter.
        let psi: Vec<Vec<f64>> = factors
            .iter()
            .map(|f| {
                zs.iter()
                    .map(|z| p_d * volume * f.log_likelihood(z).exp())
                    .collect()
            })
            .collect();
        let mass = state.total_weight();
        let xi: Vec<f64> = (0..m)
            .map(|k| {
                if mass > 0.0 {
                    state.components.iter().zip(&psi).map(|(c, p)| c.weight * p[k]).sum::<f64>() / mass
                } else {
                    0.0
                }
            })
            .collect();

        let terms = UpsilonTerms {
            table: &self.table,
            ln_lambda: lambda.ln(),
            ln_miss: (1.0 - p_d).ln(),
            ln_mass: mass.ln(),
        };
        let ln_rho: Vec<f64> = state.cardinality.probs().iter().map(|p| p.ln()).collect();
        let ln_esf_all = log_esf(&xi).map_err(|e| e.at_frame(frame))?;

        let ln_post: Vec<f64> = ln_rho
            .iter()
            .enumerate()
            .map(|(n, lr)| lr + terms.ln_upsilon(&ln_esf_all, 0, n))
            .collect();
        let cardinality = CardinalityDistribution::from_log_weights(&ln_post)
            .ok_or(Error::CardinalityCollapse { frame })?;
        let ln_norm = crate::numerics::log_sum_exp(&ln_post);

        let mut next = CphdState {
            components: Vec::new(),
            cardinality,
            frame,
            next_tag: state.next_tag,
            newborn: state.newborn.clone(),
        };
        if state.components.is_empty() {
            return Ok(next);
        }

        let missed_ratio = (terms.ln_inner(&ln_esf_all, 1, &ln_rho) - ln_norm).exp();
        let detect_ratio: Vec<f64> = (0..m)
            .map(|k| {
                let rest: Vec<f64> = xi.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| *v).collect();
                let le = log_esf(&rest)?;
                Ok((terms.ln_inner(&le, 1, &ln_rho) - ln_norm).exp())
            })
            .collect::<Result<_>>()
            .map_err(|e| e.at_frame(frame))?;

        let mut components = Vec::with_capacity(state.components.len() * (m + 1));
        for c in &state.components {
            let w = c.weight * (1.0 - p_d) * missed_ratio;
            if w > 0.0 {
                components.push(GaussianComponent { weight: w, ..c.clone() });
            }
        }
        let mut born_tags: BTreeMap<(Tag, usize), Tag> = BTreeMap::new();
        for (k, z) in zs.iter().enumerate() {
            for (i, c) in state.components.iter().enumerate() {
                let w = c.weight * psi[i][k] * detect_ratio[k];
                if !(w > 0.0) {
                    continue;
                }
                let tag = if state.newborn.contains(&c.tag) {
                    *born_tags.entry((c.tag, k)).or_insert_with(|| next.fresh_tag())
                } else {
                    c.tag
                };
                components.push(GaussianComponent {
                    weight: w,
                    density: factors[i].posterior(&c.density, z),
                    model: c.model,
                    tag,
                });
            }
        }
        next.components = components;

        let mean = next.cardinality.mean();
        let total = next.total_weight();
        if mean > 0.5 && (total - mean).abs() > 0.25 * mean {
            log::debug!("frame {frame}: intensity mass {total:.3} vs cardinality mean {mean:.3}");
        }
        Ok(next)
    }

    pub fn reduce(&self, state: CphdState) -> CphdState {
        CphdState {
            components: reduce(state.components, &self.config.reduction),
            ..state
        }
    }

    pub fn extract(&self, state: &mut CphdState) -> Vec<TrackEstimate> {
        extract(state, self.config.reduction.merge_threshold)
    }

    /// Predict, update, reduce and extract for one frame.
    pub fn step(
        &self,
        state: &CphdState,
        measurements: &[Point],
        lambda: f64,
        p_d: f64,
    ) -> Result<(CphdState, Vec<TrackEstimate>)> {
        let predicted = self.predict(state)?;
        let updated = self.update(&predicted, measurements, lambda, p_d)?;
        let mut reduced = self.reduce(updated);
        let tracks = self.extract(&mut reduced);
        Ok((reduced, tracks))
    }
}

#[cfg(test)]
mod tests;
