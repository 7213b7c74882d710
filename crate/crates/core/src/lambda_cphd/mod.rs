//! CPHD estimator of the clutter rate and the detection probability.
//!
//! The state lives on a hybrid space: actual targets carry a Gaussian
//! kinematic density, a motion-model index and a Beta density over their
//! detection probability `a`; clutter generators carry only a Beta density over
//! their detection probability `b` and have uniform spatial density over the
//! clutter region. A single cardinality distribution covers both populations.

mod reduce;

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use reduce::reduce_hybrid;

use crate::cardinality::CardinalityDistribution;
use crate::cphd::{extract_tagged, rescaled_birth, LogAccumulator, Tag, TrackEstimate};
use crate::error::{Error, Result};
use crate::mixture::ReductionParams;
use crate::models::{BirthModel, ModelBundle, Point};
use crate::numerics::{xlogy, BetaDensity, GaussianDensity, LnFactorials, UpdateFactors, MIN_SHAPE};

#[derive(Debug, Clone, PartialEq)]
pub struct BetaGaussianComponent {
    pub weight: f64,
    pub beta: BetaDensity,
    pub density: GaussianDensity,
    pub model: usize,
    pub tag: Tag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutterComponent {
    pub weight: f64,
    pub beta: BetaDensity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub targets: Vec<BetaGaussianComponent>,
    pub clutter: Vec<ClutterComponent>,
    /// Distribution of the number of targets plus clutter generators.
    pub cardinality: CardinalityDistribution,
    pub frame: usize,
    next_tag: Tag,
    newborn: Range<Tag>,
}

impl HybridState {
    pub fn empty(n_max: usize) -> Self {
        HybridState {
            targets: Vec::new(),
            clutter: Vec::new(),
            cardinality: CardinalityDistribution::delta(0, n_max),
            frame: 0,
            next_tag: 1,
            newborn: 0..0,
        }
    }

    pub fn new(
        targets: Vec<BetaGaussianComponent>,
        clutter: Vec<ClutterComponent>,
        cardinality: CardinalityDistribution,
        frame: usize,
    ) -> Self {
        let next_tag = targets.iter().map(|c| c.tag + 1).max().unwrap_or(1);
        HybridState {
            targets,
            clutter,
            cardinality,
            frame,
            next_tag,
            newborn: 0..0,
        }
    }

    pub fn target_mass(&self) -> f64 {
        self.targets.iter().map(|c| c.weight).sum()
    }

    pub fn clutter_mass(&self) -> f64 {
        self.clutter.iter().map(|c| c.weight).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Largest representable number of targets plus clutter generators.
    pub n_max: usize,
    /// Detection-probability prior of newborn targets.
    pub target_beta: BetaDensity,
    /// Expected number of clutter generators born per frame.
    pub clutter_birth_rate: f64,
    /// The clutter birth mass is split evenly over this many components.
    pub clutter_birth_components: usize,
    pub clutter_birth_beta: BetaDensity,
    /// Expected number of clutter generators at the first frame.
    pub initial_clutter_mean: f64,
    pub clutter_survival: f64,
    /// Per-frame variance inflation of target detection-probability densities.
    pub k_beta: f64,
    pub reduction: ReductionParams,
    pub max_clutter_components: usize,
    /// Expected number of targets at the first frame; see the tracker option
    /// of the same name.
    pub initial_birth_mean: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            n_max: 1000,
            target_beta: BetaDensity::new(9.0, 1.0).expect("valid beta"),
            clutter_birth_rate: 1.0,
            clutter_birth_components: 5,
            clutter_birth_beta: BetaDensity::new(1.0, 1.0).expect("valid beta"),
            initial_clutter_mean: 100.0,
            clutter_survival: 0.9,
            k_beta: 1.05,
            reduction: ReductionParams::default(),
            max_clutter_components: 30,
            initial_birth_mean: 20.0,
        }
    }
}

/// Mean-preserving variance inflation of a Beta density by `k_beta ≥ 1`.
///
/// With concentration `ν = s + t`, the variance is `μ(1-μ)/(ν+1)`, so the new
/// concentration is `(ν+1)/k_beta - 1`. It is clamped so that both shapes stay
/// at or above the minimum shape, which keeps the mean.
pub fn beta_dilate(beta: &BetaDensity, k_beta: f64) -> BetaDensity {
    if k_beta <= 1.0 {
        return *beta;
    }
    let mu = beta.mean();
    let nu = ((beta.s() + beta.t() + 1.0) / k_beta - 1.0).max(MIN_SHAPE / mu.min(1.0 - mu));
    BetaDensity::new(mu * nu, (1.0 - mu) * nu).unwrap_or(*beta)
}

/// `(λ̂, p̂_D)`: expected clutter count and mean detection probability of the
/// target population.
pub fn estimate_rates(state: &HybridState) -> (f64, f64) {
    let lambda: f64 = state.clutter.iter().map(|c| c.weight * c.beta.mean()).sum();
    let detected: f64 = state.targets.iter().map(|c| c.weight * c.beta.mean()).sum();
    let p_d = detected / state.target_mass().max(1e-9);
    (lambda, p_d.clamp(0.0, 1.0))
}

/// Expected number of actual targets.
pub fn estimate_target_count(state: &HybridState) -> f64 {
    state.target_mass()
}

pub struct LambdaCphdFilter {
    bundle: ModelBundle,
    config: EstimatorConfig,
    initial_birth: BirthModel,
    table: LnFactorials,
}

impl LambdaCphdFilter {
    pub fn new(bundle: ModelBundle, config: EstimatorConfig) -> Result<Self> {
        let bundle = bundle.validated()?;
        let mut bad = Vec::new();
        if config.n_max == 0 {
            bad.push("n_max must be positive".to_string());
        }
        if !(config.k_beta >= 1.0 && config.k_beta.is_finite()) {
            bad.push(format!("k_beta {} must be at least 1", config.k_beta));
        }
        if !(0.0..=1.0).contains(&config.clutter_survival) {
            bad.push(format!("clutter survival {} outside [0, 1]", config.clutter_survival));
        }
        if !(config.clutter_birth_rate >= 0.0 && config.clutter_birth_rate.is_finite()) {
            bad.push(format!("clutter birth rate {} must be finite and nonnegative", config.clutter_birth_rate));
        }
        if !(config.initial_clutter_mean >= 0.0 && config.initial_clutter_mean.is_finite()) {
            bad.push(format!("initial clutter mean {} must be finite and nonnegative", config.initial_clutter_mean));
        }
        if config.clutter_birth_components == 0 && config.clutter_birth_rate > 0.0 {
            bad.push("clutter birth needs at least one component".into());
        }
        if !bad.is_empty() {
            return Err(Error::InvalidModel(bad));
        }
        let initial_birth = rescaled_birth(&bundle.birth, config.initial_birth_mean, config.n_max)?;
        Ok(LambdaCphdFilter {
            table: LnFactorials::new(config.n_max + 1),
            bundle,
            config,
            initial_birth,
        })
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn initial_state(&self) -> HybridState {
        HybridState::empty(self.config.n_max)
    }

    pub fn predict_hybrid(&self, state: &HybridState) -> Result<HybridState> {
        let frame = state.frame + 1;
        let n_max = self.config.n_max;
        let p_s1 = self.bundle.rates.p_s;
        let p_s0 = self.config.clutter_survival;
        let first = state.frame == 0;
        let target_birth = if first { &self.initial_birth } else { &self.bundle.birth };
        let clutter_birth_mean = if first {
            self.config.initial_clutter_mean
        } else {
            self.config.clutter_birth_rate
        };

        let (n1, n0) = (state.target_mass(), state.clutter_mass());
        let phi = if n1 + n0 > 0.0 {
            (p_s1 * n1 + p_s0 * n0) / (n1 + n0)
        } else {
            1.0
        };
        let (prior, _) = state.cardinality.resized(n_max);
        let survivors = prior.thin(phi, &self.table);
        let clutter_birth_card = CardinalityDistribution::poisson(clutter_birth_mean, n_max)?;
        let (births, _) = target_birth.cardinality.convolve(&clutter_birth_card, n_max);
        let (cardinality, lost) = survivors.convolve(&births, n_max);
        if lost > 1e-9 {
            log::warn!("frame {frame}: hybrid cardinality truncated at n_max = {n_max}, dropped mass {lost:.3e}");
        }

        let motion = &self.bundle.motion;
        let mut targets = Vec::with_capacity((state.targets.len() + target_birth.components.len()) * motion.len());
        for c in &state.targets {
            let beta = beta_dilate(&c.beta, self.config.k_beta);
            for (r, model) in motion.models.iter().enumerate() {
                let w = c.weight * p_s1 * motion.transition(c.model, r);
                if w <= 0.0 {
                    continue;
                }
                targets.push(BetaGaussianComponent {
                    weight: w,
                    beta,
                    density: c.density.predict(&model.f, &model.q).map_err(|e| e.at_frame(frame))?,
                    model: r,
                    tag: c.tag,
                });
            }
        }
        let mut next_tag = state.next_tag;
        let first_newborn = next_tag;
        for (w, g) in &target_birth.components {
            let tag = next_tag;
            next_tag += 1;
            for (r, &pi) in motion.pi.iter().enumerate() {
                if w * pi > 0.0 {
                    targets.push(BetaGaussianComponent {
                        weight: w * pi,
                        beta: self.config.target_beta,
                        density: g.clone(),
                        model: r,
                        tag,
                    });
                }
            }
        }

        let mut clutter: Vec<ClutterComponent> = state
            .clutter
            .iter()
            .filter(|c| c.weight * p_s0 > 0.0)
            .map(|c| ClutterComponent {
                weight: c.weight * p_s0,
                beta: c.beta,
            })
            .collect();
        if clutter_birth_mean > 0.0 {
            let parts = self.config.clutter_birth_components.max(1);
            for _ in 0..parts {
                clutter.push(ClutterComponent {
                    weight: clutter_birth_mean / parts as f64,
                    beta: self.config.clutter_birth_beta,
                });
            }
        }

        Ok(HybridState {
            targets,
            clutter,
            cardinality,
            frame,
            next_tag,
            newborn: first_newborn..next_tag,
        })
    }

    pub fn update_hybrid(&self, state: &HybridState, measurements: &[Point]) -> Result<HybridState> {
        let frame = state.frame;
        let region = &self.bundle.clutter.region;
        let zs: Vec<DVector<f64>> = measurements
            .iter()
            .filter(|z| region.contains(z))
            .map(|z| DVector::from_column_slice(z.as_slice()))
            .collect();
        let m = zs.len();
        let k_density = 1.0 / region.area();
        let h = &self.bundle.measurement.h;
        let r = &self.bundle.measurement.r;

        let (n1, n0) = (state.target_mass(), state.clutter_mass());
        let d1: f64 = state.targets.iter().map(|c| c.weight * c.beta.mean()).sum();
        let d0: f64 = state.clutter.iter().map(|c| c.weight * c.beta.mean()).sum();
        let total = n1 + n0;
        let big_phi = if total > 0.0 { (1.0 - (d1 + d0) / total).max(0.0) } else { 1.0 };

        // ln Ϋᵘ(n) = ln P(n, m+u) + (n-m-u) ln Φ for n ≥ m+u.
        let ln_phi = big_phi.ln();
        let ln_upsilon = |u: usize, n: usize| -> f64 {
            if n < m + u {
                f64::NEG_INFINITY
            } else {
                self.table.ln_permutation(n, m + u) + xlogy(n - m - u, ln_phi)
            }
        };
        let probs = state.cardinality.probs();
        let ln_post: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(n, &p)| if p > 0.0 { p.ln() + ln_upsilon(0, n) } else { f64::NEG_INFINITY })
            .collect();
        let cardinality = CardinalityDistribution::from_log_weights(&ln_post)
            .ok_or(Error::CardinalityCollapse { frame })?;
        let mut l0 = LogAccumulator::new();
        let mut l1 = LogAccumulator::new();
        for (n, &lp) in ln_post.iter().enumerate() {
            l0.add(lp);
            if probs[n] > 0.0 {
                l1.add(probs[n].ln() + ln_upsilon(1, n));
            }
        }
        let missed_scale = if total > 0.0 { (l1.value() - l0.value()).exp() / total } else { 0.0 };

        let factors: Vec<UpdateFactors> = state
            .targets
            .iter()
            .map(|c| UpdateFactors::new(&c.density, h, r))
            .collect::<Result<_>>()
            .map_err(|e| e.at_frame(frame))?;
        // q[i][k] = N(z_k; H m_i, S_i)
        let q: Vec<Vec<f64>> = factors
            .iter()
            .map(|f| zs.iter().map(|z| f.log_likelihood(z).exp()).collect())
            .collect();
        let denominators: Vec<f64> = (0..m)
            .map(|k| {
                d0 * k_density
                    + state
                        .targets
                        .iter()
                        .zip(&q)
                        .map(|(c, qi)| c.weight * c.beta.mean() * qi[k])
                        .sum::<f64>()
            })
            .collect();

        let mut targets = Vec::with_capacity(state.targets.len() * (m + 1));
        for c in &state.targets {
            let miss = 1.0 - c.beta.mean();
            let w = c.weight * miss * missed_scale;
            if w > 0.0 {
                targets.push(BetaGaussianComponent {
                    weight: w,
                    beta: c.beta.missed(),
                    density: c.density.clone(),
                    model: c.model,
                    tag: c.tag,
                });
            }
        }
        let mut next_tag = state.next_tag;
        let mut born_tags: BTreeMap<(Tag, usize), Tag> = BTreeMap::new();
        for (k, z) in zs.iter().enumerate() {
            if denominators[k] <= 0.0 {
                continue;
            }
            for (i, c) in state.targets.iter().enumerate() {
                let w = c.weight * c.beta.mean() * q[i][k] / denominators[k];
                if !(w > 0.0) {
                    continue;
                }
                let tag = if state.newborn.contains(&c.tag) {
                    *born_tags.entry((c.tag, k)).or_insert_with(|| {
                        next_tag += 1;
                        next_tag - 1
                    })
                } else {
                    c.tag
                };
                targets.push(BetaGaussianComponent {
                    weight: w,
                    beta: c.beta.detected(),
                    density: factors[i].posterior(&c.density, z),
                    model: c.model,
                    tag,
                });
            }
        }

        // Every measurement leaves the clutter Beta at s+1, so the detection
        // terms of one clutter component collapse into a single component.
        let inverse_sum: f64 = denominators.iter().filter(|d| **d > 0.0).map(|d| 1.0 / d).sum();
        let mut clutter = Vec::with_capacity(2 * state.clutter.len());
        for c in &state.clutter {
            let mu = c.beta.mean();
            let w_miss = c.weight * (1.0 - mu) * missed_scale;
            if w_miss > 0.0 {
                clutter.push(ClutterComponent {
                    weight: w_miss,
                    beta: c.beta.missed(),
                });
            }
            let w_det = c.weight * mu * k_density * inverse_sum;
            if w_det > 0.0 {
                clutter.push(ClutterComponent {
                    weight: w_det,
                    beta: c.beta.detected(),
                });
            }
        }

        Ok(HybridState {
            targets,
            clutter,
            cardinality,
            frame,
            next_tag,
            newborn: state.newborn.clone(),
        })
    }

    pub fn reduce(&self, state: HybridState) -> HybridState {
        reduce_hybrid(state, &self.config.reduction, self.config.max_clutter_components)
    }

    /// Tracks from the target mixture: the heaviest components, as many as the
    /// rounded expected target count, with unique tags.
    pub fn extract_targets(&self, state: &mut HybridState) -> Vec<TrackEstimate> {
        let count = estimate_target_count(state).round() as usize;
        let mut next = state.next_tag;
        let tracks = extract_tagged(&mut state.targets, count, self.config.reduction.merge_threshold, || {
            next += 1;
            next - 1
        });
        state.next_tag = next;
        tracks
    }

    /// Predict, update and reduce for one frame; returns the new state and
    /// `(λ̂, p̂_D)` read off the updated (pre-reduction) state.
    pub fn step(&self, state: &HybridState, measurements: &[Point]) -> Result<(HybridState, (f64, f64))> {
        let predicted = self.predict_hybrid(state)?;
        let updated = self.update_hybrid(&predicted, measurements)?;
        let rates = estimate_rates(&updated);
        Ok((self.reduce(updated), rates))
    }
}
