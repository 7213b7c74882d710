//! Seeded generator of ground-truth trajectories and detection streams.
//!
//! Targets move under the switching motion models, are detected with a
//! time-varying probability and are joined by Poisson clutter with a
//! time-varying rate, uniform over the region.

mod presets;
mod schedule;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

pub use presets::{preset, preset_scenarios, PRESET_NAMES};
pub use schedule::Schedule;

use crate::error::{Error, Result};
use crate::models::{MeasurementModel, ModelSet, Point, Region};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub frames: usize,
    pub region: Region,
    pub motion: ModelSet,
    /// Targets present at frame 1.
    pub initial_targets: usize,
    /// Expected number of new targets per frame.
    pub birth_rate: f64,
    pub p_s: f64,
    pub p_d_schedule: Schedule,
    pub lambda_schedule: Schedule,
    pub measurement: MeasurementModel,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            frames: 60,
            region: Region::default(),
            motion: ModelSet::default(),
            initial_targets: 20,
            birth_rate: 0.2,
            p_s: 0.99,
            p_d_schedule: Schedule::Constant { value: 0.9 },
            lambda_schedule: Schedule::Constant { value: 10.0 },
            measurement: MeasurementModel::default(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// All invariant violations, or `Ok` when there are none.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut out = Vec::new();
        if self.frames == 0 {
            out.push("frames must be at least 1".into());
        }
        if !(self.region.width() > 0.0 && self.region.height() > 0.0) {
            out.push("region has zero area".into());
        }
        if !(self.birth_rate >= 0.0 && self.birth_rate.is_finite()) {
            out.push(format!("birth rate {} must be finite and nonnegative", self.birth_rate));
        }
        if !(0.0..=1.0).contains(&self.p_s) {
            out.push(format!("p_s {} outside [0, 1]", self.p_s));
        }
        self.p_d_schedule.check("p_d", self.frames, 0.0, 1.0, &mut out);
        self.lambda_schedule.check("lambda", self.frames, 0.0, f64::MAX, &mut out);
        // Noise-free sensors are allowed here, so R only needs to be PSD.
        let r = &self.measurement.r;
        if r.shape() != (2, 2) || !crate::numerics::gaussian_is_symmetric(r) || SymmetricEigen::new(r.clone()).eigenvalues.min() < 0.0 {
            out.push("measurement noise must be a symmetric positive semidefinite 2x2 matrix".into());
        }
        let bundle = crate::models::ModelBundle {
            motion: self.motion.clone(),
            measurement: MeasurementModel { h: self.measurement.h.clone(), r: DMatrix::identity(2, 2) },
            birth: crate::models::BirthModel::none(),
            clutter: crate::models::ClutterModel { region: self.region, lambda: 0.0 },
            rates: crate::models::SurvivalDetectionParams { p_s: self.p_s, p_d: 0.5 },
        };
        if let Err(errs) = bundle.validate() {
            out.extend(errs);
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthState {
    /// `[x, y, vx, vy]`
    pub state: [f64; 4],
    pub model: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTrack {
    pub label: u64,
    pub birth_frame: usize,
    /// Last frame the target is alive.
    pub death_frame: usize,
    /// One entry per frame in `birth_frame..=death_frame`.
    pub states: Vec<TruthState>,
}

impl TruthTrack {
    pub fn at(&self, frame: usize) -> Option<&TruthState> {
        if frame < self.birth_frame || frame > self.death_frame {
            return None;
        }
        self.states.get(frame - self.birth_frame)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tracks: Vec<TruthTrack>,
}

impl GroundTruth {
    /// `(label, state)` of every target alive at `frame`.
    pub fn at_frame(&self, frame: usize) -> Vec<(u64, &TruthState)> {
        self.tracks
            .iter()
            .filter_map(|t| t.at(frame).map(|s| (t.label, s)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub frame: usize,
    pub measurements: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub truth: GroundTruth,
    pub frames: Vec<DetectionFrame>,
    /// True clutter rate per frame, index 0 is frame 1.
    pub lambda_true: Vec<f64>,
    pub p_d_true: Vec<f64>,
}

/// Square root `L` with `L Lᵀ = M` for a symmetric positive semidefinite `M`.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d)
}

fn gaussian_noise(rng: &mut ChaCha8Rng, sqrt: &DMatrix<f64>) -> DVector<f64> {
    let e = DVector::from_fn(sqrt.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    sqrt * e
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |d| d.sample(rng) as usize)
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn uniform_point(rng: &mut ChaCha8Rng, region: &Region) -> Point {
    Point::new(
        rng.random_range(region.x_min..region.x_max),
        rng.random_range(region.y_min..region.y_max),
    )
}

struct Live {
    label: u64,
    state: DVector<f64>,
    model: usize,
    track: usize,
}

/// Runs the scenario. Dynamics, detections and clutter each draw from their
/// own stream of a generator seeded by `config.seed`.
pub fn simulate(config: &ScenarioConfig) -> Result<Simulation> {
    config.validate().map_err(Error::InvalidModel)?;
    let stream = |n: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(n);
        rng
    };
    let mut dyn_rng = stream(0);
    let mut det_rng = stream(1);
    let mut clutter_rng = stream(2);

    let region = &config.region;
    let motion = &config.motion;
    let q_sqrt: Vec<DMatrix<f64>> = motion.models.iter().map(|m| psd_sqrt(&m.q)).collect();
    let r_sqrt = psd_sqrt(&config.measurement.r);
    let h = &config.measurement.h;

    let mut truth = GroundTruth::default();
    let mut live: Vec<Live> = Vec::new();
    let mut frames = Vec::with_capacity(config.frames);
    let mut next_label = 1u64;

    for k in 1..=config.frames {
        // Survival, model switch, motion; leaving the region ends the track.
        let mut survivors = Vec::with_capacity(live.len());
        for mut t in live.drain(..) {
            if dyn_rng.random::<f64>() >= config.p_s {
                continue;
            }
            let row: Vec<f64> = (0..motion.len()).map(|r| motion.transition(t.model, r)).collect();
            t.model = sample_index(&mut dyn_rng, &row);
            t.state = &motion.models[t.model].f * &t.state + gaussian_noise(&mut dyn_rng, &q_sqrt[t.model]);
            if !region.contains(&Point::new(t.state[0], t.state[1])) {
                continue;
            }
            survivors.push(t);
        }
        live = survivors;

        let newborn = if k == 1 { config.initial_targets } else { 0 } + poisson(&mut dyn_rng, config.birth_rate);
        for _ in 0..newborn {
            let p = uniform_point(&mut dyn_rng, region);
            let model = sample_index(&mut dyn_rng, &motion.pi);
            truth.tracks.push(TruthTrack {
                label: next_label,
                birth_frame: k,
                death_frame: k,
                states: Vec::new(),
            });
            live.push(Live {
                label: next_label,
                state: DVector::from_vec(vec![p.x, p.y, 0.0, 0.0]),
                model,
                track: truth.tracks.len() - 1,
            });
            next_label += 1;
        }

        let p_d = config.p_d_schedule.value(k, config.frames);
        let mut measurements = Vec::new();
        for t in &live {
            let track = &mut truth.tracks[t.track];
            debug_assert_eq!(track.label, t.label);
            track.death_frame = k;
            track.states.push(TruthState {
                state: [t.state[0], t.state[1], t.state[2], t.state[3]],
                model: t.model,
            });
            if det_rng.random::<f64>() < p_d {
                let z = h * &t.state + gaussian_noise(&mut det_rng, &r_sqrt);
                let z = Point::new(z[0], z[1]);
                if region.contains(&z) {
                    measurements.push(z);
                }
            }
        }
        let clutter = poisson(&mut clutter_rng, config.lambda_schedule.value(k, config.frames));
        for _ in 0..clutter {
            measurements.push(uniform_point(&mut clutter_rng, region));
        }
        // Interleave target and clutter returns.
        for i in (1..measurements.len()).rev() {
            let j = clutter_rng.random_range(0..=i);
            measurements.swap(i, j);
        }
        frames.push(DetectionFrame { frame: k, measurements });
    }

    Ok(Simulation {
        truth,
        frames,
        lambda_true: config.lambda_schedule.values(config.frames),
        p_d_true: config.p_d_schedule.values(config.frames),
    })
}
