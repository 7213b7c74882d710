//! Bootstrap tracking: per frame, a rate estimator reads the raw measurements,
//! and its smoothed clutter-rate and detection-probability estimates drive the
//! multiple-model CPHD tracker on the same measurements.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cphd::{CphdConfig, CphdFilter, CphdState, TrackEstimate};
use crate::error::{Error, Result};
use crate::lambda_cphd::{EstimatorConfig, HybridState, LambdaCphdFilter};
use crate::models::{ModelBundle, Point};
use crate::simulator::DetectionFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate {
    pub frame: usize,
    pub tracks: Vec<TrackEstimate>,
    pub lambda_hat: f64,
    pub p_d_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub tracker: CphdConfig,
    pub estimator: EstimatorConfig,
    /// Length of the trailing moving average applied to the raw rates.
    pub window: usize,
    pub lambda_floor: f64,
    pub p_d_min: f64,
    pub p_d_max: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            tracker: CphdConfig::default(),
            estimator: EstimatorConfig::default(),
            window: 3,
            lambda_floor: 0.5,
            p_d_min: 0.05,
            p_d_max: 0.999,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut out = Vec::new();
        if self.window == 0 {
            out.push("rate window must be at least 1".into());
        }
        if !(self.lambda_floor >= 0.0 && self.lambda_floor.is_finite()) {
            out.push(format!("lambda floor {} must be finite and nonnegative", self.lambda_floor));
        }
        if !(self.p_d_min > 0.0 && self.p_d_min <= self.p_d_max && self.p_d_max <= 1.0) {
            out.push(format!("detection bounds [{}, {}] must satisfy 0 < min ≤ max ≤ 1", self.p_d_min, self.p_d_max));
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

/// Source of per-frame `(λ, p_D)` for the tracker.
pub trait RateEstimator {
    type State: Clone;

    fn initial_state(&self) -> Self::State;

    /// Consumes the measurements of the next frame.
    fn estimate(&self, state: &Self::State, measurements: &[Point]) -> Result<(Self::State, (f64, f64))>;
}

impl RateEstimator for LambdaCphdFilter {
    type State = HybridState;

    fn initial_state(&self) -> HybridState {
        LambdaCphdFilter::initial_state(self)
    }

    fn estimate(&self, state: &HybridState, measurements: &[Point]) -> Result<(HybridState, (f64, f64))> {
        self.step(state, measurements)
    }
}

/// Known per-frame rates; entry 0 belongs to frame 1. Frames past the end
/// reuse the last entry.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRates {
    pub lambda: Vec<f64>,
    pub p_d: Vec<f64>,
}

impl OracleRates {
    pub fn constant(lambda: f64, p_d: f64) -> Self {
        OracleRates {
            lambda: vec![lambda],
            p_d: vec![p_d],
        }
    }

    pub fn at(&self, frame: usize) -> (f64, f64) {
        let pick = |v: &[f64]| v[(frame.max(1) - 1).min(v.len() - 1)];
        (pick(&self.lambda), pick(&self.p_d))
    }
}

impl RateEstimator for OracleRates {
    /// Index of the last frame consumed.
    type State = usize;

    fn initial_state(&self) -> usize {
        0
    }

    fn estimate(&self, state: &usize, _: &[Point]) -> Result<(usize, (f64, f64))> {
        if self.lambda.is_empty() || self.p_d.is_empty() {
            return Err(Error::Domain("oracle has no rates".into()));
        }
        Ok((state + 1, self.at(state + 1)))
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapState<S> {
    pub tracker: CphdState,
    pub estimator: S,
    history: VecDeque<(f64, f64)>,
}

/// A failed run: the error and every frame completed before it.
#[derive(Debug, Error)]
#[error("{source}")]
pub struct SequenceError {
    pub partial: Vec<FrameEstimate>,
    #[source]
    pub source: Error,
}

pub struct BootstrapFilter<E> {
    tracker: CphdFilter,
    estimator: E,
    config: BootstrapConfig,
}

impl BootstrapFilter<LambdaCphdFilter> {
    /// Tracker and estimator built from the same system models.
    pub fn new(bundle: ModelBundle, config: BootstrapConfig) -> Result<Self> {
        let estimator = LambdaCphdFilter::new(bundle.clone(), config.estimator.clone())?;
        BootstrapFilter::with_estimator(bundle, config, estimator)
    }
}

impl<E: RateEstimator> BootstrapFilter<E> {
    pub fn with_estimator(bundle: ModelBundle, config: BootstrapConfig, estimator: E) -> Result<Self> {
        config.validate().map_err(Error::InvalidModel)?;
        Ok(BootstrapFilter {
            tracker: CphdFilter::new(bundle, config.tracker.clone())?,
            estimator,
            config,
        })
    }

    pub fn tracker(&self) -> &CphdFilter {
        &self.tracker
    }

    pub fn initial_state(&self) -> BootstrapState<E::State> {
        BootstrapState {
            tracker: self.tracker.initial_state(),
            estimator: self.estimator.initial_state(),
            history: VecDeque::with_capacity(self.config.window),
        }
    }

    /// Smoothed and clamped rates after adding `raw` to the window.
    fn smooth(&self, history: &mut VecDeque<(f64, f64)>, raw: (f64, f64)) -> (f64, f64) {
        if history.len() == self.config.window {
            history.pop_front();
        }
        history.push_back(raw);
        let n = history.len() as f64;
        let lambda = history.iter().map(|r| r.0).sum::<f64>() / n;
        let p_d = history.iter().map(|r| r.1).sum::<f64>() / n;
        (
            lambda.max(self.config.lambda_floor),
            p_d.clamp(self.config.p_d_min, self.config.p_d_max),
        )
    }

    pub fn step(
        &self,
        state: &BootstrapState<E::State>,
        measurements: &[Point],
    ) -> Result<(BootstrapState<E::State>, FrameEstimate)> {
        let frame = state.tracker.frame + 1;
        let (estimator, raw) = self
            .estimator
            .estimate(&state.estimator, measurements)
            .map_err(|e| e.at_frame(frame))?;
        let mut history = state.history.clone();
        let (lambda_hat, p_d_hat) = self.smooth(&mut history, raw);
        let (tracker, tracks) = self
            .tracker
            .step(&state.tracker, measurements, lambda_hat, p_d_hat)
            .map_err(|e| e.at_frame(frame))?;
        Ok((
            BootstrapState {
                tracker,
                estimator,
                history,
            },
            FrameEstimate {
                frame,
                tracks,
                lambda_hat,
                p_d_hat,
            },
        ))
    }

    pub fn run_sequence(&self, frames: &[DetectionFrame]) -> std::result::Result<Vec<FrameEstimate>, SequenceError> {
        let mut state = self.initial_state();
        let mut out = Vec::with_capacity(frames.len());
        for f in frames {
            match self.step(&state, &f.measurements) {
                Ok((next, estimate)) => {
                    state = next;
                    out.push(estimate);
                }
                Err(source) => {
                    return Err(SequenceError {
                        partial: out,
                        source,
                    })
                }
            }
        }
        Ok(out)
    }
}

/// The tracker alone, fed by `rates(frame)`.
pub fn run_tracker(
    tracker: &CphdFilter,
    frames: &[DetectionFrame],
    rates: impl Fn(usize) -> (f64, f64),
) -> std::result::Result<Vec<FrameEstimate>, SequenceError> {
    let mut state = tracker.initial_state();
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        let frame = state.frame + 1;
        let (lambda, p_d) = rates(frame);
        match tracker.step(&state, &f.measurements, lambda, p_d).map_err(|e| e.at_frame(frame)) {
            Ok((next, tracks)) => {
                state = next;
                out.push(FrameEstimate {
                    frame,
                    tracks,
                    lambda_hat: lambda,
                    p_d_hat: p_d,
                });
            }
            Err(source) => return Err(SequenceError { partial: out, source }),
        }
    }
    Ok(out)
}

/// The rate estimator alone, with tracks taken from its own target mixture.
pub fn run_estimator(
    estimator: &LambdaCphdFilter,
    frames: &[DetectionFrame],
) -> std::result::Result<Vec<FrameEstimate>, SequenceError> {
    let mut state = estimator.initial_state();
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        let frame = state.frame + 1;
        match estimator.step(&state, &f.measurements).map_err(|e| e.at_frame(frame)) {
            Ok((mut next, (lambda_hat, p_d_hat))) => {
                let tracks = estimator.extract_targets(&mut next);
                out.push(FrameEstimate {
                    frame: next.frame,
                    tracks,
                    lambda_hat,
                    p_d_hat,
                });
                state = next;
            }
            Err(source) => return Err(SequenceError { partial: out, source }),
        }
    }
    Ok(out)
}
