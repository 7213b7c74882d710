//! Run configuration: a single JSON document shared by every subcommand.

use std::path::Path;

use rfs_track_core::bootstrap::BootstrapConfig;
use rfs_track_core::models::{BirthModel, ClutterModel, ModelBundle, SurvivalDetectionParams};
use rfs_track_core::simulator::{preset, ScenarioConfig, PRESET_NAMES};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Rate estimator feeding the multiple-model tracker.
    Bootstrap,
    /// Multiple-model tracker with fixed rates.
    MmCphd,
    /// Rate estimator alone, tracks from its own target mixture.
    MmLambdaCphd,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Bootstrap, Variant::MmCphd, Variant::MmLambdaCphd];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bootstrap => "bootstrap",
            Variant::MmCphd => "mm-cphd",
            Variant::MmLambdaCphd => "mm-lambda-cphd",
        }
    }
}

/// A preset name or a full scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSpec {
    Preset(String),
    Inline(Box<ScenarioConfig>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedRates {
    pub lambda: f64,
    pub p_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    pub c: f64,
    pub p: f64,
    /// Label penalty; the cut-off when absent.
    pub ell: Option<f64>,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams { c: 10.0, p: 1.0, ell: None }
    }
}

impl MetricParams {
    pub fn ell(&self) -> f64 {
        self.ell.unwrap_or(self.c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: Option<ScenarioSpec>,
    /// Scenario seed, and base seed of experiment replicates.
    pub seed: Option<u64>,
    pub variant: Variant,
    /// Variants compared by `experiment`.
    pub variants: Vec<Variant>,
    /// Rates for the fixed-rate tracker.
    pub fixed_rates: Option<FixedRates>,
    pub filter: BootstrapConfig,
    /// Filter models; derived from the scenario when absent.
    pub models: Option<ModelBundle>,
    pub metrics: MetricParams,
    pub runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            scenario: None,
            seed: None,
            variant: Variant::Bootstrap,
            variants: Variant::ALL.to_vec(),
            fixed_rates: None,
            filter: BootstrapConfig::default(),
            models: None,
            metrics: MetricParams::default(),
            runs: 1,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub variant: Option<Variant>,
    pub c: Option<f64>,
    pub p: Option<f64>,
    pub ell: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if let Some(r) = o.runs {
            self.runs = r;
        }
        if let Some(v) = o.variant {
            self.variant = v;
        }
        if let Some(c) = o.c {
            self.metrics.c = c;
        }
        if let Some(p) = o.p {
            self.metrics.p = p;
        }
        if o.ell.is_some() {
            self.metrics.ell = o.ell;
        }
    }

    /// Every problem with the configuration, reported together.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut bad = Vec::new();
        if self.runs == 0 {
            bad.push("runs must be at least 1".to_string());
        }
        let m = &self.metrics;
        if !(m.c > 0.0 && m.c.is_finite()) {
            bad.push(format!("metric cut-off c = {} must be positive", m.c));
        }
        if !(m.p >= 1.0 && m.p.is_finite()) {
            bad.push(format!("metric order p = {} must be at least 1", m.p));
        }
        if !(0.0..=m.c).contains(&m.ell()) {
            bad.push(format!("label penalty ell = {} outside [0, c]", m.ell()));
        }
        if let Some(r) = &self.fixed_rates {
            if !(r.lambda >= 0.0 && r.lambda.is_finite()) || !(0.0..=1.0).contains(&r.p_d) {
                bad.push(format!("fixed rates ({}, {}) out of range", r.lambda, r.p_d));
            }
        }
        if let Err(errs) = self.filter.validate() {
            bad.extend(errs);
        }
        if let Some(ScenarioSpec::Preset(name)) = &self.scenario {
            if preset(name).is_none() {
                bad.push(format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", ")));
            }
        }
        if let Some(ScenarioSpec::Inline(s)) = &self.scenario {
            if let Err(errs) = s.validate() {
                bad.extend(errs);
            }
        }
        if let Some(b) = &self.models {
            if let Err(errs) = b.validate() {
                bad.extend(errs);
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(bad.join("; ")))
        }
    }

    /// Scenario with the configured seed applied.
    pub fn scenario(&self) -> Result<ScenarioConfig, CliError> {
        let mut s = match &self.scenario {
            Some(ScenarioSpec::Preset(name)) => {
                preset(name).ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))?
            }
            Some(ScenarioSpec::Inline(s)) => (**s).clone(),
            None => return Err(CliError::Config("config has no scenario".into())),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        Ok(s)
    }

    /// Explicit filter models, or ones matching the scenario's generating
    /// models with a diffuse birth intensity.
    pub fn filter_models(&self) -> Result<ModelBundle, CliError> {
        if let Some(b) = &self.models {
            return Ok(b.clone());
        }
        let s = match &self.scenario {
            Some(_) => self.scenario()?,
            None => ScenarioConfig::default(),
        };
        let n_max = self.filter.tracker.n_max;
        let birth = BirthModel::diffuse(&s.region, s.birth_rate, 1.0, n_max).map_err(|e| CliError::Config(e.to_string()))?;
        let bundle = ModelBundle {
            motion: s.motion.clone(),
            measurement: s.measurement.clone(),
            birth,
            clutter: ClutterModel {
                region: s.region,
                lambda: s.lambda_schedule.time_average(s.frames),
            },
            rates: SurvivalDetectionParams {
                p_s: s.p_s,
                p_d: s.p_d_schedule.time_average(s.frames),
            },
        };
        bundle
            .validated()
            .map_err(|e| CliError::Config(format!("filter models derived from the scenario are invalid: {e}")))
    }

    pub fn fixed_rates(&self) -> Result<FixedRates, CliError> {
        self.fixed_rates
            .ok_or_else(|| CliError::Config("variant mm-cphd needs fixed_rates {lambda, p_d} in the config".into()))
    }

    /// SHA-256 of the canonical JSON form (object keys sorted), so the hash
    /// does not depend on field order in the file.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
