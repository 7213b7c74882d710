//! Named scenarios.

use super::{ScenarioConfig, Schedule};

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 5] = ["high-clutter", "low-clutter", "step-clutter", "ramp-clutter", "moderate-clutter"];

/// A named scenario on the default 230×230 region over 60 frames with about
/// 20 concurrent targets.
pub fn preset(name: &str) -> Option<ScenarioConfig> {
    let base = ScenarioConfig::default();
    let (lambda, p_d) = match name {
        // Rising clutter (mean 112) with slowly degrading detection (mean 0.88).
        "high-clutter" => (
            Schedule::LinearRamp { start: 40.0, end: 184.0 },
            Schedule::LinearRamp { start: 0.92, end: 0.84 },
        ),
        // Light clutter (mean 11), detection declining from 0.9 to 0.5 (mean 0.7).
        "low-clutter" => (
            Schedule::LinearRamp { start: 6.0, end: 16.0 },
            Schedule::LinearRamp { start: 0.9, end: 0.5 },
        ),
        "step-clutter" => (
            Schedule::Step { before: 20.0, after: 80.0, at: 30 },
            Schedule::Constant { value: 0.9 },
        ),
        "ramp-clutter" => (
            Schedule::LinearRamp { start: 10.0, end: 100.0 },
            Schedule::Constant { value: 0.88 },
        ),
        "moderate-clutter" => (Schedule::Constant { value: 60.0 }, Schedule::Constant { value: 0.9 }),
        _ => return None,
    };
    Some(ScenarioConfig {
        lambda_schedule: lambda,
        p_d_schedule: p_d,
        ..base
    })
}

/// Every preset with its name.
pub fn preset_scenarios() -> Vec<(&'static str, ScenarioConfig)> {
    PRESET_NAMES
        .iter()
        .map(|&n| (n, preset(n).expect("known preset")))
        .collect()
}
