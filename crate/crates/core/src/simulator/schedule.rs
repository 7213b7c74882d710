//! Time-varying scalar schedules for the clutter rate and detection probability.

use serde::{Deserialize, Serialize};

/// A per-frame parameter curve over frames `1..=frames`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    Constant { value: f64 },
    /// `before` up to frame `at - 1`, `after` from frame `at` on.
    Step { before: f64, after: f64, at: usize },
    /// Linear from `start` at frame 1 to `end` at the last frame.
    LinearRamp { start: f64, end: f64 },
    /// Linear interpolation between `(frame, value)` knots, held constant
    /// outside the first and last knot.
    Piecewise { knots: Vec<(usize, f64)> },
}

impl Schedule {
    pub fn value(&self, frame: usize, frames: usize) -> f64 {
        match self {
            Schedule::Constant { value } => *value,
            Schedule::Step { before, after, at } => {
                if frame < *at {
                    *before
                } else {
                    *after
                }
            }
            Schedule::LinearRamp { start, end } => {
                if frames <= 1 {
                    *start
                } else {
                    let u = (frame.clamp(1, frames) - 1) as f64 / (frames - 1) as f64;
                    start + (end - start) * u
                }
            }
            Schedule::Piecewise { knots } => {
                let Some(&(first_k, first_v)) = knots.first() else {
                    return 0.0;
                };
                if frame <= first_k {
                    return first_v;
                }
                for pair in knots.windows(2) {
                    let ((k0, v0), (k1, v1)) = (pair[0], pair[1]);
                    if frame <= k1 {
                        if k1 == k0 {
                            return v1;
                        }
                        return v0 + (v1 - v0) * (frame - k0) as f64 / (k1 - k0) as f64;
                    }
                }
                knots.last().map_or(first_v, |&(_, v)| v)
            }
        }
    }

    pub fn values(&self, frames: usize) -> Vec<f64> {
        (1..=frames).map(|k| self.value(k, frames)).collect()
    }

    /// Mean of the schedule over frames `1..=frames`.
    pub fn time_average(&self, frames: usize) -> f64 {
        if frames == 0 {
            return 0.0;
        }
        self.values(frames).iter().sum::<f64>() / frames as f64
    }

    pub(crate) fn check(&self, name: &str, frames: usize, lo: f64, hi: f64, out: &mut Vec<String>) {
        if let Schedule::Piecewise { knots } = self {
            if knots.is_empty() {
                out.push(format!("{name} schedule has no knots"));
                return;
            }
            if knots.windows(2).any(|p| p[1].0 < p[0].0) {
                out.push(format!("{name} schedule knots are not sorted by frame"));
            }
        }
        if let Some((k, v)) = self
            .values(frames)
            .into_iter()
            .enumerate()
            .find(|(_, v)| !(*v >= lo && *v <= hi))
        {
            out.push(format!("{name} schedule value {v} at frame {} outside [{lo}, {hi}]", k + 1));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints_and_average() {
        let s = Schedule::LinearRamp { start: 40.0, end: 184.0 };
        assert_eq!(s.value(1, 60), 40.0);
        assert_eq!(s.value(60, 60), 184.0);
        assert!((s.time_average(60) - 112.0).abs() < 1e-9);
    }

    #[test]
    fn step_switches_at_frame() {
        let s = Schedule::Step { before: 20.0, after: 80.0, at: 30 };
        assert_eq!(s.value(29, 60), 20.0);
        assert_eq!(s.value(30, 60), 80.0);
    }

    #[test]
    fn piecewise_interpolates_and_holds() {
        let s = Schedule::Piecewise { knots: vec![(10, 1.0), (20, 3.0)] };
        assert_eq!(s.value(1, 60), 1.0);
        assert_eq!(s.value(15, 60), 2.0);
        assert_eq!(s.value(50, 60), 3.0);
    }

    #[test]
    fn schedules_round_trip_through_json() {
        let s = Schedule::Step { before: 1.0, after: 2.0, at: 3 };
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"kind\":\"step\""));
        assert_eq!(serde_json::from_str::<Schedule>(&text).unwrap(), s);
    }
}
