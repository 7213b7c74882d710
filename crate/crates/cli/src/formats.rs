//! CSV files exchanged between subcommands.
//!
//! Frames without any row (no measurements, no live targets, no tracks) are
//! written as a marker row holding only the frame number, so the frame range of
//! a file is explicit.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rfs_track_core::bootstrap::FrameEstimate;
use rfs_track_core::metrics::{LabeledTrackSet, OspaResult};
use rfs_track_core::models::Point;
use rfs_track_core::simulator::{DetectionFrame, GroundTruth, TruthState, TruthTrack};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Labelled positions of one frame.
pub type LabeledFrame = Vec<(u64, Point)>;

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRow {
    frame: usize,
    x: Option<f64>,
    y: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateRow {
    frame: usize,
    label: Option<u64>,
    x: Option<f64>,
    y: Option<f64>,
    vx: Option<f64>,
    vy: Option<f64>,
    model: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    frame: usize,
    tag: Option<u64>,
    x: Option<f64>,
    y: Option<f64>,
    vx: Option<f64>,
    vy: Option<f64>,
    model: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RateRow {
    pub frame: usize,
    pub lambda_hat: f64,
    pub p_d_hat: f64,
    pub lambda_true: Option<f64>,
    pub p_d_true: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MetricRow<'a> {
    frame: &'a str,
    location: f64,
    cardinality: f64,
    total: f64,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn rows<T: for<'de> Deserialize<'de>, R: Read>(path: &Path, r: R) -> Result<Vec<T>, CliError> {
    csv::ReaderBuilder::new()
        .from_reader(r)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| parse_err(path, e))
}

fn write_rows<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>, header: &[&str]) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(std::io::BufWriter::new(file));
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for item in items {
        w.serialize(item).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_detections(path: &Path, frames: &[DetectionFrame]) -> Result<(), CliError> {
    let rows = frames.iter().flat_map(|f| {
        let marker = f.measurements.is_empty().then_some(DetectionRow { frame: f.frame, x: None, y: None });
        marker.into_iter().chain(f.measurements.iter().map(move |z| DetectionRow {
            frame: f.frame,
            x: Some(z.x),
            y: Some(z.y),
        }))
    });
    write_rows(path, rows, &["frame", "x", "y"])
}

/// Frames `1..=last` where `last` is the largest frame in the file.
pub fn read_detections(path: &Path) -> Result<Vec<DetectionFrame>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let rows: Vec<DetectionRow> = rows(path, file)?;
    let last = rows.iter().map(|r| r.frame).max().unwrap_or(0);
    if rows.iter().any(|r| r.frame == 0) {
        return Err(parse_err(path, "frame numbers start at 1"));
    }
    let mut frames: Vec<DetectionFrame> = (1..=last)
        .map(|frame| DetectionFrame {
            frame,
            measurements: Vec::new(),
        })
        .collect();
    for r in rows {
        match (r.x, r.y) {
            (Some(x), Some(y)) => frames[r.frame - 1].measurements.push(Point::new(x, y)),
            (None, None) => {}
            _ => return Err(parse_err(path, format!("frame {} has a half-empty row", r.frame))),
        }
    }
    Ok(frames)
}

pub fn write_truth(path: &Path, truth: &GroundTruth, frames: usize) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for k in 1..=frames {
        let alive = truth.at_frame(k);
        if alive.is_empty() {
            rows.push(StateRow {
                frame: k,
                label: None,
                x: None,
                y: None,
                vx: None,
                vy: None,
                model: None,
            });
        }
        for (label, s) in alive {
            rows.push(StateRow {
                frame: k,
                label: Some(label),
                x: Some(s.state[0]),
                y: Some(s.state[1]),
                vx: Some(s.state[2]),
                vy: Some(s.state[3]),
                model: Some(s.model),
            });
        }
    }
    write_rows(path, rows, &["frame", "label", "x", "y", "vx", "vy", "model"])
}

/// Ground truth and the number of frames it covers.
pub fn read_truth(path: &Path) -> Result<(GroundTruth, usize), CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let rows: Vec<StateRow> = rows(path, file)?;
    let last = rows.iter().map(|r| r.frame).max().unwrap_or(0);
    let mut tracks: BTreeMap<u64, TruthTrack> = BTreeMap::new();
    for r in rows {
        let (Some(label), Some(x), Some(y), Some(vx), Some(vy), Some(model)) = (r.label, r.x, r.y, r.vx, r.vy, r.model) else {
            if r.label.is_some() {
                return Err(parse_err(path, format!("frame {} has an incomplete row", r.frame)));
            }
            continue;
        };
        let t = tracks.entry(label).or_insert_with(|| TruthTrack {
            label,
            birth_frame: r.frame,
            death_frame: r.frame,
            states: Vec::new(),
        });
        if !t.states.is_empty() && r.frame != t.death_frame + 1 {
            return Err(parse_err(path, format!("label {label} skips from frame {} to {}", t.death_frame, r.frame)));
        }
        t.death_frame = r.frame;
        t.states.push(TruthState {
            state: [x, y, vx, vy],
            model,
        });
    }
    let mut tracks: Vec<TruthTrack> = tracks.into_values().collect();
    tracks.sort_by_key(|t| (t.birth_frame, t.label));
    Ok((GroundTruth { tracks }, last))
}

pub fn write_tracks(path: &Path, estimates: &[FrameEstimate]) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for f in estimates {
        if f.tracks.is_empty() {
            rows.push(TrackRow {
                frame: f.frame,
                tag: None,
                x: None,
                y: None,
                vx: None,
                vy: None,
                model: None,
            });
        }
        for t in &f.tracks {
            rows.push(TrackRow {
                frame: f.frame,
                tag: Some(t.tag),
                x: Some(t.state[0]),
                y: Some(t.state[1]),
                vx: Some(t.state[2]),
                vy: Some(t.state[3]),
                model: Some(t.model),
            });
        }
    }
    write_rows(path, rows, &["frame", "tag", "x", "y", "vx", "vy", "model"])
}

/// Per-frame `(tag, position)` sets and the largest frame in the file.
pub fn read_tracks(path: &Path) -> Result<(Vec<LabeledFrame>, usize), CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let rows: Vec<TrackRow> = rows(path, file)?;
    let last = rows.iter().map(|r| r.frame).max().unwrap_or(0);
    let first = rows.iter().map(|r| r.frame).min().unwrap_or(1);
    if first == 0 {
        return Err(parse_err(path, "frame numbers start at 1"));
    }
    let mut frames = vec![Vec::new(); last];
    for r in rows {
        if let (Some(tag), Some(x), Some(y)) = (r.tag, r.x, r.y) {
            frames[r.frame - 1].push((tag, Point::new(x, y)));
        }
    }
    Ok((frames, last))
}

pub fn truth_track_set(truth: &GroundTruth, frames: usize) -> Result<LabeledTrackSet, CliError> {
    LabeledTrackSet::new(
        (1..=frames)
            .map(|k| {
                truth
                    .at_frame(k)
                    .into_iter()
                    .map(|(l, s)| (l, Point::new(s.state[0], s.state[1])))
                    .collect()
            })
            .collect(),
    )
    .map_err(|e| CliError::Config(e.to_string()))
}

pub fn estimate_track_set(estimates: &[FrameEstimate]) -> Result<LabeledTrackSet, CliError> {
    LabeledTrackSet::new(
        estimates
            .iter()
            .map(|f| f.tracks.iter().map(|t| (t.tag, Point::new(t.state[0], t.state[1]))).collect())
            .collect(),
    )
    .map_err(|e| CliError::Filter(e.to_string()))
}

pub fn write_rates(
    path: &Path,
    estimates: &[FrameEstimate],
    truth: Option<(&[f64], &[f64])>,
) -> Result<(), CliError> {
    let rows = estimates.iter().map(|f| {
        let at = |v: &[f64]| v.get(f.frame - 1).copied();
        RateRow {
            frame: f.frame,
            lambda_hat: f.lambda_hat,
            p_d_hat: f.p_d_hat,
            lambda_true: truth.and_then(|t| at(t.0)),
            p_d_true: truth.and_then(|t| at(t.1)),
        }
    });
    write_rows(path, rows, &["frame", "lambda_hat", "p_d_hat", "lambda_true", "p_d_true"])
}

pub fn read_rates(path: &Path) -> Result<Vec<RateRow>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    rows(path, file)
}

/// Per-frame rows followed by a `mean` row.
pub fn write_metrics(path: &Path, per_frame: &[OspaResult], mean: &OspaResult) -> Result<(), CliError> {
    let labels: Vec<String> = (1..=per_frame.len()).map(|k| k.to_string()).collect();
    let rows = per_frame
        .iter()
        .zip(&labels)
        .map(|(r, k)| MetricRow {
            frame: k,
            location: r.location,
            cardinality: r.cardinality,
            total: r.total,
        })
        .chain(std::iter::once(MetricRow {
            frame: "mean",
            location: mean.location,
            cardinality: mean.cardinality,
            total: mean.total,
        }));
    write_rows(path, rows, &["frame", "location", "cardinality", "total"])
}
