//! OSPA and OSPA-T distances between point sets and labelled track sets.
//!
//! The base distance between two points is Euclidean; the OSPA order `p`
//! applies to the aggregation. The distance between two empty sets is 0.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Point;
use crate::numerics::assign_min_cost;

pub type Label = u64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OspaResult {
    pub total: f64,
    pub location: f64,
    pub cardinality: f64,
}

/// Per-frame labelled positions; frame `i` of two sets being compared must
/// refer to the same time step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledTrackSet {
    frames: Vec<Vec<(Label, Point)>>,
}

impl LabeledTrackSet {
    pub fn new(frames: Vec<Vec<(Label, Point)>>) -> Result<Self> {
        for (i, f) in frames.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for (l, p) in f {
                if !seen.insert(*l) {
                    return Err(Error::Domain(format!("label {l} repeated in frame index {i}")));
                }
                if !(p.x.is_finite() && p.y.is_finite()) {
                    return Err(Error::Domain(format!("non-finite position for label {l} in frame index {i}")));
                }
            }
        }
        Ok(LabeledTrackSet { frames })
    }

    pub fn frames(&self) -> &[Vec<(Label, Point)>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Label → (frame index → position).
    fn tracks(&self) -> BTreeMap<Label, BTreeMap<usize, Point>> {
        let mut out: BTreeMap<Label, BTreeMap<usize, Point>> = BTreeMap::new();
        for (k, f) in self.frames.iter().enumerate() {
            for (l, p) in f {
                out.entry(*l).or_default().insert(k, *p);
            }
        }
        out
    }
}

fn check_params(c: f64, p: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("cut-off c = {c} must be positive")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("order p = {p} must be at least 1")));
    }
    Ok(())
}

/// OSPA between sets of sizes `nx` and `ny` with cut-off base distance `dist`.
fn ospa_with(nx: usize, ny: usize, dist: impl Fn(usize, usize) -> f64, c: f64, p: f64) -> Result<OspaResult> {
    let (m, n) = (nx.min(ny), nx.max(ny));
    if n == 0 {
        return Ok(OspaResult::default());
    }
    // Rows index the smaller set.
    let swap = nx > ny;
    let cost = DMatrix::from_fn(m, n, |i, j| {
        let d = if swap { dist(j, i) } else { dist(i, j) };
        d.min(c).powf(p)
    });
    let assigned = if m == 0 { 0.0 } else { assign_min_cost(&cost)?.total };
    let card = c.powf(p) * (n - m) as f64;
    let nf = n as f64;
    Ok(OspaResult {
        total: ((assigned + card) / nf).powf(1.0 / p),
        location: (assigned / nf).powf(1.0 / p),
        cardinality: (card / nf).powf(1.0 / p),
    })
}

/// OSPA between two point sets; exactly symmetric in its arguments.
pub fn ospa(x: &[Point], y: &[Point], c: f64, p: f64) -> Result<OspaResult> {
    check_params(c, p)?;
    // Canonical order so that swapping the arguments repeats the same arithmetic.
    let sorted = |v: &[Point]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        v
    };
    let (mut a, mut b) = (sorted(x), sorted(y));
    let key = |v: &[Point]| v.iter().flat_map(|p| [p.x, p.y]).collect::<Vec<f64>>();
    if (a.len(), key(&a)).partial_cmp(&(b.len(), key(&b))) == Some(std::cmp::Ordering::Greater) {
        std::mem::swap(&mut a, &mut b);
    }
    ospa_with(a.len(), b.len(), |i, j| (a[i] - b[j]).norm(), c, p)
}

/// One-to-one pairing of ground-truth and estimated labels.
///
/// The cost of pairing two tracks sums, over every frame where at least one
/// of them exists, `min(c, ‖x − y‖)` when both exist and `c` otherwise. Pairs
/// that never come within `c` of each other cost as much as leaving both
/// unpaired and are dropped.
pub fn global_label_correspondence(gt: &LabeledTrackSet, est: &LabeledTrackSet, c: f64) -> Result<Vec<(Label, Label)>> {
    check_params(c, 1.0)?;
    let gt_tracks: Vec<(Label, BTreeMap<usize, Point>)> = gt.tracks().into_iter().collect();
    let est_tracks: Vec<(Label, BTreeMap<usize, Point>)> = est.tracks().into_iter().collect();
    if gt_tracks.is_empty() || est_tracks.is_empty() {
        return Ok(Vec::new());
    }
    let pair_cost = |a: &BTreeMap<usize, Point>, b: &BTreeMap<usize, Point>| -> (f64, f64) {
        let mut cost = 0.0;
        let mut union = 0usize;
        for k in a.keys().chain(b.keys().filter(|k| !a.contains_key(k))) {
            union += 1;
            cost += match (a.get(k), b.get(k)) {
                (Some(x), Some(y)) => (x - y).norm().min(c),
                _ => c,
            };
        }
        (cost, c * union as f64)
    };
    let mut costs = DMatrix::zeros(gt_tracks.len(), est_tracks.len());
    let mut useless = DMatrix::from_element(gt_tracks.len(), est_tracks.len(), false);
    for (i, (_, a)) in gt_tracks.iter().enumerate() {
        for (j, (_, b)) in est_tracks.iter().enumerate() {
            let (cost, ceiling) = pair_cost(a, b);
            costs[(i, j)] = cost;
            useless[(i, j)] = cost >= ceiling;
        }
    }
    let assignment = assign_min_cost(&costs)?;
    Ok(assignment
        .pairs
        .iter()
        .filter(|&&(i, j)| !useless[(i, j)])
        .map(|&(i, j)| (gt_tracks[i].0, est_tracks[j].0))
        .collect())
}

/// Per-frame OSPA-T and its frame average.
///
/// Frame distances use `min(c, (‖x − y‖ᵖ + (ℓ·δ)ᵖ)^{1/p})` with `δ = 0` exactly
/// when the two labels are paired by [`global_label_correspondence`].
pub fn ospa_t(
    gt: &LabeledTrackSet,
    est: &LabeledTrackSet,
    c: f64,
    p: f64,
    ell: f64,
) -> Result<(Vec<OspaResult>, OspaResult)> {
    check_params(c, p)?;
    if !(0.0..=c).contains(&ell) {
        return Err(Error::Domain(format!("label penalty {ell} outside [0, {c}]")));
    }
    if gt.len() != est.len() {
        return Err(Error::Domain(format!(
            "ground truth has {} frames, estimates have {}",
            gt.len(),
            est.len()
        )));
    }
    let pairs: BTreeSet<(Label, Label)> = global_label_correspondence(gt, est, c)?.into_iter().collect();
    let per_frame = gt
        .frames()
        .iter()
        .zip(est.frames())
        .map(|(x, y)| {
            ospa_with(
                x.len(),
                y.len(),
                |i, j| {
                    let d = (x[i].1 - y[j].1).norm();
                    if ell == 0.0 || pairs.contains(&(x[i].0, y[j].0)) {
                        d
                    } else {
                        (d.powf(p) + ell.powf(p)).powf(1.0 / p)
                    }
                },
                c,
                p,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let average = if per_frame.is_empty() {
        OspaResult::default()
    } else {
        summarize(&per_frame)?
    };
    Ok((per_frame, average))
}

/// Field-wise arithmetic mean.
pub fn summarize(results: &[OspaResult]) -> Result<OspaResult> {
    if results.is_empty() {
        return Err(Error::Domain("no results to summarize".into()));
    }
    let n = results.len() as f64;
    Ok(OspaResult {
        total: results.iter().map(|r| r.total).sum::<f64>() / n,
        location: results.iter().map(|r| r.location).sum::<f64>() / n,
        cardinality: results.iter().map(|r| r.cardinality).sum::<f64>() / n,
    })
}
