//! Track extraction from tagged mixture components.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DVector};

use crate::mixture::{squared_mahalanobis, MixtureTerm};

use super::{CphdState, GaussianComponent, Tag};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEstimate {
    pub tag: Tag,
    /// `[x, y, vx, vy]`
    pub state: DVector<f64>,
    pub model: usize,
    pub weight: f64,
}

/// A mixture term carrying a track tag.
pub(crate) trait Tagged: MixtureTerm {
    fn tag(&self) -> Tag;
    fn set_tag(&mut self, tag: Tag);
}

impl Tagged for GaussianComponent {
    fn tag(&self) -> Tag {
        self.tag
    }

    fn set_tag(&mut self, tag: Tag) {
        self.tag = tag;
    }
}

/// Emits the `count` heaviest components as tracks.
///
/// A component sharing its tag with an already emitted one is skipped when it
/// lies within `same_target_threshold` (squared Mahalanobis distance) of it, and
/// relabelled with a fresh tag otherwise, so emitted tags are unique.
pub(crate) fn extract_tagged<T: Tagged>(
    items: &mut [T],
    count: usize,
    same_target_threshold: f64,
    mut fresh_tag: impl FnMut() -> Tag,
) -> Vec<TrackEstimate> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].weight().total_cmp(&items[a].weight()));

    let mut emitted: Vec<TrackEstimate> = Vec::with_capacity(count);
    let mut by_tag: BTreeMap<Tag, Vec<usize>> = BTreeMap::new();
    for idx in order {
        if emitted.len() == count {
            break;
        }
        let c = &items[idx];
        if let Some(prior) = by_tag.get(&c.tag()) {
            let duplicate = prior.iter().any(|&p| {
                let other = items[p].gaussian();
                Cholesky::new(other.cov().clone()).is_some_and(|chol| {
                    let d = c.gaussian().mean() - other.mean();
                    squared_mahalanobis(&chol, &d) <= same_target_threshold
                })
            });
            if duplicate {
                continue;
            }
            items[idx].set_tag(fresh_tag());
        }
        let c = &items[idx];
        by_tag.entry(c.tag()).or_default().push(idx);
        emitted.push(TrackEstimate {
            tag: c.tag(),
            state: c.gaussian().mean().clone(),
            model: c.group(),
            weight: c.weight(),
        });
    }
    emitted
}

/// Emits as many tracks as the mode of the cardinality distribution, heaviest
/// components first, with unique tags. Relabelled components keep their new
/// tag in `state`.
pub fn extract(state: &mut CphdState, same_target_threshold: f64) -> Vec<TrackEstimate> {
    let n_hat = state.cardinality.mode();
    let mut next = state.next_tag;
    let tracks = extract_tagged(&mut state.components, n_hat, same_target_threshold, || {
        next += 1;
        next - 1
    });
    state.next_tag = next;
    if tracks.len() < n_hat {
        log::warn!(
            "frame {}: cardinality mode {n_hat} but only {} distinct components",
            state.frame,
            tracks.len()
        );
    }
    tracks
}
