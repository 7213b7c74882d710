//! Pruning and merging of the hybrid target and clutter mixtures.

use crate::mixture::{merge_gaussians, reduce_mixture, MixtureTerm, ReductionParams};
use crate::numerics::{BetaDensity, GaussianDensity};

use crate::cphd::{Tag, Tagged};

use super::{BetaGaussianComponent, ClutterComponent, HybridState};

/// Moment match of a weighted Beta mixture, returned as a Beta with the same
/// mean and variance (concentration clamped to keep shapes valid).
fn merge_betas(parts: impl Iterator<Item = (f64, BetaDensity)> + Clone) -> BetaDensity {
    let total: f64 = parts.clone().map(|(w, _)| w).sum();
    let mean: f64 = parts.clone().map(|(w, b)| w * b.mean()).sum::<f64>() / total;
    let var: f64 = parts
        .clone()
        .map(|(w, b)| w * (b.variance() + (b.mean() - mean).powi(2)))
        .sum::<f64>()
        / total;
    let first = parts.clone().next().map(|(_, b)| b);
    // Identical inputs come back unchanged, bit for bit.
    if let Some(b) = first {
        if parts.clone().all(|(_, o)| o == b) {
            return b;
        }
    }
    BetaDensity::from_mean_variance(mean, var).unwrap_or_else(|_| first.expect("non-empty cluster"))
}

impl MixtureTerm for BetaGaussianComponent {
    fn weight(&self) -> f64 {
        self.weight
    }

    fn set_weight(&mut self, w: f64) {
        self.weight = w;
    }

    fn group(&self) -> usize {
        self.model
    }

    fn gaussian(&self) -> &GaussianDensity {
        &self.density
    }

    fn merge(cluster: &[&Self]) -> Self {
        let (weight, density) = merge_gaussians(cluster.iter().map(|c| (c.weight, &c.density)));
        BetaGaussianComponent {
            weight,
            beta: merge_betas(cluster.iter().map(|c| (c.weight, c.beta))),
            density,
            model: cluster[0].model,
            tag: cluster[0].tag,
        }
    }
}

impl Tagged for BetaGaussianComponent {
    fn tag(&self) -> Tag {
        self.tag
    }

    fn set_tag(&mut self, tag: Tag) {
        self.tag = tag;
    }
}

fn reduce_clutter(items: Vec<ClutterComponent>, params: &ReductionParams, cap: usize) -> Vec<ClutterComponent> {
    let before: f64 = items.iter().map(|c| c.weight).sum();
    let mut kept: Vec<ClutterComponent> = items
        .into_iter()
        .filter(|c| c.weight >= params.prune_threshold && c.weight > 0.0)
        .collect();
    kept.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    let mut used = vec![false; kept.len()];
    let mut out = Vec::new();
    for head in 0..kept.len() {
        if used[head] {
            continue;
        }
        used[head] = true;
        let (mu, var) = (kept[head].beta.mean(), kept[head].beta.variance());
        let mut cluster = vec![kept[head]];
        for other in head + 1..kept.len() {
            if !used[other] && (kept[other].beta.mean() - mu).powi(2) / var <= params.merge_threshold {
                used[other] = true;
                cluster.push(kept[other]);
            }
        }
        out.push(ClutterComponent {
            weight: cluster.iter().map(|c| c.weight).sum(),
            beta: merge_betas(cluster.iter().map(|c| (c.weight, c.beta))),
        });
    }
    out.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    out.truncate(cap);
    let after: f64 = out.iter().map(|c| c.weight).sum();
    if after > 0.0 {
        for c in out.iter_mut() {
            c.weight *= before / after;
        }
    }
    out
}

/// Prunes, merges and caps the target and clutter mixtures separately, each
/// rescaled to its own pre-reduction mass. Merged Beta factors are moment
/// matched on mean and variance.
pub fn reduce_hybrid(state: HybridState, params: &ReductionParams, max_clutter_components: usize) -> HybridState {
    HybridState {
        targets: reduce_mixture(state.targets, params),
        clutter: reduce_clutter(state.clutter, params, max_clutter_components),
        ..state
    }
}
