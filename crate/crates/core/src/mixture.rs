//! Gaussian-mixture reduction: prune, merge, cap, rescale.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::numerics::{symmetrize, GaussianDensity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReductionParams {
    /// Components lighter than this are dropped.
    pub prune_threshold: f64,
    /// Squared Mahalanobis distance under which same-model components merge.
    pub merge_threshold: f64,
    /// Cap on the number of components per motion model.
    pub max_components: usize,
}

impl Default for ReductionParams {
    fn default() -> Self {
        ReductionParams {
            prune_threshold: 1e-5,
            merge_threshold: 4.0,
            max_components: 100,
        }
    }
}

/// A weighted mixture term that carries a Gaussian kinematic part.
pub(crate) trait MixtureTerm: Clone {
    fn weight(&self) -> f64;
    fn set_weight(&mut self, w: f64);
    /// Only terms in the same group are merged.
    fn group(&self) -> usize;
    fn gaussian(&self) -> &GaussianDensity;
    /// Moment-matched merge; `cluster[0]` is the heaviest term.
    fn merge(cluster: &[&Self]) -> Self;
}

/// Weighted moment match of Gaussians.
pub(crate) fn merge_gaussians<'a>(
    parts: impl Iterator<Item = (f64, &'a GaussianDensity)> + Clone,
) -> (f64, GaussianDensity) {
    let total: f64 = parts.clone().map(|(w, _)| w).sum();
    let dim = parts.clone().next().map_or(0, |(_, g)| g.dim());
    let mut mean = DVector::zeros(dim);
    for (w, g) in parts.clone() {
        mean += g.mean() * (w / total);
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (w, g) in parts {
        let d = g.mean() - &mean;
        cov += (g.cov() + &d * d.transpose()) * (w / total);
    }
    (total, GaussianDensity::from_parts(mean, symmetrize(&cov)))
}

pub(crate) fn squared_mahalanobis(chol: &Cholesky<f64, nalgebra::Dyn>, d: &DVector<f64>) -> f64 {
    chol.l()
        .solve_lower_triangular(d)
        .map_or(f64::INFINITY, |w| w.norm_squared())
}

pub(crate) fn reduce_mixture<T: MixtureTerm>(items: Vec<T>, params: &ReductionParams) -> Vec<T> {
    let before: f64 = items.iter().map(MixtureTerm::weight).sum();
    let mut kept: Vec<T> = items
        .into_iter()
        .filter(|c| c.weight() >= params.prune_threshold && c.weight() > 0.0)
        .collect();
    // Heaviest first; ties keep creation order.
    kept.sort_by(|a, b| b.weight().total_cmp(&a.weight()));

    let groups = kept.iter().map(MixtureTerm::group).max().map_or(0, |g| g + 1);
    let mut out = Vec::new();
    for group in 0..groups {
        let members: Vec<&T> = kept.iter().filter(|c| c.group() == group).collect();
        let mut used = vec![false; members.len()];
        let mut merged = Vec::new();
        for head in 0..members.len() {
            if used[head] {
                continue;
            }
            used[head] = true;
            let mut cluster = vec![members[head]];
            let head_g = members[head].gaussian();
            if let Some(chol) = Cholesky::new(head_g.cov().clone()) {
                for other in head + 1..members.len() {
                    if used[other] {
                        continue;
                    }
                    let d = members[other].gaussian().mean() - head_g.mean();
                    if squared_mahalanobis(&chol, &d) <= params.merge_threshold {
                        used[other] = true;
                        cluster.push(members[other]);
                    }
                }
            }
            merged.push(if cluster.len() == 1 {
                cluster[0].clone()
            } else {
                T::merge(&cluster)
            });
        }
        merged.sort_by(|a, b| b.weight().total_cmp(&a.weight()));
        merged.truncate(params.max_components);
        out.extend(merged);
    }

    let after: f64 = out.iter().map(MixtureTerm::weight).sum();
    if after > 0.0 {
        let scale = before / after;
        for c in out.iter_mut() {
            c.set_weight(c.weight() * scale);
        }
    }
    out
}
