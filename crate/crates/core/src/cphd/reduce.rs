//! Pruning, merging and capping of the tracker's Gaussian mixture.

use crate::mixture::{merge_gaussians, reduce_mixture, MixtureTerm, ReductionParams};
use crate::numerics::GaussianDensity;

use super::GaussianComponent;

impl MixtureTerm for GaussianComponent {
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
        GaussianComponent {
            weight,
            density,
            model: cluster[0].model,
            tag: cluster[0].tag,
        }
    }
}

/// Prunes light components, merges close same-model components (keeping the
/// heaviest one's tag), caps the count per model and rescales the survivors to
/// the pre-reduction total weight.
pub fn reduce(components: Vec<GaussianComponent>, params: &ReductionParams) -> Vec<GaussianComponent> {
    reduce_mixture(components, params)
}
