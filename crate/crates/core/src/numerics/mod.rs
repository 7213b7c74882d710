//! Numerical kernels shared by the filters, the simulator and the metrics.

mod assignment;
mod beta;
mod combinatorics;
mod esf;
mod gaussian;

pub use assignment::{assign_min_cost, Assignment};
pub use beta::{beta_mean, BetaDensity, MIN_SHAPE};
pub use combinatorics::{
    log_binomial, log_permutation, log_sum_exp, xlogy, LnFactorials, LogWeight,
};
pub use esf::{esf, log_esf};
pub use gaussian::{gaussian_predict, gaussian_update, symmetrize, GaussianDensity, UpdateFactors};
pub(crate) use gaussian::is_symmetric as gaussian_is_symmetric;
