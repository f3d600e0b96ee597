//! Monte Carlo and variational inference with exact desk-scale oracles:
//! importance sampling, Gibbs and mean-field VI on Ising grids, I/M
//! projections onto Gaussians, REINFORCE and reparametrization gradient
//! estimators, and Robbins-Monro SGD schedules.

mod gradients;
mod ising;
mod projections;
mod sgd;

pub use gradients::{
    compare_gradient_variance, reinforce_exact_gradient, reinforce_gradient,
    reparam_exact_gradient, reparam_gradient, EstimatorComparison,
};
pub use ising::{
    gibbs_ising, ising_exact, kl_posterior_vs_factorized, mean_field_free_energy, mfvi_ising,
    mfvi_site_update, sample_instance, IsingExact, IsingInstance, MeanFieldState,
    ISING_EXACT_SITE_CAP,
};
pub use projections::{
    i_projection_gaussian, kl_gaussian_to_mixture, kl_mixture_to_gaussian, m_projection_gaussian,
    GaussianMixture1d, GaussianQ, IProjectionConfig,
};
pub use sgd::{sgd, Schedule, SgdConfig};

use nalgebra::DMatrix;
use rand::Rng;

use crate::divergences::FinitePmf;
use crate::latent_em::sample_pmf;
use crate::{Error, Result};

/// Importance-sampling estimate of the evidence p(x) = sum_z p(z) p(x|z):
/// draw M samples from the proposal and average p(z) p(x|z) / q(z).
///
/// `likelihood` holds p(x | z) with one row per latent value. Taking the
/// proposal equal to the prior recovers plain Monte Carlo (unit weights on
/// the likelihood average); a proposal proportional to p(z) p(x|z) makes
/// every draw equal to the exact evidence.
pub fn importance_marginal<R: Rng>(
    prior: &FinitePmf,
    likelihood: &DMatrix<f64>,
    proposal: &FinitePmf,
    x: usize,
    m_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if likelihood.nrows() != prior.len() {
        return Err(Error::Config(
            "likelihood table needs one row per latent value".into(),
        ));
    }
    if x >= likelihood.ncols() {
        return Err(Error::Config(format!(
            "observation index {x} outside the table"
        )));
    }
    if proposal.len() != prior.len() {
        return Err(Error::Config("proposal alphabet mismatch".into()));
    }
    if likelihood.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain(
            "likelihood entries must be nonnegative".into(),
        ));
    }
    for z in 0..prior.len() {
        if prior.get(z) > 0.0 && proposal.get(z) == 0.0 {
            return Err(Error::Domain(format!(
                "proposal support misses latent value {z} carried by the prior"
            )));
        }
    }
    if m_samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let mut acc = 0.0;
    for _ in 0..m_samples {
        let z = sample_pmf(proposal, rng);
        acc += prior.get(z) * likelihood[(z, x)] / proposal.get(z);
    }
    Ok(acc / m_samples as f64)
}
