//! Latent-variable learning and approximate inference at desk scale.
//!
//! Every fitter and estimator in this crate is paired with an exact oracle
//! (enumeration, closed form, or quadrature) that is feasible on small
//! problems, so the stochastic machinery can be checked end to end:
//!
//! * [`expfam`] — exponential-family core: natural/mean maps, log-partition,
//!   moment-matching ML, Bregman-form KL.
//! * [`divergences`] — entropies, KL, Jensen-Shannon, α- and f-divergences
//!   in closed and variational forms over finite alphabets.
//! * [`clustering`] — K-means alternating minimization.
//! * [`latent_em`] — ELBO machinery and EM for Gaussian/Bernoulli mixtures
//!   and PPCA, with exact posteriors for enumerable latents.
//! * [`autoencoders`] — PCA closed form and ℓ1 dictionary learning.
//! * [`rbm`] — binary restricted Boltzmann machine with CD-k training and an
//!   exact enumeration oracle.
//! * [`approx_inference`] — importance sampling, Gibbs and mean-field VI on
//!   Ising grids, I/M-projections, REINFORCE and reparametrization gradient
//!   estimators, SGD schedules.
//! * [`pagerank`] — fixed-point solver for the unnormalized rank equation.
//!
//! Data-parallel inner loops (per-example E steps, per-sample sparse coding,
//! independent chains) run on rayon when the default `parallel` feature is
//! enabled and fall back to sequential iteration without it; both paths
//! produce bit-identical results because reductions keep a fixed order.
//!
//! # Example
//!
//! The evidence lower bound against its exact oracle on an enumerable
//! two-component model:
//!
//! ```
//! use lvlearn::divergences::FinitePmf;
//! use lvlearn::expfam::{ExpFamModel, NaturalParams, Observation};
//! use lvlearn::latent_em::{elbo, exact_posterior, DiscreteLatentJoint, ElboForm};
//!
//! // z ~ Bern(0.5), x|z=0 ~ N(2,1), x|z=1 ~ N(0,1)
//! let joint = DiscreteLatentJoint::new(
//!     FinitePmf::new(vec![0.5, 0.5])?,
//!     ExpFamModel::Gaussian(1),
//!     vec![
//!         NaturalParams::gaussian1(2.0, 1.0)?,
//!         NaturalParams::gaussian1(0.0, 1.0)?,
//!     ],
//! )?;
//! let x = Observation::Scalar(0.0);
//!
//! // any variational q lower-bounds the marginal log-likelihood ...
//! let q = FinitePmf::new(vec![0.6, 0.4])?;
//! let bound = elbo(&joint, &q, &x, ElboForm::EnergyEntropy)?.expect_finite();
//! let ll = joint.log_marginal(&x)?;
//! assert!(bound <= ll);
//!
//! // ... and the exact posterior makes the bound tight
//! let post = exact_posterior(&joint, &x)?;
//! let tight = elbo(&joint, &post, &x, ElboForm::EnergyEntropy)?.expect_finite();
//! assert!((tight - ll).abs() < 1e-12);
//! # Ok::<(), lvlearn::Error>(())
//! ```

// index loops here usually walk several arrays in lockstep
#![allow(clippy::needless_range_loop)]

pub mod approx_inference;
pub mod autoencoders;
pub mod clustering;
pub mod divergences;
pub mod error;
pub mod expfam;
pub mod latent_em;
pub mod num;
pub mod pagerank;
pub mod parallel;
pub mod rbm;
pub mod trace;

pub use error::Error;
pub use trace::Trace;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
