//! ELBO machinery and EM for discrete-latent mixtures and PPCA.
//!
//! The joints here have enumerable latents, so exact posteriors, marginal
//! likelihoods, and every algebraic form of the ELBO can be evaluated
//! directly and used as oracles for the stochastic estimators built on top.

mod mixture;
mod ppca;

pub use mixture::{
    bern_log_likelihood, em_fit, gmm_e_step, gmm_hard_assignments, gmm_log_likelihood, gmm_m_step,
    BernMixParams, EmConfig, EmInit, GmmParams, MixtureKind, MixtureParams,
};
pub use ppca::{ppca_fit, ppca_log_likelihood, ppca_posterior, PpcaConfig, PpcaInit, PpcaParams};

use nalgebra::DMatrix;
use rand::Rng;

use crate::divergences::FinitePmf;
use crate::expfam::{log_prob, ExpFamModel, NaturalParams, Observation};
use crate::num::{log_sum_exp, ExtendedReal};
use crate::{Error, Result};

/// Variational distribution over an enumerable latent.
pub type VariationalPmf = FinitePmf;

/// A directed joint p(x, z) = p(z) p(x | z) with a finite latent alphabet
/// and exponential-family conditionals sharing one family.
#[derive(Debug, Clone)]
pub struct DiscreteLatentJoint {
    pub prior: FinitePmf,
    pub family: ExpFamModel,
    pub components: Vec<NaturalParams>,
}

impl DiscreteLatentJoint {
    pub fn new(
        prior: FinitePmf,
        family: ExpFamModel,
        components: Vec<NaturalParams>,
    ) -> Result<Self> {
        if components.len() != prior.len() {
            return Err(Error::Config(format!(
                "{} components for a prior over {} values",
                components.len(),
                prior.len()
            )));
        }
        Ok(DiscreteLatentJoint {
            prior,
            family,
            components,
        })
    }

    /// ln p(x, z); negative infinity where the prior vanishes.
    pub fn log_joint(&self, z: usize, x: &Observation) -> Result<f64> {
        let pz = self.prior.get(z);
        if pz == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(pz.ln() + log_prob(&self.family, &self.components[z], x)?)
    }

    /// ln p(x) by enumeration over the latent alphabet.
    pub fn log_marginal(&self, x: &Observation) -> Result<f64> {
        let terms: Result<Vec<f64>> = (0..self.prior.len())
            .map(|z| self.log_joint(z, x))
            .collect();
        Ok(log_sum_exp(&terms?))
    }
}

/// Exact posterior q(z) proportional to p(z) p(x|z), by Bayes normalization.
pub fn exact_posterior(joint: &DiscreteLatentJoint, x: &Observation) -> Result<VariationalPmf> {
    let k = joint.prior.len();
    let logs: Result<Vec<f64>> = (0..k).map(|z| joint.log_joint(z, x)).collect();
    let logs = logs?;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric(
            "joint density is zero for every latent value".into(),
        ));
    }
    // normalizing the shifted weights directly keeps symmetric cases exact
    // (equal joints divide to exactly 1/K)
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    FinitePmf::new(weights.iter().map(|w| w / total).collect())
        .map_err(|_| Error::Numeric("posterior normalization failed".into()))
}

/// The five equivalent algebraic forms of the ELBO.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElboForm {
    /// E_q[ln p(x,z) - ln q(z)]
    LearningSignal,
    /// E_q[ln p(x,z)] + H(q)
    EnergyEntropy,
    /// E_q[ln p(x|z)] - KL(q || p(z))
    CrossEntropyKl,
    /// -KL(q || p(x,z)) against the unnormalized joint
    CompactKl,
    /// ln p(x) - KL(q || p(z|x))
    LlMinusKl,
}

/// Evidence lower bound L(q, theta) for the chosen algebraic form.
///
/// All forms agree to floating-point accuracy; the value never exceeds
/// ln p(x) and touches it exactly when q is the posterior. Placing q-mass
/// where the prior vanishes returns the explicit `NegInfinite` flag.
pub fn elbo(
    joint: &DiscreteLatentJoint,
    q: &VariationalPmf,
    x: &Observation,
    form: ElboForm,
) -> Result<ExtendedReal> {
    let k = joint.prior.len();
    if q.len() != k {
        return Err(Error::Config(
            "variational pmf has the wrong alphabet".into(),
        ));
    }
    for z in 0..k {
        if q.get(z) > 0.0 && joint.prior.get(z) == 0.0 {
            return Ok(ExtendedReal::NegInfinite);
        }
    }
    let value = match form {
        ElboForm::LearningSignal => {
            let mut acc = 0.0;
            for z in 0..k {
                let qz = q.get(z);
                if qz > 0.0 {
                    acc += qz * (joint.log_joint(z, x)? - qz.ln());
                }
            }
            acc
        }
        ElboForm::EnergyEntropy => {
            let mut energy = 0.0;
            let mut entropy = 0.0;
            for z in 0..k {
                let qz = q.get(z);
                if qz > 0.0 {
                    energy += qz * joint.log_joint(z, x)?;
                    entropy -= qz * qz.ln();
                }
            }
            energy + entropy
        }
        ElboForm::CrossEntropyKl => {
            let mut ce = 0.0;
            let mut kl = 0.0;
            for z in 0..k {
                let qz = q.get(z);
                if qz > 0.0 {
                    ce += qz * log_prob(&joint.family, &joint.components[z], x)?;
                    kl += qz * (qz / joint.prior.get(z)).ln();
                }
            }
            ce - kl
        }
        ElboForm::CompactKl => {
            let mut kl = 0.0;
            for z in 0..k {
                let qz = q.get(z);
                if qz > 0.0 {
                    kl += qz * (qz.ln() - joint.log_joint(z, x)?);
                }
            }
            -kl
        }
        ElboForm::LlMinusKl => {
            let ll = joint.log_marginal(x)?;
            let posterior = exact_posterior(joint, x)?;
            let mut kl = 0.0;
            for z in 0..k {
                let qz = q.get(z);
                if qz > 0.0 {
                    kl += qz * (qz / posterior.get(z)).ln();
                }
            }
            ll - kl
        }
    };
    Ok(ExtendedReal::Finite(value))
}

/// Monte Carlo multi-sample bound: mean over `m_runs` independent draws of
/// ln( (1/K) sum_k p(x, z_k)/q(z_k) ) with z_k iid from q.
pub fn multi_sample_elbo<R: Rng>(
    joint: &DiscreteLatentJoint,
    q: &VariationalPmf,
    x: &Observation,
    k_samples: usize,
    m_runs: usize,
    rng: &mut R,
) -> Result<f64> {
    if k_samples == 0 || m_runs == 0 {
        return Err(Error::Config("need k_samples >= 1 and m_runs >= 1".into()));
    }
    let mut log_ratios = vec![0.0; k_samples];
    let mut total = 0.0;
    for _ in 0..m_runs {
        for slot in log_ratios.iter_mut() {
            let z = sample_pmf(q, rng);
            *slot = joint.log_joint(z, x)? - q.get(z).ln();
        }
        total += log_sum_exp(&log_ratios) - (k_samples as f64).ln();
    }
    Ok(total / m_runs as f64)
}

/// Inverse-CDF draw from a finite pmf.
pub(crate) fn sample_pmf<R: Rng>(pmf: &FinitePmf, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in pmf.probs().iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pmf.len() - 1
}

/// Variational mutual-information bound for a discriminative encoder.
///
/// `encoder` is row-stochastic over z given x (|X| x |Z|); `decoder` is
/// row-stochastic over x given z (|Z| x |X|). Returns the bound
/// H(p_data) + E[ln q(x|z)] together with the exact mutual information
/// computed by enumeration; the bound is tight when the decoder equals the
/// exact posterior p(x|z).
pub fn infomax_bound(
    p_data: &FinitePmf,
    encoder: &DMatrix<f64>,
    decoder: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let nx = p_data.len();
    let nz = encoder.ncols();
    if encoder.nrows() != nx || decoder.nrows() != nz || decoder.ncols() != nx {
        return Err(Error::Config(
            "encoder/decoder table shapes are inconsistent".into(),
        ));
    }
    for r in 0..nx {
        let s: f64 = encoder.row(r).iter().sum();
        if (s - 1.0).abs() > 1e-9 || encoder.row(r).iter().any(|&v| v < 0.0) {
            return Err(Error::Domain(format!(
                "encoder row {r} is not a pmf (sum {s})"
            )));
        }
    }
    for r in 0..nz {
        let s: f64 = decoder.row(r).iter().sum();
        if (s - 1.0).abs() > 1e-9 || decoder.row(r).iter().any(|&v| v < 0.0) {
            return Err(Error::Domain(format!(
                "decoder row {r} is not a pmf (sum {s})"
            )));
        }
    }

    let mut h_data = 0.0;
    for x in 0..nx {
        let px = p_data.get(x);
        if px > 0.0 {
            h_data -= px * px.ln();
        }
    }

    let mut p_z = vec![0.0; nz];
    for x in 0..nx {
        for z in 0..nz {
            p_z[z] += p_data.get(x) * encoder[(x, z)];
        }
    }

    let mut expected_dec = 0.0;
    let mut mi = 0.0;
    for x in 0..nx {
        let px = p_data.get(x);
        if px == 0.0 {
            continue;
        }
        for z in 0..nz {
            let w = px * encoder[(x, z)];
            if w == 0.0 {
                continue;
            }
            expected_dec += w * decoder[(z, x)].ln();
            mi += w * (encoder[(x, z)] / p_z[z]).ln();
        }
    }
    Ok((h_data + expected_dec, mi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::NaturalParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// z ~ Bern(0.5); x|z=0 ~ N(2,1); x|z=1 ~ N(theta,1).
    fn bern_gauss(theta: f64) -> DiscreteLatentJoint {
        DiscreteLatentJoint::new(
            FinitePmf::new(vec![0.5, 0.5]).unwrap(),
            ExpFamModel::Gaussian(1),
            vec![
                NaturalParams::gaussian1(2.0, 1.0).unwrap(),
                NaturalParams::gaussian1(theta, 1.0).unwrap(),
            ],
        )
        .unwrap()
    }

    fn normal_pdf(x: f64, mean: f64) -> f64 {
        (-0.5 * (x - mean) * (x - mean)).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn posterior_symmetric_components() {
        // both components are N(2,1) at theta = 2, so the posterior is the prior
        let joint = bern_gauss(2.0);
        let q = exact_posterior(&joint, &Observation::Scalar(0.0)).unwrap();
        assert!((q.get(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn posterior_density_ratio() {
        let joint = bern_gauss(0.0);
        let q = exact_posterior(&joint, &Observation::Scalar(0.0)).unwrap();
        let expect = normal_pdf(0.0, 0.0) / (normal_pdf(0.0, 2.0) + normal_pdf(0.0, 0.0));
        assert!((q.get(1) - expect).abs() < 1e-12);
        assert!((q.get(1) - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn posterior_degenerate_prior() {
        let joint = DiscreteLatentJoint::new(
            FinitePmf::new(vec![0.0, 1.0]).unwrap(),
            ExpFamModel::Gaussian(1),
            vec![
                NaturalParams::gaussian1(2.0, 1.0).unwrap(),
                NaturalParams::gaussian1(0.0, 1.0).unwrap(),
            ],
        )
        .unwrap();
        let q = exact_posterior(&joint, &Observation::Scalar(5.0)).unwrap();
        assert_eq!(q.get(1), 1.0);
    }

    #[test]
    fn elbo_forms_agree_and_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let forms = [
            ElboForm::LearningSignal,
            ElboForm::EnergyEntropy,
            ElboForm::CrossEntropyKl,
            ElboForm::CompactKl,
            ElboForm::LlMinusKl,
        ];
        for _ in 0..100 {
            let theta = rng.gen_range(-4.0..4.0);
            let joint = bern_gauss(theta);
            let x = Observation::Scalar(rng.gen_range(-3.0..3.0));
            let phi: f64 = rng.gen_range(0.01..0.99);
            let q = FinitePmf::new(vec![1.0 - phi, phi]).unwrap();
            let values: Vec<f64> = forms
                .iter()
                .map(|f| elbo(&joint, &q, &x, *f).unwrap().expect_finite())
                .collect();
            for v in &values[1..] {
                assert!((v - values[0]).abs() < 1e-12, "forms disagree: {values:?}");
            }
            let ll = joint.log_marginal(&x).unwrap();
            assert!(values[0] <= ll + 1e-12);
        }
    }

    #[test]
    fn elbo_tight_exactly_at_posterior() {
        let joint = bern_gauss(0.0);
        let x = Observation::Scalar(0.0);
        let ll = joint.log_marginal(&x).unwrap();

        let post = exact_posterior(&joint, &x).unwrap();
        let at_post = elbo(&joint, &post, &x, ElboForm::EnergyEntropy)
            .unwrap()
            .expect_finite();
        assert!((at_post - ll).abs() < 1e-12);

        // a point mass off the posterior mode is strictly below
        let point = FinitePmf::new(vec![1.0, 0.0]).unwrap();
        let off = elbo(&joint, &point, &x, ElboForm::EnergyEntropy)
            .unwrap()
            .expect_finite();
        assert!(off < ll - 1e-6);

        // both sides of ln p(x) - KL(q || posterior) computed independently
        let q = FinitePmf::new(vec![0.5, 0.5]).unwrap();
        let lhs = elbo(&joint, &q, &x, ElboForm::EnergyEntropy)
            .unwrap()
            .expect_finite();
        let kl_q_post: f64 = (0..2)
            .map(|z| {
                let qz = q.get(z);
                qz * (qz / post.get(z)).ln()
            })
            .sum();
        assert!((lhs - (ll - kl_q_post)).abs() < 1e-12);
    }

    #[test]
    fn elbo_neg_infinite_flag() {
        let joint = DiscreteLatentJoint::new(
            FinitePmf::new(vec![1.0, 0.0]).unwrap(),
            ExpFamModel::Gaussian(1),
            vec![
                NaturalParams::gaussian1(2.0, 1.0).unwrap(),
                NaturalParams::gaussian1(0.0, 1.0).unwrap(),
            ],
        )
        .unwrap();
        let q = FinitePmf::new(vec![0.5, 0.5]).unwrap();
        let v = elbo(
            &joint,
            &q,
            &Observation::Scalar(0.0),
            ElboForm::EnergyEntropy,
        )
        .unwrap();
        assert_eq!(v, ExtendedReal::NegInfinite);
    }

    #[test]
    fn elbo_gradient_matches_ll_gradient_at_tight_point() {
        // the posterior-expected complete-data gradient equals the marginal
        // LL gradient, checked against central differences
        let x = Observation::Scalar(0.0);
        for theta0 in [-1.5, 0.0, 0.7, 3.0] {
            let post = exact_posterior(&bern_gauss(theta0), &x).unwrap();
            // d/dtheta ln p(x, z=1 | theta) = x - theta
            let grad_em = post.get(1) * (0.0 - theta0);
            let h = 1e-5;
            let up = bern_gauss(theta0 + h).log_marginal(&x).unwrap();
            let dn = bern_gauss(theta0 - h).log_marginal(&x).unwrap();
            let fd = (up - dn) / (2.0 * h);
            assert!(
                (grad_em - fd).abs() < 1e-6,
                "theta {theta0}: {grad_em} vs {fd}"
            );
        }
    }

    #[test]
    fn ll_non_concave_but_elbo_concave_in_theta() {
        let x = Observation::Scalar(0.0);
        let ll = |t: f64| bern_gauss(t).log_marginal(&x).unwrap();
        // midpoint test fails for the pair (2, 6): the LL is not concave
        let (a, b) = (2.0, 6.0);
        assert!(ll(0.5 * (a + b)) < 0.5 * (ll(a) + ll(b)) - 1e-6);

        // at fixed q the ELBO is concave in theta across a grid
        let q = FinitePmf::new(vec![0.7, 0.3]).unwrap();
        let bound = |t: f64| {
            elbo(&bern_gauss(t), &q, &x, ElboForm::EnergyEntropy)
                .unwrap()
                .expect_finite()
        };
        let grid: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.5).collect();
        for &a in &grid {
            for &b in &grid {
                if a < b {
                    assert!(bound(0.5 * (a + b)) >= 0.5 * (bound(a) + bound(b)) - 1e-9);
                }
            }
        }
    }

    #[test]
    fn multi_sample_elbo_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let joint = bern_gauss(0.0);
        let x = Observation::Scalar(0.0);
        let ll = joint.log_marginal(&x).unwrap();
        let q = FinitePmf::new(vec![0.6, 0.4]).unwrap();

        // K = 1 reproduces the plain ELBO up to Monte Carlo error
        let runs = 100_000;
        let mut values = Vec::with_capacity(runs);
        for _ in 0..runs {
            values.push(multi_sample_elbo(&joint, &q, &x, 1, 1, &mut rng).unwrap());
        }
        let mean: f64 = values.iter().sum::<f64>() / runs as f64;
        let var: f64 =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (runs - 1) as f64;
        let se = (var / runs as f64).sqrt();
        let exact = elbo(&joint, &q, &x, ElboForm::EnergyEntropy)
            .unwrap()
            .expect_finite();
        assert!(
            (mean - exact).abs() < 3.0 * se + 1e-9,
            "{mean} vs {exact} (se {se})"
        );
        assert!(mean <= ll + 3.0 * se);

        // q = posterior makes the ratio constant: every draw equals ln p(x)
        let post = exact_posterior(&joint, &x).unwrap();
        for _ in 0..50 {
            let v = multi_sample_elbo(&joint, &post, &x, 7, 1, &mut rng).unwrap();
            assert!((v - ll).abs() < 1e-10);
        }

        // K = 1000 mean is within 0.01 of ln p(x)
        let v = multi_sample_elbo(&joint, &q, &x, 1000, 200, &mut rng).unwrap();
        assert!((v - ll).abs() < 0.01);
    }

    #[test]
    fn multi_sample_elbo_ordering_in_k() {
        // richer sample estimates dominate: mean at K=10 >= mean at K=1
        // within a pooled three-standard-error band
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let joint = bern_gauss(0.0);
        let x = Observation::Scalar(0.0);
        let q = FinitePmf::new(vec![0.6, 0.4]).unwrap();
        let runs = 10_000;
        let collect = |k: usize, rng: &mut ChaCha8Rng| -> (f64, f64) {
            let mut vals = Vec::with_capacity(runs);
            for _ in 0..runs {
                vals.push(multi_sample_elbo(&joint, &q, &x, k, 1, rng).unwrap());
            }
            let mean: f64 = vals.iter().sum::<f64>() / runs as f64;
            let var: f64 =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (runs - 1) as f64;
            (mean, var / runs as f64)
        };
        let (m1, v1) = collect(1, &mut rng);
        let (m10, v10) = collect(10, &mut rng);
        let pooled_se = (v1 + v10).sqrt();
        assert!(
            m10 >= m1 - 3.0 * pooled_se,
            "{m10} vs {m1} (se {pooled_se})"
        );
    }

    #[test]
    fn infomax_bound_cases() {
        // uniform data over 4 symbols, deterministic invertible encoder
        let p = FinitePmf::uniform(4).unwrap();
        let enc = DMatrix::<f64>::identity(4, 4);
        let dec = DMatrix::<f64>::identity(4, 4);
        let (bound, mi) = infomax_bound(&p, &enc, &dec).unwrap();
        assert!((mi - 4f64.ln()).abs() < 1e-12); // MI = H(p_data)
        assert!((bound - mi).abs() < 1e-12); // decoder is the exact posterior

        // uniform decoder: bound = H(p) - ln|X| <= MI
        let dec_u = DMatrix::from_element(4, 4, 0.25);
        let (bound, mi) = infomax_bound(&p, &enc, &dec_u).unwrap();
        assert!((bound - (4f64.ln() - 4f64.ln())).abs() < 1e-12);
        assert!(bound <= mi + 1e-12);

        // a random stochastic encoder with the exact posterior decoder is tight
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut enc = DMatrix::zeros(3, 2);
        for r in 0..3 {
            let a: f64 = rng.gen_range(0.1..0.9);
            enc[(r, 0)] = a;
            enc[(r, 1)] = 1.0 - a;
        }
        let p = FinitePmf::new(vec![0.2, 0.5, 0.3]).unwrap();
        // exact posterior p(x|z)
        let mut pz = [0.0; 2];
        for x in 0..3 {
            for z in 0..2 {
                pz[z] += p.get(x) * enc[(x, z)];
            }
        }
        let mut dec = DMatrix::zeros(2, 3);
        for z in 0..2 {
            for x in 0..3 {
                dec[(z, x)] = p.get(x) * enc[(x, z)] / pz[z];
            }
        }
        let (bound, mi) = infomax_bound(&p, &enc, &dec).unwrap();
        assert!((bound - mi).abs() < 1e-9);

        // suboptimal decoder strictly below
        let dec_u = DMatrix::from_element(2, 3, 1.0 / 3.0);
        let (bound_u, mi_u) = infomax_bound(&p, &enc, &dec_u).unwrap();
        assert!((mi_u - mi).abs() < 1e-12);
        assert!(bound_u < mi);

        // non-stochastic table rejected
        let bad = DMatrix::from_element(3, 2, 0.3);
        assert!(infomax_bound(&p, &bad, &dec).is_err());
    }
}
