//! Probabilistic PCA: linear-Gaussian factor model fit by EM.
//!
//! Generative model: z ~ N(0, I_M), x | z ~ N(W z + mu, sigma^2 I_D).
//! The posterior over factors is Gaussian with precision-like matrix
//! J = sigma^-2 W^T W + I, posterior covariance J^-1, and posterior mean
//! sigma^-2 J^-1 W^T (x - mu).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::parallel::map_indexed;
use crate::trace::Trace;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct PpcaParams {
    /// D x M loading matrix.
    pub w: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub sigma2: f64,
}

impl PpcaParams {
    fn validate(&self) -> Result<()> {
        if self.sigma2 <= 0.0 {
            return Err(Error::Domain(format!(
                "noise variance must be positive, got {}",
                self.sigma2
            )));
        }
        if self.w.ncols() > self.w.nrows() || self.mu.len() != self.w.nrows() {
            return Err(Error::Config(
                "loading matrix needs M <= D and a matching mean".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum PpcaInit {
    /// Uniform(-1,1) loadings and unit noise variance.
    Seeded {
        seed: u64,
    },
    Given(PpcaParams),
}

#[derive(Debug, Clone)]
pub struct PpcaConfig {
    pub max_iters: usize,
    /// Relative log-likelihood improvement below which the fit stops.
    pub tol: f64,
    /// Hold the noise variance fixed (the small-noise limit recovers PCA).
    pub frozen_sigma2: Option<f64>,
}

impl Default for PpcaConfig {
    fn default() -> Self {
        PpcaConfig {
            max_iters: 500,
            tol: 1e-8,
            frozen_sigma2: None,
        }
    }
}

/// Posterior mean and covariance of the factors given one observation.
pub fn ppca_posterior(
    params: &PpcaParams,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    params.validate()?;
    if x.len() != params.mu.len() {
        return Err(Error::Config("observation dimension mismatch".into()));
    }
    let m = params.w.ncols();
    let j = params.w.transpose() * &params.w / params.sigma2 + DMatrix::<f64>::identity(m, m);
    // J >= I, so the inversion cannot fail
    let j_inv = nalgebra::Cholesky::new(j)
        .ok_or_else(|| Error::Numeric("posterior precision lost definiteness".into()))?
        .inverse();
    let mean = &j_inv * (params.w.transpose() * (x - &params.mu)) / params.sigma2;
    Ok((mean, j_inv))
}

/// Marginal log-likelihood: x ~ N(mu, W W^T + sigma^2 I).
pub fn ppca_log_likelihood(params: &PpcaParams, data: &[DVector<f64>]) -> Result<f64> {
    params.validate()?;
    let d = params.mu.len();
    let cov = &params.w * params.w.transpose() + DMatrix::<f64>::identity(d, d) * params.sigma2;
    let chol = nalgebra::Cholesky::new(cov)
        .ok_or_else(|| Error::Numeric("marginal covariance lost definiteness".into()))?;
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let log_norm = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
    let lls = map_indexed(data.len(), |n| {
        let diff = &data[n] - &params.mu;
        log_norm - 0.5 * diff.dot(&chol.solve(&diff))
    });
    Ok(lls.iter().sum())
}

struct EStats {
    /// Posterior means per sample.
    e_z: Vec<DVector<f64>>,
    /// Shared posterior covariance J^-1.
    j_inv: DMatrix<f64>,
}

fn e_step(params: &PpcaParams, centered: &[DVector<f64>]) -> Result<EStats> {
    let m = params.w.ncols();
    let j = params.w.transpose() * &params.w / params.sigma2 + DMatrix::<f64>::identity(m, m);
    let j_inv = nalgebra::Cholesky::new(j)
        .ok_or_else(|| Error::Numeric("posterior precision lost definiteness".into()))?
        .inverse();
    let wt = params.w.transpose();
    let sigma2 = params.sigma2;
    let e_z = map_indexed(centered.len(), |n| &j_inv * (&wt * &centered[n]) / sigma2);
    Ok(EStats { e_z, j_inv })
}

/// ELBO at (stats, params): used to verify the EM sandwich in the trace.
fn ppca_elbo(params: &PpcaParams, stats: &EStats, centered: &[DVector<f64>]) -> f64 {
    let n = centered.len();
    let d = params.mu.len() as f64;
    let m = params.w.ncols() as f64;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let sig2 = params.sigma2;
    let wtw = params.w.transpose() * &params.w;
    let tr_cov = stats.j_inv.trace();
    let tr_w_cov = (&wtw * &stats.j_inv).trace();
    let log_det_cov = stats
        .j_inv
        .clone()
        .cholesky()
        .map(|c| c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0)
        .unwrap_or(f64::NEG_INFINITY);
    let mut acc = 0.0;
    for (c, e) in centered.iter().zip(&stats.e_z) {
        let resid = c - &params.w * e;
        // E ln N(z|0,I) + E ln N(x|Wz+mu, sig2 I) + H(q)
        acc += -0.5 * (tr_cov + e.norm_squared()) - 0.5 * m * ln2pi;
        acc += -0.5 * d * (2.0 * std::f64::consts::PI * sig2).ln()
            - (resid.norm_squared() + tr_w_cov) / (2.0 * sig2);
    }
    acc + n as f64 * (0.5 * m * (ln2pi + 1.0) + 0.5 * log_det_cov)
}

/// Fit PPCA by EM. The trace records `(iter, loglik, elbo)` with the elbo
/// evaluated at the new parameters against the previous posterior.
pub fn ppca_fit(
    data: &[DVector<f64>],
    m: usize,
    init: &PpcaInit,
    config: &PpcaConfig,
) -> Result<(PpcaParams, Trace)> {
    if data.is_empty() {
        return Err(Error::Config("ppca needs a nonempty data set".into()));
    }
    let d = data[0].len();
    if m == 0 || m > d {
        return Err(Error::Config(format!(
            "ppca needs 1 <= M <= D, got M = {m}, D = {d}"
        )));
    }
    if data.len() <= m {
        return Err(Error::Config(format!(
            "ppca needs N > M, got N = {}, M = {m}",
            data.len()
        )));
    }
    let n = data.len() as f64;
    let mu = data.iter().fold(DVector::zeros(d), |acc, x| acc + x) / n;
    let centered: Vec<DVector<f64>> = data.iter().map(|x| x - &mu).collect();

    // the top M spectral directions must carry mass, otherwise the factor
    // regression in the M step is unidentifiable
    let mut sample_cov = DMatrix::zeros(d, d);
    for c in &centered {
        sample_cov += c * c.transpose();
    }
    sample_cov /= n;
    let mut eigs: Vec<f64> = sample_cov
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(|a, b| b.total_cmp(a));
    if eigs[m - 1] <= 1e-12 * eigs[0].max(1e-300) {
        return Err(Error::Estimation(
            "data covariance is rank deficient below the requested factor count".into(),
        ));
    }

    let mut params = match init {
        PpcaInit::Given(p) => {
            p.validate()?;
            if p.w.nrows() != d || p.w.ncols() != m {
                return Err(Error::Config(
                    "init loading matrix has the wrong shape".into(),
                ));
            }
            let mut p = p.clone();
            p.mu = mu.clone();
            p
        }
        PpcaInit::Seeded { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            PpcaParams {
                w: DMatrix::from_fn(d, m, |_, _| rng.gen_range(-1.0..1.0)),
                mu: mu.clone(),
                sigma2: 1.0,
            }
        }
    };
    if let Some(s2) = config.frozen_sigma2 {
        if s2 <= 0.0 {
            return Err(Error::Config(
                "frozen noise variance must be positive".into(),
            ));
        }
        params.sigma2 = s2;
    }

    let mut trace = Trace::new(&["loglik", "elbo"]);
    let mut ll = ppca_log_likelihood(&params, data)?;
    trace.push(0, &[ll, ll]);

    let sum_sq: f64 = centered.iter().map(|c| c.norm_squared()).sum();
    for iter in 1..=config.max_iters {
        let stats = e_step(&params, &centered)?;
        // M step: W = A B^-1 with A = sum c e^T, B = N J^-1 + sum e e^T
        let mut a = DMatrix::zeros(d, m);
        let mut b = &stats.j_inv * n;
        for (c, e) in centered.iter().zip(&stats.e_z) {
            a += c * e.transpose();
            b += e * e.transpose();
        }
        let b_inv = b
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular factor second-moment matrix".into()))?;
        let w_new = &a * b_inv;
        let sigma2_new = match config.frozen_sigma2 {
            Some(s2) => s2,
            None => {
                let wtw = w_new.transpose() * &w_new;
                let val = (sum_sq - 2.0 * (w_new.transpose() * &a).trace() + (&b * &wtw).trace())
                    / (n * d as f64);
                val.max(1e-12)
            }
        };
        params = PpcaParams {
            w: w_new,
            mu: mu.clone(),
            sigma2: sigma2_new,
        };
        let new_ll = ppca_log_likelihood(&params, data)?;
        let bound = ppca_elbo(&params, &stats, &centered);
        trace.push(iter, &[new_ll, bound]);
        let gain = (new_ll - ll).abs() / ll.abs().max(1.0);
        ll = new_ll;
        if gain < config.tol {
            break;
        }
    }
    Ok((params, trace))
}
