//! EM for mixtures of Gaussians and mixtures of Bernoullis.

use nalgebra::{DMatrix, DVector};

use crate::clustering::{self, KMeansInit};
use crate::num::log_sum_exp;
use crate::parallel::map_indexed;
use crate::trace::Trace;
use crate::{Error, Result};

const BERN_CLAMP: f64 = 1e-6;

/// Mixture of Gaussians: weights, component means, and covariances.
#[derive(Debug, Clone)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

/// Mixture of Bernoullis: weights and per-component probability vectors.
#[derive(Debug, Clone)]
pub struct BernMixParams {
    pub weights: Vec<f64>,
    pub probs: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub enum MixtureParams {
    Gaussian(GmmParams),
    Bernoulli(BernMixParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureKind {
    Gmm,
    BernoulliMixture,
}

#[derive(Debug, Clone)]
pub enum EmInit {
    /// K-means prototypes as means/probability vectors, data-wide spread for
    /// the covariances, uniform weights.
    KMeans {
        seed: u64,
    },
    Given(MixtureParams),
}

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Relative log-likelihood improvement below which the fit stops.
    pub tol: f64,
    /// GMM only: pin every covariance to `eps * I` and skip its M-step
    /// update (the K-means limit of EM).
    pub frozen_covariance: Option<f64>,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 500,
            tol: 1e-8,
            frozen_covariance: None,
        }
    }
}

struct GaussianComponent {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_norm: f64, // -(D/2) ln 2pi - (1/2) ln det Sigma
}

fn prepare_components(params: &GmmParams) -> Result<Vec<GaussianComponent>> {
    let dim = params.means[0].len();
    params
        .covariances
        .iter()
        .enumerate()
        .map(|(k, cov)| {
            let chol = nalgebra::Cholesky::new(cov.clone()).ok_or_else(|| {
                Error::Domain(format!(
                    "covariance of component {k} is not positive definite"
                ))
            })?;
            let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
            Ok(GaussianComponent {
                chol,
                log_norm: -0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det,
            })
        })
        .collect()
}

fn log_gaussian(comp: &GaussianComponent, mean: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let diff = x - mean;
    let solved = comp.chol.solve(&diff);
    comp.log_norm - 0.5 * diff.dot(&solved)
}

fn validate_gmm(params: &GmmParams) -> Result<usize> {
    let k = params.weights.len();
    if k == 0 || params.means.len() != k || params.covariances.len() != k {
        return Err(Error::Config(
            "inconsistent mixture component counts".into(),
        ));
    }
    let sum: f64 = params.weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || params.weights.iter().any(|&w| w < 0.0) {
        return Err(Error::Domain(format!(
            "mixture weights must be a pmf (sum {sum})"
        )));
    }
    Ok(k)
}

/// Per-row log joint densities ln(pi_k N(x_n | mu_k, Sigma_k)).
fn gmm_log_joint_rows(params: &GmmParams, data: &[DVector<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = validate_gmm(params)?;
    let comps = prepare_components(params)?;
    let log_w: Vec<f64> = params
        .weights
        .iter()
        .map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
        .collect();
    Ok(map_indexed(data.len(), |n| {
        (0..k)
            .map(|j| log_w[j] + log_gaussian(&comps[j], &params.means[j], &data[n]))
            .collect()
    }))
}

/// Responsibilities `r[n][k]` = pi_k N(x_n|mu_k,Sigma_k) / sum_j (...).
pub fn gmm_e_step(params: &GmmParams, data: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let rows = gmm_log_joint_rows(params, data)?;
    let k = params.weights.len();
    let mut resp = DMatrix::zeros(data.len(), k);
    for (n, row) in rows.iter().enumerate() {
        let norm = log_sum_exp(row);
        if !norm.is_finite() {
            return Err(Error::Numeric(format!(
                "zero total mixture density at data row {n}"
            )));
        }
        for j in 0..k {
            resp[(n, j)] = (row[j] - norm).exp();
        }
    }
    Ok(resp)
}

/// Data log-likelihood under the mixture.
pub fn gmm_log_likelihood(params: &GmmParams, data: &[DVector<f64>]) -> Result<f64> {
    let rows = gmm_log_joint_rows(params, data)?;
    Ok(rows.iter().map(|row| log_sum_exp(row)).sum())
}

/// Hard cluster assignments by maximum responsibility (ties to lowest index).
pub fn gmm_hard_assignments(params: &GmmParams, data: &[DVector<f64>]) -> Result<Vec<usize>> {
    let resp = gmm_e_step(params, data)?;
    Ok((0..data.len())
        .map(|n| {
            let mut best = 0;
            for j in 1..params.weights.len() {
                if resp[(n, j)] > resp[(n, best)] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Responsibility-weighted moment matching. Covariances receive a floor of
/// eps * I with eps = 1e-8 * trace(data covariance) / D so a component that
/// collapses onto a single point keeps a valid density.
pub fn gmm_m_step(resp: &DMatrix<f64>, data: &[DVector<f64>]) -> Result<GmmParams> {
    gmm_m_step_inner(resp, data, None)
}

fn data_covariance_trace(data: &[DVector<f64>]) -> f64 {
    let n = data.len() as f64;
    let dim = data[0].len();
    let mean = data.iter().fold(DVector::zeros(dim), |acc, x| acc + x) / n;
    data.iter().map(|x| (x - &mean).norm_squared()).sum::<f64>() / n
}

fn gmm_m_step_inner(
    resp: &DMatrix<f64>,
    data: &[DVector<f64>],
    frozen_covariance: Option<f64>,
) -> Result<GmmParams> {
    let n = data.len();
    if resp.nrows() != n || n == 0 {
        return Err(Error::Config(
            "responsibility rows must match the data".into(),
        ));
    }
    let k = resp.ncols();
    let dim = data[0].len();
    let eps = 1e-8 * data_covariance_trace(data) / dim as f64;

    let mut weights = vec![0.0; k];
    let mut means = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    for j in 0..k {
        let total: f64 = (0..n).map(|r| resp[(r, j)]).sum();
        if total < 1e-12 {
            return Err(Error::ComponentCollapse {
                index: j,
                responsibility: total,
            });
        }
        weights[j] = total / n as f64;
        let mut mean = DVector::zeros(dim);
        for (r, x) in data.iter().enumerate() {
            mean += x * resp[(r, j)];
        }
        mean /= total;
        if let Some(eps_frozen) = frozen_covariance {
            covariances.push(DMatrix::identity(dim, dim) * eps_frozen);
        } else {
            let mut cov = DMatrix::zeros(dim, dim);
            for (r, x) in data.iter().enumerate() {
                let d = x - &mean;
                cov += (&d * d.transpose()) * resp[(r, j)];
            }
            cov /= total;
            for i in 0..dim {
                cov[(i, i)] += eps;
            }
            covariances.push(cov);
        }
        means.push(mean);
    }
    Ok(GmmParams {
        weights,
        means,
        covariances,
    })
}

/// ELBO L(q, theta) for fixed responsibilities q, used for the EM sandwich
/// ll(theta_old) <= L(q, theta_new) <= ll(theta_new).
fn gmm_elbo(params: &GmmParams, resp: &DMatrix<f64>, data: &[DVector<f64>]) -> Result<f64> {
    let rows = gmm_log_joint_rows(params, data)?;
    let mut acc = 0.0;
    for (n, row) in rows.iter().enumerate() {
        for (j, &lj) in row.iter().enumerate() {
            let r = resp[(n, j)];
            if r > 0.0 {
                acc += r * (lj - r.ln());
            }
        }
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Bernoulli mixture
// ---------------------------------------------------------------------------

fn validate_bern(params: &BernMixParams) -> Result<usize> {
    let k = params.weights.len();
    if k == 0 || params.probs.len() != k {
        return Err(Error::Config(
            "inconsistent mixture component counts".into(),
        ));
    }
    let sum: f64 = params.weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || params.weights.iter().any(|&w| w < 0.0) {
        return Err(Error::Domain(format!(
            "mixture weights must be a pmf (sum {sum})"
        )));
    }
    if params
        .probs
        .iter()
        .any(|p| p.iter().any(|&v| v <= 0.0 || v >= 1.0))
    {
        return Err(Error::Domain(
            "bernoulli probabilities must lie in (0,1)".into(),
        ));
    }
    Ok(k)
}

fn check_binary(data: &[DVector<f64>]) -> Result<()> {
    for (n, x) in data.iter().enumerate() {
        if x.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain(format!("row {n} is not binary")));
        }
    }
    Ok(())
}

fn bern_log_joint_rows(params: &BernMixParams, data: &[DVector<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = validate_bern(params)?;
    check_binary(data)?;
    let log_w: Vec<f64> = params.weights.iter().map(|&w| w.ln()).collect();
    let log_p: Vec<DVector<f64>> = params.probs.iter().map(|p| p.map(f64::ln)).collect();
    let log_1mp: Vec<DVector<f64>> = params
        .probs
        .iter()
        .map(|p| p.map(|v| (1.0 - v).ln()))
        .collect();
    Ok(map_indexed(data.len(), |n| {
        (0..k)
            .map(|j| {
                let mut acc = log_w[j];
                for w in 0..data[n].len() {
                    acc += if data[n][w] == 1.0 {
                        log_p[j][w]
                    } else {
                        log_1mp[j][w]
                    };
                }
                acc
            })
            .collect()
    }))
}

/// Data log-likelihood under a Bernoulli mixture.
pub fn bern_log_likelihood(params: &BernMixParams, data: &[DVector<f64>]) -> Result<f64> {
    let rows = bern_log_joint_rows(params, data)?;
    Ok(rows.iter().map(|row| log_sum_exp(row)).sum())
}

fn bern_e_step(params: &BernMixParams, data: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let rows = bern_log_joint_rows(params, data)?;
    let k = params.weights.len();
    let mut resp = DMatrix::zeros(data.len(), k);
    for (n, row) in rows.iter().enumerate() {
        let norm = log_sum_exp(row);
        if !norm.is_finite() {
            return Err(Error::Numeric(format!(
                "zero total mixture density at data row {n}"
            )));
        }
        for j in 0..k {
            resp[(n, j)] = (row[j] - norm).exp();
        }
    }
    Ok(resp)
}

fn bern_m_step(resp: &DMatrix<f64>, data: &[DVector<f64>]) -> Result<BernMixParams> {
    let n = data.len();
    let k = resp.ncols();
    let dim = data[0].len();
    let mut weights = vec![0.0; k];
    let mut probs = Vec::with_capacity(k);
    for j in 0..k {
        let total: f64 = (0..n).map(|r| resp[(r, j)]).sum();
        if total < 1e-12 {
            return Err(Error::ComponentCollapse {
                index: j,
                responsibility: total,
            });
        }
        weights[j] = total / n as f64;
        let mut p = DVector::zeros(dim);
        for (r, x) in data.iter().enumerate() {
            p += x * resp[(r, j)];
        }
        p /= total;
        probs.push(p.map(|v| v.clamp(BERN_CLAMP, 1.0 - BERN_CLAMP)));
    }
    Ok(BernMixParams { weights, probs })
}

fn bern_elbo(params: &BernMixParams, resp: &DMatrix<f64>, data: &[DVector<f64>]) -> Result<f64> {
    let rows = bern_log_joint_rows(params, data)?;
    let mut acc = 0.0;
    for (n, row) in rows.iter().enumerate() {
        for (j, &lj) in row.iter().enumerate() {
            let r = resp[(n, j)];
            if r > 0.0 {
                acc += r * (lj - r.ln());
            }
        }
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Shared fit loop
// ---------------------------------------------------------------------------

fn init_gmm(
    data: &[DVector<f64>],
    k: usize,
    init: &EmInit,
    config: &EmConfig,
) -> Result<GmmParams> {
    match init {
        EmInit::Given(MixtureParams::Gaussian(p)) => {
            validate_gmm(p)?;
            Ok(p.clone())
        }
        EmInit::Given(MixtureParams::Bernoulli(_)) => {
            Err(Error::Config("bernoulli init passed to a GMM fit".into()))
        }
        EmInit::KMeans { seed } => {
            let (state, _) = clustering::fit(
                data,
                k,
                &KMeansInit::RandomPoints { seed: *seed },
                100,
                1e-10,
            )?;
            let dim = data[0].len();
            let n = data.len() as f64;
            let mean = data.iter().fold(DVector::zeros(dim), |acc, x| acc + x) / n;
            let mut shared = DMatrix::zeros(dim, dim);
            for x in data {
                let d = x - &mean;
                shared += &d * d.transpose();
            }
            shared /= n;
            for i in 0..dim {
                shared[(i, i)] += 1e-9 * (1.0 + shared[(i, i)]);
            }
            let covariances = match config.frozen_covariance {
                Some(eps) => vec![DMatrix::identity(dim, dim) * eps; k],
                None => vec![shared; k],
            };
            Ok(GmmParams {
                weights: vec![1.0 / k as f64; k],
                means: state.prototypes,
                covariances,
            })
        }
    }
}

fn init_bern(data: &[DVector<f64>], k: usize, init: &EmInit) -> Result<BernMixParams> {
    match init {
        EmInit::Given(MixtureParams::Bernoulli(p)) => {
            validate_bern(p)?;
            Ok(p.clone())
        }
        EmInit::Given(MixtureParams::Gaussian(_)) => Err(Error::Config(
            "gaussian init passed to a Bernoulli fit".into(),
        )),
        EmInit::KMeans { seed } => {
            check_binary(data)?;
            let (state, _) = clustering::fit(
                data,
                k,
                &KMeansInit::RandomPoints { seed: *seed },
                100,
                1e-10,
            )?;
            Ok(BernMixParams {
                weights: vec![1.0 / k as f64; k],
                probs: state
                    .prototypes
                    .iter()
                    .map(|p| p.map(|v| v.clamp(BERN_CLAMP, 1.0 - BERN_CLAMP)))
                    .collect(),
            })
        }
    }
}

/// Fit a K-component mixture by EM.
///
/// The trace records `(iter, loglik, elbo)` with `elbo` evaluated at the new
/// parameters against the E-step responsibilities of the previous iterate,
/// so `loglik` is non-decreasing and sandwiches the `elbo` column. Stops when
/// the relative log-likelihood improvement falls below `config.tol`.
pub fn em_fit(
    kind: MixtureKind,
    data: &[DVector<f64>],
    k: usize,
    init: &EmInit,
    config: &EmConfig,
) -> Result<(MixtureParams, Trace)> {
    if data.is_empty() || k == 0 || k > data.len() {
        return Err(Error::Config(format!(
            "em_fit needs 1 <= K <= N, got K = {k}, N = {}",
            data.len()
        )));
    }
    let mut trace = Trace::new(&["loglik", "elbo"]);
    match kind {
        MixtureKind::Gmm => {
            let mut params = init_gmm(data, k, init, config)?;
            let mut ll = gmm_log_likelihood(&params, data)?;
            trace.push(0, &[ll, ll]);
            for iter in 1..=config.max_iters {
                let resp = gmm_e_step(&params, data)?;
                let new_params = gmm_m_step_inner(&resp, data, config.frozen_covariance)?;
                let new_ll = gmm_log_likelihood(&new_params, data)?;
                let bound = gmm_elbo(&new_params, &resp, data)?;
                trace.push(iter, &[new_ll, bound]);
                params = new_params;
                let gain = (new_ll - ll).abs() / ll.abs().max(1.0);
                ll = new_ll;
                if gain < config.tol {
                    break;
                }
            }
            Ok((MixtureParams::Gaussian(params), trace))
        }
        MixtureKind::BernoulliMixture => {
            let mut params = init_bern(data, k, init)?;
            let mut ll = bern_log_likelihood(&params, data)?;
            trace.push(0, &[ll, ll]);
            for iter in 1..=config.max_iters {
                let resp = bern_e_step(&params, data)?;
                let new_params = bern_m_step(&resp, data)?;
                let new_ll = bern_log_likelihood(&new_params, data)?;
                let bound = bern_elbo(&new_params, &resp, data)?;
                trace.push(iter, &[new_ll, bound]);
                params = new_params;
                let gain = (new_ll - ll).abs() / ll.abs().max(1.0);
                ll = new_ll;
                if gain < config.tol {
                    break;
                }
            }
            Ok((MixtureParams::Bernoulli(params), trace))
        }
    }
}
