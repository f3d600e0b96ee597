//! Exponential-family core: natural/mean parameter maps, log-partition,
//! sampling, moment-matching ML, and the Bregman form of the KL divergence.
//!
//! Three families are supported in minimal representation: Bernoulli,
//! Categorical over C classes (storing C-1 probabilities), and Gaussian.
//! A univariate Gaussian uses the natural vector [nu/sigma^2, -1/(2 sigma^2)]
//! against sufficient statistics [x, x^2]; a multivariate Gaussian keeps the
//! pair (precision * mean, precision) so positive definiteness stays
//! checkable without repeated inversion.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::num::{ln_1p_exp, log_sum_exp, sigmoid};
use crate::{Error, Result};

const PROB_CLAMP: f64 = 1e-12;

/// Family descriptor fixing sufficient statistics and parameter maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpFamModel {
    Bernoulli,
    /// C >= 2 classes, minimal parameterization with C-1 coordinates.
    Categorical(usize),
    /// Dimension D >= 1. D = 1 uses the dense [nu/s2, -1/(2 s2)] encoding.
    Gaussian(usize),
}

impl ExpFamModel {
    pub fn categorical(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!(
                "categorical family needs C >= 2 classes, got {classes}"
            )));
        }
        Ok(ExpFamModel::Categorical(classes))
    }

    pub fn gaussian(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("gaussian family needs D >= 1".into()));
        }
        Ok(ExpFamModel::Gaussian(dim))
    }

    /// Number of sufficient statistics in the dense encoding (univariate
    /// families only; the multivariate Gaussian is handled structurally).
    fn dense_len(&self) -> Option<usize> {
        match self {
            ExpFamModel::Bernoulli => Some(1),
            ExpFamModel::Categorical(c) => Some(c - 1),
            ExpFamModel::Gaussian(1) => Some(2),
            ExpFamModel::Gaussian(_) => None,
        }
    }
}

/// Natural parameters eta.
#[derive(Debug, Clone, PartialEq)]
pub enum NaturalParams {
    /// Bernoulli `[eta]`, Categorical `[eta_1..eta_{C-1}]`,
    /// univariate Gaussian `[nu/s2, -1/(2 s2)]`.
    Dense(DVector<f64>),
    /// Multivariate Gaussian as (precision * mean, precision).
    MvGaussian {
        precision_mean: DVector<f64>,
        precision: DMatrix<f64>,
    },
}

impl NaturalParams {
    pub fn dense(values: &[f64]) -> Self {
        NaturalParams::Dense(DVector::from_row_slice(values))
    }

    /// Univariate Gaussian natural vector from (mean, variance).
    pub fn gaussian1(mean: f64, var: f64) -> Result<Self> {
        if var <= 0.0 {
            return Err(Error::Domain(format!(
                "variance must be positive, got {var}"
            )));
        }
        Ok(NaturalParams::dense(&[mean / var, -0.5 / var]))
    }

    /// Multivariate Gaussian natural pair from (mean, covariance).
    pub fn gaussian_mv(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
        let precision = chol.inverse();
        let precision_mean = &precision * mean;
        Ok(NaturalParams::MvGaussian {
            precision_mean,
            precision,
        })
    }
}

/// Mean parameters mu = E[u(x)].
#[derive(Debug, Clone, PartialEq)]
pub enum MeanParams {
    /// Bernoulli `[mu]`, Categorical `[mu_1..mu_{C-1}]`,
    /// univariate Gaussian `[E x, E x^2]`.
    Dense(DVector<f64>),
    /// Multivariate Gaussian as (E x, E x x^T).
    MvGaussian {
        mean: DVector<f64>,
        second_moment: DMatrix<f64>,
    },
}

impl MeanParams {
    pub fn dense(values: &[f64]) -> Self {
        MeanParams::Dense(DVector::from_row_slice(values))
    }

    pub fn as_dense(&self) -> Option<&DVector<f64>> {
        match self {
            MeanParams::Dense(v) => Some(v),
            MeanParams::MvGaussian { .. } => None,
        }
    }
}

/// A single observation in the family's support.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Binary(u8),
    Class(usize),
    Scalar(f64),
    Vector(DVector<f64>),
}

fn check_dense<'a>(model: &ExpFamModel, eta: &'a NaturalParams) -> Result<&'a DVector<f64>> {
    match (model.dense_len(), eta) {
        (Some(len), NaturalParams::Dense(v)) if v.len() == len => Ok(v),
        (Some(len), NaturalParams::Dense(v)) => Err(Error::Domain(format!(
            "natural parameter length {} does not match family ({} expected)",
            v.len(),
            len
        ))),
        _ => Err(Error::Domain(
            "natural parameter encoding does not match family".into(),
        )),
    }
}

fn check_gaussian1(eta: &DVector<f64>) -> Result<(f64, f64)> {
    let (e1, e2) = (eta[0], eta[1]);
    if e2 >= 0.0 {
        return Err(Error::Domain(format!(
            "gaussian second natural parameter must be negative, got {e2}"
        )));
    }
    Ok((e1, e2))
}

/// Cholesky of the precision, rejecting non-SPD input.
fn check_precision(precision: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if precision.nrows() != precision.ncols() {
        return Err(Error::Domain("precision matrix must be square".into()));
    }
    let asym = (precision - precision.transpose()).abs().max();
    if asym > 1e-9 {
        return Err(Error::Domain("precision matrix must be symmetric".into()));
    }
    nalgebra::Cholesky::new(precision.clone())
        .ok_or_else(|| Error::Domain("precision matrix is not positive definite".into()))
}

/// Log-partition A(eta) = ln Z(eta).
pub fn log_partition(model: &ExpFamModel, eta: &NaturalParams) -> Result<f64> {
    match (model, eta) {
        (
            ExpFamModel::Gaussian(d),
            NaturalParams::MvGaussian {
                precision_mean,
                precision,
            },
        ) if *d > 1 => {
            if precision.nrows() != *d || precision_mean.len() != *d {
                return Err(Error::Domain("gaussian dimension mismatch".into()));
            }
            let chol = check_precision(precision)?;
            let mean = chol.solve(precision_mean);
            let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
            let d = *d as f64;
            Ok(0.5 * precision_mean.dot(&mean) - 0.5 * log_det
                + 0.5 * d * (2.0 * std::f64::consts::PI).ln())
        }
        _ => {
            let v = check_dense(model, eta)?;
            match model {
                ExpFamModel::Bernoulli => Ok(ln_1p_exp(v[0])),
                ExpFamModel::Categorical(_) => {
                    let mut terms: Vec<f64> = v.iter().copied().collect();
                    terms.push(0.0); // implicit class 0
                    Ok(log_sum_exp(&terms))
                }
                ExpFamModel::Gaussian(_) => {
                    let (e1, e2) = check_gaussian1(v)?;
                    // nu^2/(2 s2) + 0.5 ln(2 pi s2)
                    Ok(-e1 * e1 / (4.0 * e2)
                        - 0.5 * (-2.0 * e2 / (2.0 * std::f64::consts::PI)).ln())
                }
            }
        }
    }
}

/// Mean parameters as the gradient of the log-partition, mu = grad A(eta).
pub fn nat_to_mean(model: &ExpFamModel, eta: &NaturalParams) -> Result<MeanParams> {
    match (model, eta) {
        (
            ExpFamModel::Gaussian(d),
            NaturalParams::MvGaussian {
                precision_mean,
                precision,
            },
        ) if *d > 1 => {
            let chol = check_precision(precision)?;
            let mean = chol.solve(precision_mean);
            let cov = chol.inverse();
            let second_moment = &cov + &mean * mean.transpose();
            Ok(MeanParams::MvGaussian {
                mean,
                second_moment,
            })
        }
        _ => {
            let v = check_dense(model, eta)?;
            match model {
                ExpFamModel::Bernoulli => Ok(MeanParams::dense(&[sigmoid(v[0])])),
                ExpFamModel::Categorical(c) => {
                    let mut terms: Vec<f64> = v.iter().copied().collect();
                    terms.push(0.0);
                    let lse = log_sum_exp(&terms);
                    let mu = DVector::from_iterator(c - 1, v.iter().map(|e| (e - lse).exp()));
                    Ok(MeanParams::Dense(mu))
                }
                ExpFamModel::Gaussian(_) => {
                    let (e1, e2) = check_gaussian1(v)?;
                    let var = -0.5 / e2;
                    let nu = e1 * var;
                    Ok(MeanParams::dense(&[nu, var + nu * nu]))
                }
            }
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Inverse of [`nat_to_mean`].
pub fn mean_to_nat(model: &ExpFamModel, mu: &MeanParams) -> Result<NaturalParams> {
    match (model, mu) {
        (
            ExpFamModel::Gaussian(d),
            MeanParams::MvGaussian {
                mean,
                second_moment,
            },
        ) if *d > 1 => {
            let cov = second_moment - mean * mean.transpose();
            NaturalParams::gaussian_mv(mean, &cov).map_err(|_| {
                Error::Domain(
                    "second moment minus mean outer product is not positive definite".into(),
                )
            })
        }
        (ExpFamModel::Bernoulli, MeanParams::Dense(v)) if v.len() == 1 => {
            let p = v[0];
            if !(0.0..=1.0).contains(&p) || p == 0.0 || p == 1.0 {
                return Err(Error::Domain(format!(
                    "bernoulli mean must lie strictly inside (0,1), got {p}"
                )));
            }
            let p = clamp_prob(p);
            Ok(NaturalParams::dense(&[(p / (1.0 - p)).ln()]))
        }
        (ExpFamModel::Categorical(c), MeanParams::Dense(v)) if v.len() == c - 1 => {
            let rest: f64 = 1.0 - v.sum();
            if v.iter().any(|&p| p <= 0.0 || p >= 1.0) || rest <= 0.0 {
                return Err(Error::Domain(
                    "categorical probabilities must be strictly positive with sum < 1".into(),
                ));
            }
            let rest = clamp_prob(rest);
            let eta = DVector::from_iterator(c - 1, v.iter().map(|&p| (clamp_prob(p) / rest).ln()));
            Ok(NaturalParams::Dense(eta))
        }
        (ExpFamModel::Gaussian(1), MeanParams::Dense(v)) if v.len() == 2 => {
            let var = v[1] - v[0] * v[0];
            if var <= 0.0 {
                return Err(Error::Domain(format!(
                    "implied variance must be positive, got {var}"
                )));
            }
            NaturalParams::gaussian1(v[0], var)
        }
        _ => Err(Error::Domain(
            "mean parameter encoding does not match family".into(),
        )),
    }
}

/// Sufficient statistic inner product eta^T u(x).
fn eta_dot_u(model: &ExpFamModel, eta: &NaturalParams, x: &Observation) -> Result<f64> {
    match (model, eta, x) {
        (ExpFamModel::Bernoulli, NaturalParams::Dense(v), Observation::Binary(b)) => {
            if *b > 1 {
                return Err(Error::Domain(format!(
                    "bernoulli observation must be 0/1, got {b}"
                )));
            }
            Ok(v[0] * f64::from(*b))
        }
        (ExpFamModel::Categorical(c), NaturalParams::Dense(v), Observation::Class(k)) => {
            if *k >= *c {
                return Err(Error::Domain(format!(
                    "class {k} outside categorical support 0..{c}"
                )));
            }
            Ok(if *k == 0 { 0.0 } else { v[*k - 1] })
        }
        (ExpFamModel::Gaussian(1), NaturalParams::Dense(v), Observation::Scalar(x)) => {
            Ok(v[0] * x + v[1] * x * x)
        }
        (
            ExpFamModel::Gaussian(d),
            NaturalParams::MvGaussian {
                precision_mean,
                precision,
            },
            Observation::Vector(x),
        ) if *d > 1 => {
            if x.len() != *d {
                return Err(Error::Domain("observation dimension mismatch".into()));
            }
            Ok(precision_mean.dot(x) - 0.5 * (precision * x).dot(x))
        }
        _ => Err(Error::Domain("observation outside family support".into())),
    }
}

/// ln p(x | eta) = eta^T u(x) - A(eta) + ln m(x); m(x) = 1 for all families here.
pub fn log_prob(model: &ExpFamModel, eta: &NaturalParams, x: &Observation) -> Result<f64> {
    Ok(eta_dot_u(model, eta, x)? - log_partition(model, eta)?)
}

/// Draw one observation from p(x | eta).
pub fn sample<R: Rng>(
    model: &ExpFamModel,
    eta: &NaturalParams,
    rng: &mut R,
) -> Result<Observation> {
    match (model, eta) {
        (
            ExpFamModel::Gaussian(d),
            NaturalParams::MvGaussian {
                precision_mean,
                precision,
            },
        ) if *d > 1 => {
            let chol = check_precision(precision)?;
            let mean = chol.solve(precision_mean);
            let w = DVector::from_iterator(
                *d,
                (0..*d).map(|_| {
                    let v: f64 = StandardNormal.sample(rng);
                    v
                }),
            );
            // precision = L L^T, so solving L^T y = w gives cov(y) = precision^-1
            let y = chol
                .l()
                .transpose()
                .solve_upper_triangular(&w)
                .ok_or_else(|| Error::Numeric("singular cholesky factor".into()))?;
            Ok(Observation::Vector(mean + y))
        }
        _ => {
            let v = check_dense(model, eta)?;
            match model {
                ExpFamModel::Bernoulli => {
                    let p = sigmoid(v[0]);
                    Ok(Observation::Binary(u8::from(rng.gen::<f64>() < p)))
                }
                ExpFamModel::Categorical(c) => {
                    let MeanParams::Dense(mu) = nat_to_mean(model, eta)? else {
                        unreachable!()
                    };
                    let u: f64 = rng.gen();
                    let mut acc = 1.0 - mu.sum(); // class 0
                    if u < acc {
                        return Ok(Observation::Class(0));
                    }
                    for k in 1..*c {
                        acc += mu[k - 1];
                        if u < acc {
                            return Ok(Observation::Class(k));
                        }
                    }
                    Ok(Observation::Class(c - 1))
                }
                ExpFamModel::Gaussian(_) => {
                    let (e1, e2) = check_gaussian1(v)?;
                    let var = -0.5 / e2;
                    let nu = e1 * var;
                    let w: f64 = StandardNormal.sample(rng);
                    Ok(Observation::Scalar(nu + var.sqrt() * w))
                }
            }
        }
    }
}

/// Moment-matching ML: mu_ML = (1/N) sum u(x_n).
pub fn ml_fit(model: &ExpFamModel, data: &[Observation]) -> Result<MeanParams> {
    if data.is_empty() {
        return Err(Error::Estimation("ml_fit requires nonempty data".into()));
    }
    let n = data.len() as f64;
    match model {
        ExpFamModel::Bernoulli => {
            let mut s = 0.0;
            for x in data {
                match x {
                    Observation::Binary(b) if *b <= 1 => s += f64::from(*b),
                    _ => return Err(Error::Domain("bernoulli data must be binary".into())),
                }
            }
            Ok(MeanParams::dense(&[s / n]))
        }
        ExpFamModel::Categorical(c) => {
            let mut counts = vec![0.0; *c];
            for x in data {
                match x {
                    Observation::Class(k) if *k < *c => counts[*k] += 1.0,
                    _ => return Err(Error::Domain("categorical data outside support".into())),
                }
            }
            let mu = DVector::from_iterator(c - 1, counts[1..].iter().map(|v| v / n));
            Ok(MeanParams::Dense(mu))
        }
        ExpFamModel::Gaussian(1) => {
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for x in data {
                match x {
                    Observation::Scalar(v) => {
                        m1 += v;
                        m2 += v * v;
                    }
                    _ => return Err(Error::Domain("gaussian data must be scalar".into())),
                }
            }
            let (m1, m2) = (m1 / n, m2 / n);
            if m2 - m1 * m1 <= 0.0 {
                return Err(Error::Estimation(
                    "sample variance is singular (all observations identical?)".into(),
                ));
            }
            Ok(MeanParams::dense(&[m1, m2]))
        }
        ExpFamModel::Gaussian(d) => {
            let mut mean = DVector::zeros(*d);
            let mut second = DMatrix::zeros(*d, *d);
            for x in data {
                match x {
                    Observation::Vector(v) if v.len() == *d => {
                        mean += v;
                        second += v * v.transpose();
                    }
                    _ => return Err(Error::Domain("gaussian data dimension mismatch".into())),
                }
            }
            mean /= n;
            second /= n;
            let cov = &second - &mean * mean.transpose();
            if nalgebra::Cholesky::new(cov).is_none() {
                return Err(Error::Estimation("sample covariance is singular".into()));
            }
            Ok(MeanParams::MvGaussian {
                mean,
                second_moment: second,
            })
        }
    }
}

/// KL divergence in nats via the Bregman identity
/// KL(p(.|eta1) || p(.|eta2)) = A(eta2) - A(eta1) - (eta2 - eta1)^T mu1.
pub fn kl_exponential(
    model: &ExpFamModel,
    eta1: &NaturalParams,
    eta2: &NaturalParams,
) -> Result<f64> {
    let a1 = log_partition(model, eta1)?;
    let a2 = log_partition(model, eta2)?;
    let mu1 = nat_to_mean(model, eta1)?;
    let cross = match (eta1, eta2, &mu1) {
        (NaturalParams::Dense(v1), NaturalParams::Dense(v2), MeanParams::Dense(m)) => {
            (v2 - v1).dot(m)
        }
        (
            NaturalParams::MvGaussian {
                precision_mean: h1,
                precision: l1,
            },
            NaturalParams::MvGaussian {
                precision_mean: h2,
                precision: l2,
            },
            MeanParams::MvGaussian {
                mean,
                second_moment,
            },
        ) => {
            // pairing of (h, Lambda) against statistics (x, -x x^T / 2)
            let dl = l2 - l1;
            (h2 - h1).dot(mean) - 0.5 * (dl * second_moment).trace()
        }
        _ => {
            return Err(Error::Domain(
                "natural parameter encodings do not match the same family".into(),
            ))
        }
    };
    Ok(a2 - a1 - cross)
}
