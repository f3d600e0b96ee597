//! I- and M-projections of a 1-D Gaussian mixture onto a single Gaussian.
//!
//! The M-projection minimizes KL(p || q) and has the closed-form moment
//! matching solution; the I-projection minimizes KL(q || p), is
//! mode-seeking, and is computed numerically with Gauss-Legendre quadrature
//! and nested 1-D searches.

use crate::num::{gauss_legendre_10k, integrate, log_normal_pdf, log_sum_exp};
use crate::{Error, Result};

/// Mixture of univariate Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMixture1d {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GaussianMixture1d {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::Config(
                "mixture component lists must share a length".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Domain(format!(
                "mixture weights must be a pmf (sum {sum})"
            )));
        }
        if variances.iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain("component variances must be positive".into()));
        }
        Ok(GaussianMixture1d {
            weights,
            means,
            variances,
        })
    }

    pub fn log_density(&self, z: f64) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((&w, &m), &v)| {
                if w == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    w.ln() + log_normal_pdf(z, m, v)
                }
            })
            .collect();
        log_sum_exp(&terms)
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .map(|(&w, &m)| w * m)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((&w, &m), &v)| w * ((m - mean) * (m - mean) + v))
            .sum()
    }

    /// Interval carrying essentially all mixture mass.
    fn support(&self) -> (f64, f64) {
        let lo = self
            .means
            .iter()
            .zip(&self.variances)
            .map(|(&m, &v)| m - 10.0 * v.sqrt())
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .means
            .iter()
            .zip(&self.variances)
            .map(|(&m, &v)| m + 10.0 * v.sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Single-Gaussian variational distribution q = N(mean, variance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianQ {
    pub mean: f64,
    pub variance: f64,
}

/// M-projection arg min_q KL(p || q): moment matching on mean and variance.
///
/// ```
/// use lvlearn::approx_inference::{m_projection_gaussian, GaussianMixture1d};
///
/// let target = GaussianMixture1d::new(vec![0.3, 0.7], vec![-1.0, 1.0], vec![0.3, 0.3])?;
/// let q = m_projection_gaussian(&target);
/// assert!((q.mean - 0.4).abs() < 1e-12);
/// assert!((q.variance - 1.14).abs() < 1e-12);
/// # Ok::<(), lvlearn::Error>(())
/// ```
pub fn m_projection_gaussian(target: &GaussianMixture1d) -> GaussianQ {
    GaussianQ {
        mean: target.mean(),
        variance: target.variance(),
    }
}

/// KL(q || p) with q Gaussian and p the mixture, by 10^4-node
/// Gauss-Legendre quadrature over [m - 10 gamma, m + 10 gamma].
pub fn kl_gaussian_to_mixture(q: &GaussianQ, target: &GaussianMixture1d) -> Result<f64> {
    if q.variance <= 0.0 {
        return Err(Error::Domain(
            "variational variance must be positive".into(),
        ));
    }
    let sd = q.variance.sqrt();
    let (a, b) = (q.mean - 10.0 * sd, q.mean + 10.0 * sd);
    let rule = gauss_legendre_10k();
    let value = integrate(rule, a, b, |z| {
        let lq = log_normal_pdf(z, q.mean, q.variance);
        let qz = lq.exp();
        if qz == 0.0 {
            0.0
        } else {
            qz * (lq - target.log_density(z))
        }
    });
    if !value.is_finite() {
        return Err(Error::Numeric("quadrature overflow in KL(q || p)".into()));
    }
    Ok(value)
}

/// KL(p || q) with p the mixture and q Gaussian, over the mixture support.
pub fn kl_mixture_to_gaussian(target: &GaussianMixture1d, q: &GaussianQ) -> Result<f64> {
    if q.variance <= 0.0 {
        return Err(Error::Domain(
            "variational variance must be positive".into(),
        ));
    }
    let (a, b) = target.support();
    let rule = gauss_legendre_10k();
    let value = integrate(rule, a, b, |z| {
        let lp = target.log_density(z);
        let pz = lp.exp();
        if pz == 0.0 {
            0.0
        } else {
            pz * (lp - log_normal_pdf(z, q.mean, q.variance))
        }
    });
    if !value.is_finite() {
        return Err(Error::Numeric("quadrature overflow in KL(p || q)".into()));
    }
    Ok(value)
}

#[derive(Debug, Clone)]
pub struct IProjectionConfig {
    pub init: GaussianQ,
    /// Rounds of alternating mean / log-variance line searches.
    pub max_rounds: usize,
    pub tol: f64,
}

impl Default for IProjectionConfig {
    fn default() -> Self {
        IProjectionConfig {
            init: GaussianQ {
                mean: 0.5,
                variance: 1.0,
            },
            max_rounds: 60,
            tol: 1e-10,
        }
    }
}

/// Golden-section minimization of a unimodal section.
fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Coordinate descent from one start: alternating golden-section searches
/// over the mean (within a few current standard deviations) and the
/// log-variance.
fn descend(
    target: &GaussianMixture1d,
    start: GaussianQ,
    config: &IProjectionConfig,
) -> Result<(GaussianQ, f64)> {
    let mut q = start;
    let mut best = kl_gaussian_to_mixture(&q, target)?;
    for _ in 0..config.max_rounds {
        let prev = best;
        let var = q.variance;
        let sd = var.sqrt();
        q.mean = golden_min(
            |m| {
                kl_gaussian_to_mixture(
                    &GaussianQ {
                        mean: m,
                        variance: var,
                    },
                    target,
                )
                .unwrap_or(f64::INFINITY)
            },
            q.mean - 3.0 * sd,
            q.mean + 3.0 * sd,
            1e-12 * (1.0 + sd),
        );
        let mean = q.mean;
        let s0 = q.variance.ln();
        let s = golden_min(
            |s| {
                kl_gaussian_to_mixture(
                    &GaussianQ {
                        mean,
                        variance: s.exp(),
                    },
                    target,
                )
                .unwrap_or(f64::INFINITY)
            },
            s0 - 2.0,
            s0 + 2.0,
            1e-13,
        );
        q.variance = s.exp();
        best = kl_gaussian_to_mixture(&q, target)?;
        if (prev - best).abs() < config.tol {
            break;
        }
    }
    Ok((q, best))
}

/// I-projection arg min_q KL(q || p) by multi-start coordinate descent:
/// nested golden-section searches over the mean and the log-variance, run
/// from the configured start and from each mixture component, keeping the
/// candidate with the smallest quadrature KL.
///
/// Mode-seeking: the result sits in one mixture mode rather than spanning
/// the support the way the M-projection does.
pub fn i_projection_gaussian(
    target: &GaussianMixture1d,
    config: &IProjectionConfig,
) -> Result<GaussianQ> {
    if config.init.variance <= 0.0 {
        return Err(Error::Config("initial variance must be positive".into()));
    }
    let mut starts = vec![config.init];
    for k in 0..target.weights.len() {
        starts.push(GaussianQ {
            mean: target.means[k],
            variance: target.variances[k],
        });
    }
    let mut best: Option<(GaussianQ, f64)> = None;
    for start in starts {
        let (q, kl) = descend(target, start, config)?;
        if best.as_ref().is_none_or(|(_, b)| kl < *b) {
            best = Some((q, kl));
        }
    }
    Ok(best.expect("at least one start").0)
}
