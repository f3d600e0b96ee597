//! Information measures over finite-alphabet distributions: generalized
//! entropies, KL, cross-entropy, Jensen-Shannon, alpha-divergence, and
//! f-divergences in closed and variational form.
//!
//! Conventions: all logarithms are natural and results are in nats.
//! Jensen-Shannon follows the unhalved definition KL(p||m) + KL(q||m),
//! bounded by 2 ln 2. Infinite divergences are explicit
//! [`ExtendedReal::PosInfinite`] flags, never bare sentinel floats.

use crate::num::{xlnx, ExtendedReal};
use crate::{Error, Result};

/// A probability mass function over an alphabet of size >= 2.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePmf {
    probs: Vec<f64>,
}

impl FinitePmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Domain("pmf needs an alphabet of size >= 2".into()));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Domain(
                "pmf entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("pmf must sum to 1, got {sum}")));
        }
        Ok(FinitePmf { probs })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::Domain("pmf needs an alphabet of size >= 2".into()));
        }
        Ok(FinitePmf {
            probs: vec![1.0 / size as f64; size],
        })
    }

    /// Normalize nonnegative weights into a pmf.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::Numeric(format!(
                "cannot normalize weights with sum {sum}"
            )));
        }
        let probs: Vec<f64> = weights.into_iter().map(|w| w / sum).collect();
        if probs.len() < 2 || probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Numeric(
                "normalization produced an invalid pmf".into(),
            ));
        }
        Ok(FinitePmf { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }
}

fn check_same_alphabet(p: &FinitePmf, q: &FinitePmf) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Domain(format!(
            "alphabet mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Loss functions defining a generalized entropy.
#[derive(Debug, Clone)]
pub enum GeneralizedLoss {
    /// Detection loss; the optimal estimate is the mode.
    ZeroOne,
    /// Log loss; recovers Shannon entropy in nats.
    Log,
    /// Squared error against a numeric value per symbol; recovers the
    /// variance of the induced numeric distribution.
    Quadratic(Vec<f64>),
}

/// Minimum Bayes risk of the best a-priori estimate under the given loss.
pub fn generalized_entropy(p: &FinitePmf, loss: &GeneralizedLoss) -> Result<f64> {
    match loss {
        GeneralizedLoss::ZeroOne => {
            let max = p.probs().iter().copied().fold(0.0, f64::max);
            Ok(1.0 - max)
        }
        GeneralizedLoss::Log => Ok(-p.probs().iter().map(|&x| xlnx(x)).sum::<f64>()),
        GeneralizedLoss::Quadratic(values) => {
            if values.len() != p.len() {
                return Err(Error::Domain(
                    "quadratic loss needs one numeric value per alphabet symbol".into(),
                ));
            }
            let mean: f64 = p.probs().iter().zip(values).map(|(&pi, &v)| pi * v).sum();
            let second: f64 = p
                .probs()
                .iter()
                .zip(values)
                .map(|(&pi, &v)| pi * v * v)
                .sum();
            Ok(second - mean * mean)
        }
    }
}

/// KL(p || q) in nats; `PosInfinite` when supp(p) is not contained in supp(q).
pub fn kl(p: &FinitePmf, q: &FinitePmf) -> Result<ExtendedReal> {
    check_same_alphabet(p, q)?;
    let mut acc = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(ExtendedReal::PosInfinite);
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(ExtendedReal::Finite(acc))
}

/// Cross-entropy H(p || q) = KL(p || q) + H(p).
pub fn cross_entropy(p: &FinitePmf, q: &FinitePmf) -> Result<ExtendedReal> {
    check_same_alphabet(p, q)?;
    let mut acc = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(ExtendedReal::PosInfinite);
        }
        acc -= pi * qi.ln();
    }
    Ok(ExtendedReal::Finite(acc))
}

/// Unhalved Jensen-Shannon divergence KL(p||m) + KL(q||m) with m = (p+q)/2.
pub fn jensen_shannon(p: &FinitePmf, q: &FinitePmf) -> Result<f64> {
    check_same_alphabet(p, q)?;
    let mut acc = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            acc += pi * (pi / m).ln();
        }
        if qi > 0.0 {
            acc += qi * (qi / m).ln();
        }
    }
    Ok(acc)
}

/// Alpha-divergence for alpha outside {0, 1}:
/// sum over x of [a p + (1-a) q - p^a q^(1-a)] / (a (1-a)).
///
/// Approaches KL(p||q) as alpha -> 1 and KL(q||p) as alpha -> 0.
pub fn alpha_divergence(p: &FinitePmf, q: &FinitePmf, alpha: f64) -> Result<ExtendedReal> {
    check_same_alphabet(p, q)?;
    if alpha == 0.0 || alpha == 1.0 {
        return Err(Error::Config(
            "alpha in {0,1} is the KL limit; call kl directly".into(),
        ));
    }
    let denom = alpha * (1.0 - alpha);
    let mut acc = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        let geo = if pi == 0.0 && qi == 0.0 {
            0.0
        } else if qi == 0.0 {
            // p^a q^(1-a) with q = 0: zero for a < 1, infinite otherwise
            if alpha > 1.0 {
                return Ok(ExtendedReal::PosInfinite);
            }
            0.0
        } else if pi == 0.0 {
            if alpha < 0.0 {
                return Ok(ExtendedReal::PosInfinite);
            }
            0.0
        } else {
            pi.powf(alpha) * qi.powf(1.0 - alpha)
        };
        acc += (alpha * pi + (1.0 - alpha) * qi - geo) / denom;
    }
    Ok(ExtendedReal::Finite(acc))
}

/// Generator of an f-divergence: the convex f with f(1) = 0 and its dual g,
/// linked by f = g* so that the variational form
/// `max_T E_p[T] - E_q[g(T)]` recovers `E_q[f(p/q)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FGenerator {
    /// f(x) = x ln x, g(t) = exp(t - 1); the forward KL divergence.
    KlForward,
    /// g(t) = -ln(2 - exp(t)); the (unhalved) Jensen-Shannon divergence.
    JensenShannon,
    /// f(x) = (a(x-1) - (x^a - 1)) / (a(1-a)) for a outside {0, 1}.
    Alpha(f64),
}

impl FGenerator {
    pub fn alpha(alpha: f64) -> Result<Self> {
        if alpha == 0.0 || alpha == 1.0 {
            return Err(Error::Config(
                "alpha generator needs alpha outside {0,1}".into(),
            ));
        }
        Ok(FGenerator::Alpha(alpha))
    }

    /// The convex generator f evaluated at a likelihood ratio x >= 0.
    pub fn f(&self, x: f64) -> f64 {
        match self {
            FGenerator::KlForward => xlnx(x),
            FGenerator::JensenShannon => {
                // x ln(2x/(1+x)) + ln(2/(1+x))
                let a = if x > 0.0 {
                    x * (2.0 * x / (1.0 + x)).ln()
                } else {
                    0.0
                };
                a + (2.0 / (1.0 + x)).ln()
            }
            FGenerator::Alpha(al) => {
                let pow = if x == 0.0 && *al < 0.0 {
                    f64::INFINITY
                } else {
                    x.powf(*al)
                };
                (al * (x - 1.0) - (pow - 1.0)) / (al * (1.0 - al))
            }
        }
    }

    /// Dual g(t); defined on an open interval that depends on the generator.
    pub fn g(&self, t: f64) -> f64 {
        match self {
            FGenerator::KlForward => (t - 1.0).exp(),
            FGenerator::JensenShannon => -(2.0 - t.exp()).ln(),
            FGenerator::Alpha(al) => ((1.0 - (1.0 - al) * t).powf(al / (al - 1.0)) - 1.0) / al,
        }
    }

    /// g'(t); strictly increasing on the domain, with range (0, inf).
    pub fn g_prime(&self, t: f64) -> f64 {
        match self {
            FGenerator::KlForward => (t - 1.0).exp(),
            FGenerator::JensenShannon => {
                let e = t.exp();
                e / (2.0 - e)
            }
            FGenerator::Alpha(al) => (1.0 - (1.0 - al) * t).powf(1.0 / (al - 1.0)),
        }
    }

    fn g_second(&self, t: f64) -> f64 {
        match self {
            FGenerator::KlForward => (t - 1.0).exp(),
            FGenerator::JensenShannon => {
                let e = t.exp();
                2.0 * e / ((2.0 - e) * (2.0 - e))
            }
            FGenerator::Alpha(al) => (1.0 - (1.0 - al) * t).powf((2.0 - al) / (al - 1.0)),
        }
    }

    /// Open interval on which g is defined.
    fn domain(&self) -> (f64, f64) {
        match self {
            FGenerator::KlForward => (f64::NEG_INFINITY, f64::INFINITY),
            FGenerator::JensenShannon => (f64::NEG_INFINITY, std::f64::consts::LN_2),
            FGenerator::Alpha(al) => {
                let edge = 1.0 / (1.0 - al);
                if *al < 1.0 {
                    (f64::NEG_INFINITY, edge)
                } else {
                    (edge, f64::INFINITY)
                }
            }
        }
    }

    /// f(0): contribution weight for symbols where p vanishes; equals the
    /// negated infimum of g.
    fn f_at_zero(&self) -> f64 {
        match self {
            FGenerator::KlForward => 0.0,
            FGenerator::JensenShannon => std::f64::consts::LN_2,
            FGenerator::Alpha(al) => {
                if *al < 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / al
                }
            }
        }
    }

    /// lim f(x)/x as x -> inf: contribution slope for symbols where q
    /// vanishes; equals the supremum of the dual's domain.
    fn f_slope_at_inf(&self) -> f64 {
        match self {
            FGenerator::KlForward => f64::INFINITY,
            FGenerator::JensenShannon => std::f64::consts::LN_2,
            FGenerator::Alpha(al) => {
                if *al > 1.0 {
                    f64::INFINITY
                } else {
                    1.0 / (1.0 - al)
                }
            }
        }
    }
}

/// Closed-form f-divergence `E_q[f(p/q)]`, continuously extended at the
/// support boundary.
pub fn f_divergence_closed(p: &FinitePmf, q: &FinitePmf, gen: &FGenerator) -> Result<ExtendedReal> {
    check_same_alphabet(p, q)?;
    let mut acc = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        let term = if pi == 0.0 && qi == 0.0 {
            0.0
        } else if qi == 0.0 {
            pi * gen.f_slope_at_inf()
        } else if pi == 0.0 {
            qi * gen.f_at_zero()
        } else {
            qi * gen.f(pi / qi)
        };
        if term.is_infinite() {
            return Ok(ExtendedReal::PosInfinite);
        }
        acc += term;
    }
    Ok(ExtendedReal::Finite(acc))
}

/// Strict midpoint-convexity probe of the dual g on a bracket. An affine or
/// concave dual makes the per-symbol objective t p - g(t) q lose its unique
/// interior maximizer, so it is rejected.
pub(crate) fn check_dual_convex(g: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<()> {
    let n = 8;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
            let b = lo + (hi - lo) * (j as f64 + 0.5) / n as f64;
            let (ga, gb, gm) = (g(a), g(b), g(0.5 * (a + b)));
            let tol = 1e-12 * (1.0 + ga.abs() + gb.abs());
            if gm >= 0.5 * (ga + gb) - tol {
                return Err(Error::Config(
                    "dual generator is not strictly convex; variational maximization is ill-posed"
                        .into(),
                ));
            }
        }
    }
    Ok(())
}

/// Safeguarded 1-D Newton with bisection fallback for g'(t) = ratio.
fn solve_stationary(gen: &FGenerator, ratio: f64) -> f64 {
    let (dlo, dhi) = gen.domain();

    // start from an interior point and expand until the root is bracketed
    let mut lo = if dlo.is_finite() { 0.5 * dlo } else { -1.0 };
    let mut hi = if dhi.is_finite() { 0.5 * dhi } else { 1.0 };
    if dlo.is_finite() && dhi.is_finite() {
        lo = dlo + 0.25 * (dhi - dlo);
        hi = dhi - 0.25 * (dhi - dlo);
    }
    let mut step = 1.0;
    while gen.g_prime(lo) > ratio {
        lo = if dlo.is_finite() {
            0.5 * (lo + dlo)
        } else {
            lo - step
        };
        step *= 2.0;
        if !lo.is_finite() {
            break;
        }
    }
    step = 1.0;
    while gen.g_prime(hi) < ratio {
        hi = if dhi.is_finite() {
            0.5 * (hi + dhi)
        } else {
            hi + step
        };
        step *= 2.0;
        if !hi.is_finite() {
            break;
        }
    }

    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let phi = gen.g_prime(t) - ratio;
        if phi.abs() <= 1e-14 * (1.0 + ratio) {
            break;
        }
        if phi > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let d2 = gen.g_second(t);
        let newton = t - phi / d2;
        t = if d2.is_finite() && d2 > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * (1.0 + t.abs()) {
            break;
        }
    }
    t
}

/// Variational f-divergence on a finite alphabet: per-symbol maximization of
/// t p(x) - g(t) q(x). Returns the optimal value and the discriminator T.
///
/// With T unconstrained the optimum is exact, so the value matches
/// [`f_divergence_closed`]; the returned T satisfies g'(T(x)) = p(x)/q(x).
///
/// ```
/// use lvlearn::divergences::{f_divergence_variational, kl, FGenerator, FinitePmf};
///
/// let p = FinitePmf::new(vec![0.9, 0.1])?;
/// let q = FinitePmf::new(vec![0.5, 0.5])?;
/// let (value, t) = f_divergence_variational(&p, &q, &FGenerator::KlForward)?;
/// assert!((value.expect_finite() - kl(&p, &q)?.expect_finite()).abs() < 1e-9);
/// // the optimal detector for the KL generator is 1 + ln(p/q)
/// assert!((t[0] - (1.0 + (0.9f64 / 0.5).ln())).abs() < 1e-9);
/// # Ok::<(), lvlearn::Error>(())
/// ```
pub fn f_divergence_variational(
    p: &FinitePmf,
    q: &FinitePmf,
    gen: &FGenerator,
) -> Result<(ExtendedReal, Vec<f64>)> {
    check_same_alphabet(p, q)?;
    let (dlo, dhi) = gen.domain();
    let probe_lo = if dlo.is_finite() {
        dlo + 1e-6 * (1.0 + dlo.abs())
    } else {
        -15.0
    };
    let probe_hi = if dhi.is_finite() {
        dhi - 1e-6 * (1.0 + dhi.abs())
    } else {
        15.0
    };
    check_dual_convex(&|t| gen.g(t), probe_lo, probe_hi)?;

    let mut value = 0.0;
    let mut t_out = vec![0.0; p.len()];
    for (i, (&pi, &qi)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pi == 0.0 && qi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            // sup_t t p over the domain: finite only if the domain is capped
            if dhi.is_infinite() {
                return Ok((ExtendedReal::PosInfinite, t_out));
            }
            t_out[i] = dhi;
            value += pi * dhi;
            continue;
        }
        if pi == 0.0 {
            // sup_t { -q g(t) } = -q inf g, approached at the lower edge
            let f0 = gen.f_at_zero();
            if f0.is_infinite() {
                return Ok((ExtendedReal::PosInfinite, t_out));
            }
            value += qi * f0;
            t_out[i] = if dlo.is_finite() {
                dlo
            } else {
                f64::NEG_INFINITY
            };
            continue;
        }
        let t = solve_stationary(gen, pi / qi);
        t_out[i] = t;
        value += t * pi - gen.g(t) * qi;
    }
    Ok((ExtendedReal::Finite(value), t_out))
}
