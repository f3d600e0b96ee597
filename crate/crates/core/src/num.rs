//! Small numeric helpers shared across modules.

use std::sync::OnceLock;

/// A real value that may be +/- infinite.
///
/// Divergences and bounds use this instead of bare `f64::INFINITY` so that an
/// infinite result is an explicit, matchable outcome rather than a sentinel
/// that silently propagates through arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInfinite,
    NegInfinite,
}

impl ExtendedReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    /// Collapse to `f64`, mapping the infinite variants to IEEE infinities.
    pub fn as_f64(self) -> f64 {
        match self {
            ExtendedReal::Finite(v) => v,
            ExtendedReal::PosInfinite => f64::INFINITY,
            ExtendedReal::NegInfinite => f64::NEG_INFINITY,
        }
    }

    /// The finite value, panicking on an infinite flag (test convenience).
    pub fn expect_finite(self) -> f64 {
        match self {
            ExtendedReal::Finite(v) => v,
            other => panic!("expected finite value, got {other:?}"),
        }
    }
}

/// Logistic sigmoid 1/(1+e^{-t}), stable for large |t|.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^t) without overflow.
pub fn ln_1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// log(sum(exp(v))) with the usual max shift.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// Entropy of a Bernoulli(p) in nats; 0 at the endpoints.
pub fn binary_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

/// x ln x with the 0 ln 0 = 0 convention.
pub fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Standard normal log-density.
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

/// Gauss–Legendre nodes and weights on [-1, 1].
///
/// Newton iteration on the n-th Legendre polynomial from the Tricomi initial
/// guess; converges in a handful of steps per node. Only the lower half is
/// solved, the rest follows by symmetry.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 2);
    let mut out = vec![(0.0, 0.0); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // root of P_n near cos(pi*(i+3/4)/(n+1/2)), counting from +1 side
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    out
}

/// Cached 10^4-node Gauss–Legendre rule used by the 1-D KL quadratures.
pub fn gauss_legendre_10k() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(10_000))
}

/// Integrate f over [a, b] with a fixed Gauss–Legendre rule.
pub fn integrate(rule: &[(f64, f64)], a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for &(x, w) in rule {
        acc += w * f(mid + half * x);
    }
    acc * half
}
