//! Binary restricted Boltzmann machine: energy, exact conditionals, CD-k
//! gradient estimates, an exact enumeration oracle, and SGD training.
//!
//! p(x, z) = exp(-E(x, z)) / Z with E(x, z) = -a^T z - b^T x - x^T W z over
//! binary units. Hidden units marginalize in closed form, so the exact
//! operations only enumerate the 2^D visible states; the cap D + M <= 24
//! keeps that desk-scale.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::num::{ln_1p_exp, log_sum_exp, sigmoid};
use crate::parallel::map_indexed;
use crate::trace::Trace;
use crate::{Error, Result};

/// Enumeration cap: exact operations refuse models with 2^(D+M) states
/// beyond this exponent.
pub const EXACT_SIZE_CAP: usize = 24;

#[derive(Debug, Clone)]
pub struct RbmParams {
    /// Hidden biases (length M).
    pub hidden_bias: DVector<f64>,
    /// Visible biases (length D).
    pub visible_bias: DVector<f64>,
    /// D x M weight matrix.
    pub weights: DMatrix<f64>,
}

impl RbmParams {
    pub fn new(
        hidden_bias: DVector<f64>,
        visible_bias: DVector<f64>,
        weights: DMatrix<f64>,
    ) -> Result<Self> {
        if weights.nrows() != visible_bias.len() || weights.ncols() != hidden_bias.len() {
            return Err(Error::Config("weight matrix shape must be D x M".into()));
        }
        let p = RbmParams {
            hidden_bias,
            visible_bias,
            weights,
        };
        if !p.is_finite() {
            return Err(Error::Domain("parameters must be finite".into()));
        }
        Ok(p)
    }

    /// Zero biases and uniform(-0.01, 0.01) weights.
    pub fn seeded_init(visible: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RbmParams {
            hidden_bias: DVector::zeros(hidden),
            visible_bias: DVector::zeros(visible),
            weights: DMatrix::from_fn(visible, hidden, |_, _| rng.gen_range(-0.01..0.01)),
        }
    }

    pub fn visible_units(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden_bias.len()
    }

    fn is_finite(&self) -> bool {
        self.hidden_bias.iter().all(|v| v.is_finite())
            && self.visible_bias.iter().all(|v| v.is_finite())
            && self.weights.iter().all(|v| v.is_finite())
    }

    fn check_exact_cap(&self) -> Result<()> {
        if self.visible_units() + self.hidden_units() > EXACT_SIZE_CAP {
            return Err(Error::SizeCap(format!(
                "exact enumeration requires D + M <= {EXACT_SIZE_CAP}, got {}",
                self.visible_units() + self.hidden_units()
            )));
        }
        Ok(())
    }
}

/// Gradient of ln p(x | theta) with respect to (a, b, W).
#[derive(Debug, Clone)]
pub struct RbmGrad {
    pub hidden_bias: DVector<f64>,
    pub visible_bias: DVector<f64>,
    pub weights: DMatrix<f64>,
}

impl RbmGrad {
    fn zeros(d: usize, m: usize) -> Self {
        RbmGrad {
            hidden_bias: DVector::zeros(m),
            visible_bias: DVector::zeros(d),
            weights: DMatrix::zeros(d, m),
        }
    }

    fn add_assign(&mut self, other: &RbmGrad) {
        self.hidden_bias += &other.hidden_bias;
        self.visible_bias += &other.visible_bias;
        self.weights += &other.weights;
    }

    fn scale(&mut self, s: f64) {
        self.hidden_bias *= s;
        self.visible_bias *= s;
        self.weights *= s;
    }

    /// Flatten into one vector (a, then b, then W column-major).
    pub fn flatten(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(
            self.hidden_bias.len() + self.visible_bias.len() + self.weights.len(),
        );
        out.extend(self.hidden_bias.iter());
        out.extend(self.visible_bias.iter());
        out.extend(self.weights.iter());
        DVector::from_vec(out)
    }
}

fn check_binary(v: &[u8], len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::Config(format!(
            "{what} must have length {len}, got {}",
            v.len()
        )));
    }
    if v.iter().any(|&b| b > 1) {
        return Err(Error::Domain(format!("{what} must be binary 0/1")));
    }
    Ok(())
}

/// E(x, z) = -a^T z - b^T x - x^T W z.
pub fn energy(params: &RbmParams, x: &[u8], z: &[u8]) -> Result<f64> {
    check_binary(x, params.visible_units(), "visible state")?;
    check_binary(z, params.hidden_units(), "hidden state")?;
    let mut acc = 0.0;
    for (j, &zj) in z.iter().enumerate() {
        if zj == 1 {
            acc += params.hidden_bias[j];
            for (i, &xi) in x.iter().enumerate() {
                if xi == 1 {
                    acc += params.weights[(i, j)];
                }
            }
        }
    }
    for (i, &xi) in x.iter().enumerate() {
        if xi == 1 {
            acc += params.visible_bias[i];
        }
    }
    Ok(-acc)
}

/// p(z_j = 1 | x) = sigma(w_j^T x + a_j) for every hidden unit.
pub fn cond_hidden(params: &RbmParams, x: &[u8]) -> Result<Vec<f64>> {
    check_binary(x, params.visible_units(), "visible state")?;
    Ok((0..params.hidden_units())
        .map(|j| {
            let mut act = params.hidden_bias[j];
            for (i, &xi) in x.iter().enumerate() {
                if xi == 1 {
                    act += params.weights[(i, j)];
                }
            }
            sigmoid(act)
        })
        .collect())
}

/// p(x_i = 1 | z) = sigma(w~_i^T z + b_i) for every visible unit.
pub fn cond_visible(params: &RbmParams, z: &[u8]) -> Result<Vec<f64>> {
    check_binary(z, params.hidden_units(), "hidden state")?;
    Ok((0..params.visible_units())
        .map(|i| {
            let mut act = params.visible_bias[i];
            for (j, &zj) in z.iter().enumerate() {
                if zj == 1 {
                    act += params.weights[(i, j)];
                }
            }
            sigmoid(act)
        })
        .collect())
}

fn bits(index: usize, len: usize) -> Vec<u8> {
    (0..len).map(|i| ((index >> i) & 1) as u8).collect()
}

/// ln p~(x) = b^T x + sum_j ln(1 + exp(a_j + w_j^T x)): hidden units
/// marginalized in closed form.
fn log_unnormalized_visible(params: &RbmParams, x: &[u8]) -> f64 {
    let mut acc = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        if xi == 1 {
            acc += params.visible_bias[i];
        }
    }
    for j in 0..params.hidden_units() {
        let mut act = params.hidden_bias[j];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 1 {
                act += params.weights[(i, j)];
            }
        }
        acc += ln_1p_exp(act);
    }
    acc
}

/// ln Z by enumerating the 2^D visible states.
pub fn log_partition(params: &RbmParams) -> Result<f64> {
    params.check_exact_cap()?;
    let d = params.visible_units();
    let logs = map_indexed(1usize << d, |s| {
        log_unnormalized_visible(params, &bits(s, d))
    });
    Ok(log_sum_exp(&logs))
}

/// Exact ln p(x | theta) via enumeration; capped at D + M <= 24.
pub fn exact_log_likelihood(params: &RbmParams, x: &[u8]) -> Result<f64> {
    check_binary(x, params.visible_units(), "visible state")?;
    Ok(log_unnormalized_visible(params, x) - log_partition(params)?)
}

/// Exact gradient of ln p(x | theta): clamped (positive) moments minus
/// model (negative) moments, the latter by visible-state enumeration.
pub fn exact_gradient(params: &RbmParams, x: &[u8]) -> Result<RbmGrad> {
    params.check_exact_cap()?;
    check_binary(x, params.visible_units(), "visible state")?;
    let d = params.visible_units();
    let m = params.hidden_units();

    let h = cond_hidden(params, x)?;
    let mut grad = RbmGrad::zeros(d, m);
    for j in 0..m {
        grad.hidden_bias[j] = h[j];
    }
    for i in 0..d {
        grad.visible_bias[i] = f64::from(x[i]);
        for j in 0..m {
            grad.weights[(i, j)] = f64::from(x[i]) * h[j];
        }
    }

    // negative phase: E[x_i], E[z_j | x] and E[x_i z_j] under the model
    let logs: Vec<f64> = (0..(1usize << d))
        .map(|s| log_unnormalized_visible(params, &bits(s, d)))
        .collect();
    let log_z = log_sum_exp(&logs);
    for (s, &lw) in logs.iter().enumerate() {
        let p = (lw - log_z).exp();
        let xs = bits(s, d);
        let hs = cond_hidden(params, &xs)?;
        for j in 0..m {
            grad.hidden_bias[j] -= p * hs[j];
        }
        for i in 0..d {
            if xs[i] == 1 {
                grad.visible_bias[i] -= p;
                for j in 0..m {
                    grad.weights[(i, j)] -= p * hs[j];
                }
            }
        }
    }
    Ok(grad)
}

fn sample_bernoulli<R: Rng>(probs: &[f64], rng: &mut R) -> Vec<u8> {
    probs
        .iter()
        .map(|&p| u8::from(rng.gen::<f64>() < p))
        .collect()
}

/// CD-k estimate of the gradient from the clamped Gibbs chain
/// x -> z(0) -> x(1) -> z(1) -> ... -> x(k) -> z(k), using sampled binary
/// states in the statistics.
pub fn cd_k_gradient<R: Rng>(
    params: &RbmParams,
    x: &[u8],
    k: usize,
    rng: &mut R,
) -> Result<RbmGrad> {
    if k == 0 {
        return Err(Error::Config("contrastive divergence needs k >= 1".into()));
    }
    check_binary(x, params.visible_units(), "visible state")?;
    let d = params.visible_units();
    let m = params.hidden_units();

    let z0 = sample_bernoulli(&cond_hidden(params, x)?, rng);
    let mut xk = x.to_vec();
    let mut zk = z0.clone();
    for _ in 0..k {
        xk = sample_bernoulli(&cond_visible(params, &zk)?, rng);
        zk = sample_bernoulli(&cond_hidden(params, &xk)?, rng);
    }

    let mut grad = RbmGrad::zeros(d, m);
    for j in 0..m {
        grad.hidden_bias[j] = f64::from(z0[j]) - f64::from(zk[j]);
    }
    for i in 0..d {
        grad.visible_bias[i] = f64::from(x[i]) - f64::from(xk[i]);
        for j in 0..m {
            grad.weights[(i, j)] =
                f64::from(x[i]) * f64::from(z0[j]) - f64::from(xk[i]) * f64::from(zk[j]);
        }
    }
    Ok(grad)
}

/// Training configuration for CD-k stochastic gradient ascent.
#[derive(Debug, Clone)]
pub struct RbmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for RbmTrainConfig {
    fn default() -> Self {
        RbmTrainConfig {
            epochs: 100,
            batch_size: 16,
            learning_rate: 0.05,
        }
    }
}

/// Mean squared difference between the data and one reconstruction pass.
fn reconstruction_error(params: &RbmParams, data: &[Vec<u8>]) -> Result<f64> {
    let mut acc = 0.0;
    for x in data {
        let h = cond_hidden(params, x)?;
        let mean_h: Vec<u8> = h.iter().map(|&p| u8::from(p >= 0.5)).collect();
        let v = cond_visible(params, &mean_h)?;
        for (i, &xi) in x.iter().enumerate() {
            let dlt = f64::from(xi) - v[i];
            acc += dlt * dlt;
        }
    }
    Ok(acc / data.len() as f64)
}

/// Mini-batch CD-k training.
///
/// Per-sample chains run independently on split RNG streams, so results are
/// reproducible for a given seed regardless of thread count. The trace
/// records the exact log-likelihood of the data each epoch while the model
/// is small enough to enumerate, otherwise the reconstruction error.
pub fn train<R: Rng>(
    params0: &RbmParams,
    data: &[Vec<u8>],
    k: usize,
    config: &RbmTrainConfig,
    rng: &mut R,
) -> Result<(RbmParams, Trace)> {
    if data.is_empty() {
        return Err(Error::Config("training needs a nonempty data set".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    if config.learning_rate < 0.0 {
        return Err(Error::Config("learning rate must be nonnegative".into()));
    }
    let d = params0.visible_units();
    let m = params0.hidden_units();
    for x in data {
        check_binary(x, d, "training row")?;
    }

    let exact_ok = d + m <= EXACT_SIZE_CAP;
    let mut trace = Trace::new(if exact_ok {
        &["loglik"]
    } else {
        &["recon_error"]
    });
    let mut params = params0.clone();

    let record = |params: &RbmParams, epoch: usize, trace: &mut Trace| -> Result<()> {
        let v = if exact_ok {
            let log_z = log_partition(params)?;
            data.iter()
                .map(|x| log_unnormalized_visible(params, x) - log_z)
                .sum()
        } else {
            reconstruction_error(params, data)?
        };
        trace.push(epoch, &[v]);
        Ok(())
    };
    record(&params, 0, &mut trace)?;

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        // Fisher-Yates reshuffle each epoch from the caller's rng
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for batch in order.chunks(config.batch_size) {
            // split an independent stream per sample so chains can run in
            // parallel without changing the result
            let seeds: Vec<u64> = batch.iter().map(|_| rng.gen()).collect();
            let params_ref = &params;
            let grads = map_indexed(batch.len(), |bi| {
                let mut chain_rng = ChaCha8Rng::seed_from_u64(seeds[bi]);
                cd_k_gradient(params_ref, &data[batch[bi]], k, &mut chain_rng)
            });
            let mut total = RbmGrad::zeros(d, m);
            for g in grads {
                total.add_assign(&g?);
            }
            total.scale(config.learning_rate / batch.len() as f64);
            params.hidden_bias += &total.hidden_bias;
            params.visible_bias += &total.visible_bias;
            params.weights += &total.weights;
        }
        record(&params, epoch, &mut trace)?;
    }
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(d: usize, m: usize) -> RbmParams {
        RbmParams::new(DVector::zeros(m), DVector::zeros(d), DMatrix::zeros(d, m)).unwrap()
    }

    fn random_params(d: usize, m: usize, scale: f64, rng: &mut ChaCha8Rng) -> RbmParams {
        RbmParams::new(
            DVector::from_fn(m, |_, _| rng.gen_range(-scale..scale)),
            DVector::from_fn(d, |_, _| rng.gen_range(-scale..scale)),
            DMatrix::from_fn(d, m, |_, _| rng.gen_range(-scale..scale)),
        )
        .unwrap()
    }

    /// ln p(x) by dumb full enumeration over all 2^(D+M) joint states;
    /// deliberately independent of the marginalized path used by the module.
    fn brute_log_likelihood(params: &RbmParams, x: &[u8]) -> f64 {
        let d = params.visible_units();
        let m = params.hidden_units();
        let mut joint_x = Vec::new();
        let mut all = Vec::new();
        for s in 0..(1usize << d) {
            let xs = bits(s, d);
            for t in 0..(1usize << m) {
                let zs = bits(t, m);
                let e = -energy(params, &xs, &zs).unwrap();
                all.push(e);
                if xs == x {
                    joint_x.push(e);
                }
            }
        }
        log_sum_exp(&joint_x) - log_sum_exp(&all)
    }

    #[test]
    fn energy_known_values() {
        let p = zero_params(3, 2);
        for s in 0..8 {
            for t in 0..4 {
                assert_eq!(energy(&p, &bits(s, 3), &bits(t, 2)).unwrap(), 0.0);
            }
        }

        // identity coupling: E = -sum x_i z_i = -D at the all-ones state
        let p = RbmParams::new(
            DVector::zeros(4),
            DVector::zeros(4),
            DMatrix::identity(4, 4),
        )
        .unwrap();
        assert_eq!(energy(&p, &[1; 4], &[1; 4]).unwrap(), -4.0);

        // x = 0 leaves only the hidden bias term
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(3, 2, 1.0, &mut rng);
        let z = [1u8, 0];
        let expect = -p.hidden_bias[0];
        assert!((energy(&p, &[0, 0, 0], &z).unwrap() - expect).abs() < 1e-15);

        assert!(energy(&p, &[2, 0, 0], &z).is_err());
    }

    #[test]
    fn conditionals_known_values() {
        // zero weights: hidden units ignore x
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = random_params(3, 2, 1.0, &mut rng);
        p.weights = DMatrix::zeros(3, 2);
        let probs = cond_hidden(&p, &[1, 0, 1]).unwrap();
        for j in 0..2 {
            assert!((probs[j] - sigmoid(p.hidden_bias[j])).abs() < 1e-15);
        }

        let p = zero_params(2, 2);
        assert!(cond_hidden(&p, &[0, 1]).unwrap().iter().all(|&v| v == 0.5));
        assert!(cond_visible(&p, &[1, 0]).unwrap().iter().all(|&v| v == 0.5));

        // D=2, M=1, W = (1,1)^T, x = (1,1): activation 2
        let p = RbmParams::new(
            DVector::zeros(1),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        )
        .unwrap();
        let probs = cond_hidden(&p, &[1, 1]).unwrap();
        assert!((probs[0] - sigmoid(2.0)).abs() < 1e-15);
        assert!((probs[0] - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn conditional_factorization_matches_enumeration() {
        // p(z | x) from the joint equals the product of per-unit sigmoids
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let p = random_params(3, 3, 1.5, &mut rng);
            let x = bits(rng.gen_range(0..8), 3);
            let probs = cond_hidden(&p, &x).unwrap();
            let weights: Vec<f64> = (0..8)
                .map(|t| -energy(&p, &x, &bits(t, 3)).unwrap())
                .collect();
            let norm = log_sum_exp(&weights);
            for t in 0..8 {
                let z = bits(t, 3);
                let joint_cond = (weights[t] - norm).exp();
                let product: f64 = (0..3)
                    .map(|j| if z[j] == 1 { probs[j] } else { 1.0 - probs[j] })
                    .product();
                assert!((joint_cond - product).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_gradient_at_zero_params() {
        let p = zero_params(3, 2);
        let x = [1u8, 0, 1];
        let g = exact_gradient(&p, &x).unwrap();
        for j in 0..2 {
            assert!(g.hidden_bias[j].abs() < 1e-12);
        }
        for i in 0..3 {
            assert!((g.visible_bias[i] - (f64::from(x[i]) - 0.5)).abs() < 1e-12);
            for j in 0..2 {
                let expect = 0.5 * f64::from(x[i]) - 0.25;
                assert!((g.weights[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for trial in 0..50 {
            let d = rng.gen_range(2..5);
            let m = rng.gen_range(1..4); // D + M <= 8 here
            let p = random_params(d, m, 0.8, &mut rng);
            let x = bits(rng.gen_range(0..(1 << d)), d);
            let g = exact_gradient(&p, &x).unwrap();

            let check = |get: &dyn Fn(&RbmParams) -> f64,
                         set: &dyn Fn(&mut RbmParams, f64),
                         analytic: f64| {
                let base = get(&p);
                let mut up = p.clone();
                set(&mut up, base + h);
                let mut dn = p.clone();
                set(&mut dn, base - h);
                let fd =
                    (brute_log_likelihood(&up, &x) - brute_log_likelihood(&dn, &x)) / (2.0 * h);
                assert!(
                    (fd - analytic).abs() < 1e-6,
                    "trial {trial}: fd {fd} vs analytic {analytic}"
                );
            };
            for j in 0..m {
                check(
                    &|p| p.hidden_bias[j],
                    &|p, v| p.hidden_bias[j] = v,
                    g.hidden_bias[j],
                );
            }
            for i in 0..d {
                check(
                    &|p| p.visible_bias[i],
                    &|p, v| p.visible_bias[i] = v,
                    g.visible_bias[i],
                );
                for j in 0..m {
                    check(
                        &|p| p.weights[(i, j)],
                        &|p, v| p.weights[(i, j)] = v,
                        g.weights[(i, j)],
                    );
                }
            }
        }
    }

    #[test]
    fn size_cap_is_enforced() {
        let p = zero_params(20, 8);
        assert!(matches!(
            exact_gradient(&p, &[0; 20]),
            Err(Error::SizeCap(_))
        ));
    }

    #[test]
    fn cd_mean_matches_exact_gradient_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = zero_params(2, 2);
        let x = [1u8, 0];
        let draws = 100_000;
        let mut mean = RbmGrad::zeros(2, 2);
        let mut sq = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..draws {
            let g = cd_k_gradient(&p, &x, 1, &mut rng).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    sq[(i, j)] += g.weights[(i, j)] * g.weights[(i, j)];
                }
            }
            mean.add_assign(&g);
        }
        mean.scale(1.0 / draws as f64);
        for i in 0..2 {
            for j in 0..2 {
                let expect = 0.5 * f64::from(x[i]) - 0.25;
                let var = sq[(i, j)] / draws as f64 - mean.weights[(i, j)] * mean.weights[(i, j)];
                let se = (var / draws as f64).sqrt();
                assert!(
                    (mean.weights[(i, j)] - expect).abs() < 3.0 * se + 1e-12,
                    "w[{i}{j}]: {} vs {expect} (se {se})",
                    mean.weights[(i, j)]
                );
            }
        }
    }

    #[test]
    fn cd_saturated_weights_lock_the_chain() {
        // +-20 activations saturate every sigmoid, so the chain repeats one state
        let p = RbmParams::new(
            DVector::from_row_slice(&[20.0, -20.0]),
            DVector::from_row_slice(&[20.0, 20.0]),
            DMatrix::from_row_slice(2, 2, &[20.0, -20.0, 20.0, -20.0]),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = [1u8, 1];
        let first = cd_k_gradient(&p, &x, 1, &mut rng).unwrap().flatten();
        let mut var = 0.0;
        for _ in 0..1000 {
            let g = cd_k_gradient(&p, &x, 1, &mut rng).unwrap().flatten();
            var += (&g - &first).norm_squared();
        }
        assert!(var < 1e-12, "chain failed to lock, variance {var}");
    }

    #[test]
    fn cd_direction_agrees_with_exact_gradient() {
        // CD is biased away from theta = 0, so only directional agreement is
        // claimed: the mean dot product against the exact gradient over many
        // draws clears zero by three standard errors, for k = 1 and k = 5
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_params(3, 2, 0.5, &mut rng);
        let x = [1u8, 0, 1];
        let exact = exact_gradient(&p, &x).unwrap().flatten();
        let draws = 100_000;
        for k in [1usize, 5] {
            let mut dots = Vec::with_capacity(draws);
            for _ in 0..draws {
                let g = cd_k_gradient(&p, &x, k, &mut rng).unwrap().flatten();
                dots.push(g.dot(&exact));
            }
            let mean: f64 = dots.iter().sum::<f64>() / draws as f64;
            let var: f64 =
                dots.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws - 1) as f64;
            let se = (var / draws as f64).sqrt();
            assert!(mean - 3.0 * se > 0.0, "k = {k}: mean dot {mean} (se {se})");
        }
    }

    #[test]
    fn train_pushes_biases_down_on_zero_data() {
        let data = vec![vec![0u8, 0, 0]; 32];
        let p0 = RbmParams::seeded_init(3, 2, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let config = RbmTrainConfig {
            epochs: 200,
            batch_size: 8,
            learning_rate: 0.1,
        };
        let (p, trace) = train(&p0, &data, 1, &config, &mut rng).unwrap();
        for i in 0..3 {
            assert!(sigmoid(p.visible_bias[i]) < 0.1, "unit {i} stayed on");
        }
        let lls = trace.column("loglik").unwrap();
        assert!(lls.last().unwrap() > lls.first().unwrap());
    }

    #[test]
    fn train_concentrates_mass_on_symmetric_data() {
        let data = vec![vec![0u8, 0], vec![1, 1], vec![0, 0], vec![1, 1]];
        let p0 = RbmParams::seeded_init(2, 1, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let config = RbmTrainConfig {
            epochs: 3000,
            batch_size: 4,
            learning_rate: 0.1,
        };
        let (p, _) = train(&p0, &data, 2, &config, &mut rng).unwrap();
        let log_z = log_partition(&p).unwrap();
        let mass = (log_unnormalized_visible(&p, &[0, 0]) - log_z).exp()
            + (log_unnormalized_visible(&p, &[1, 1]) - log_z).exp();
        assert!(mass >= 0.8, "learned mass on {{00, 11}} is {mass}");
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let data = vec![vec![1u8, 0], vec![0, 1]];
        let p0 = RbmParams::seeded_init(2, 2, 19);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let config = RbmTrainConfig {
            epochs: 5,
            batch_size: 2,
            learning_rate: 0.0,
        };
        let (p, _) = train(&p0, &data, 1, &config, &mut rng).unwrap();
        assert_eq!(p.weights, p0.weights);
        assert_eq!(p.hidden_bias, p0.hidden_bias);
        assert_eq!(p.visible_bias, p0.visible_bias);
    }

    #[test]
    fn train_large_model_traces_reconstruction_error() {
        // beyond the enumeration cap the trace falls back to reconstruction
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let d = 30;
        let data: Vec<Vec<u8>> = (0..16)
            .map(|_| (0..d).map(|_| u8::from(rng.gen::<bool>())).collect())
            .collect();
        let p0 = RbmParams::seeded_init(d, 4, 31);
        let config = RbmTrainConfig {
            epochs: 3,
            batch_size: 8,
            learning_rate: 0.05,
        };
        let (_, trace) = train(&p0, &data, 1, &config, &mut rng).unwrap();
        assert!(trace.column("recon_error").is_some());
        assert!(trace.column("loglik").is_none());
        assert!(trace
            .column("recon_error")
            .unwrap()
            .iter()
            .all(|&v| v >= 0.0));
    }

    #[test]
    fn exact_ll_matches_brute_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let p = random_params(3, 2, 1.0, &mut rng);
            let x = bits(rng.gen_range(0..8), 3);
            let fast = exact_log_likelihood(&p, &x).unwrap();
            let brute = brute_log_likelihood(&p, &x);
            assert!((fast - brute).abs() < 1e-12);
        }
    }
}
