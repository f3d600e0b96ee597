//! Stochastic gradient descent with Robbins-Monro learning-rate schedules.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::trace::Trace;
use crate::{Error, Result};

/// Learning-rate schedule gamma^(i), i counted from 1.
///
/// The decaying schedules satisfy the Robbins-Monro conditions
/// sum gamma = inf, sum gamma^2 < inf (the 1/sqrt(i) rate only marginally
/// misses the second sum and is kept for its practical use).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// gamma / i
    InverseIter(f64),
    /// gamma / sqrt(i)
    InverseSqrt(f64),
}

impl Schedule {
    pub fn rate(&self, iter: usize) -> f64 {
        debug_assert!(iter >= 1);
        match self {
            Schedule::Constant(g) => *g,
            Schedule::InverseIter(g) => g / iter as f64,
            Schedule::InverseSqrt(g) => g / (iter as f64).sqrt(),
        }
    }

    fn base(&self) -> f64 {
        match self {
            Schedule::Constant(g) | Schedule::InverseIter(g) | Schedule::InverseSqrt(g) => *g,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SgdConfig {
    pub schedule: Schedule,
    /// Mini-batch size made available to stochastic gradient callbacks.
    pub minibatch: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl SgdConfig {
    fn validate(&self) -> Result<()> {
        if self.schedule.base() <= 0.0 {
            return Err(Error::Config("learning rate base must be positive".into()));
        }
        if self.minibatch == 0 {
            return Err(Error::Config("mini-batch size must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("need at least one iteration".into()));
        }
        Ok(())
    }
}

/// Minimize via phi <- phi - gamma^(i) g(phi).
///
/// The callback receives the current iterate and a seeded rng for its own
/// mini-batch sampling, and returns a stochastic gradient estimate. A NaN
/// component aborts with the offending iterate attached. The trace records
/// the gradient norm per iteration.
pub fn sgd(
    mut gradient: impl FnMut(&DVector<f64>, &mut ChaCha8Rng) -> DVector<f64>,
    phi0: &DVector<f64>,
    config: &SgdConfig,
) -> Result<(DVector<f64>, Trace)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut phi = phi0.clone();
    let mut trace = Trace::new(&["grad_norm"]);
    for iter in 1..=config.max_iters {
        let g = gradient(&phi, &mut rng);
        if g.iter().any(|v| v.is_nan()) {
            return Err(Error::NanGradient {
                iter,
                iterate: phi.iter().copied().collect(),
            });
        }
        trace.push(iter, &[g.norm()]);
        phi -= g * config.schedule.rate(iter);
    }
    Ok((phi, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn zero_gradient_leaves_iterate_unchanged() {
        let phi0 = DVector::from_row_slice(&[1.0, -2.0, 3.0]);
        let config = SgdConfig {
            schedule: Schedule::Constant(0.5),
            minibatch: 1,
            max_iters: 100,
            seed: 0,
        };
        let (phi, _) = sgd(|p, _| DVector::zeros(p.len()), &phi0, &config).unwrap();
        assert_eq!(phi, phi0);
    }

    #[test]
    fn quadratic_constant_rate_contracts_geometrically() {
        let target = DVector::from_row_slice(&[2.0, -1.0]);
        let phi0 = DVector::from_row_slice(&[10.0, 10.0]);
        let config = SgdConfig {
            schedule: Schedule::Constant(0.5),
            minibatch: 1,
            max_iters: 60,
            seed: 0,
        };
        let t = target.clone();
        let (phi, _) = sgd(move |p, _| p - &t, &phi0, &config).unwrap();
        assert!((phi - &target).norm() < 1e-6);

        // contraction factor 1 - gamma = 0.5 per step
        let t = target.clone();
        let mut p = phi0.clone();
        for _ in 0..5 {
            let before = (&p - &target).norm();
            let g = &p - &t;
            p -= g * 0.5;
            let after = (&p - &target).norm();
            assert!((after - 0.5 * before).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_inverse_iter_converges() {
        let target = DVector::from_row_slice(&[1.5]);
        let phi0 = DVector::from_row_slice(&[40.0]);
        let config = SgdConfig {
            schedule: Schedule::InverseIter(1.0),
            minibatch: 1,
            max_iters: 100_000,
            seed: 0,
        };
        let t = target.clone();
        let (phi, _) = sgd(move |p, _| p - &t, &phi0, &config).unwrap();
        assert!((phi - &target).norm() < 1e-6);
    }

    #[test]
    fn noisy_quadratic_inverse_iter_averages_out() {
        // unit-variance gradient noise: final error < 0.05 averaged over seeds
        let target = DVector::from_row_slice(&[0.7, -0.3]);
        let mut total = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let config = SgdConfig {
                schedule: Schedule::InverseIter(1.0),
                minibatch: 1,
                max_iters: 100_000,
                seed,
            };
            let t = target.clone();
            let (phi, _) = sgd(
                move |p, rng| {
                    let noise = DVector::from_fn(2, |_, _| {
                        let v: f64 = StandardNormal.sample(rng);
                        v
                    });
                    p - &t + noise
                },
                &DVector::from_row_slice(&[5.0, 5.0]),
                &config,
            )
            .unwrap();
            total += (phi - &target).norm();
        }
        let avg = total / seeds as f64;
        assert!(avg < 0.05, "average final error {avg}");
    }

    #[test]
    fn inverse_sqrt_schedule_rates() {
        let s = Schedule::InverseSqrt(2.0);
        assert!((s.rate(1) - 2.0).abs() < 1e-15);
        assert!((s.rate(4) - 1.0).abs() < 1e-15);
        assert!((s.rate(100) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_aborts_with_iterate() {
        let config = SgdConfig {
            schedule: Schedule::Constant(0.1),
            minibatch: 1,
            max_iters: 50,
            seed: 0,
        };
        let result = sgd(
            |p, rng: &mut ChaCha8Rng| {
                if rng.gen::<f64>() < 0.2 {
                    DVector::from_row_slice(&[f64::NAN])
                } else {
                    p.clone()
                }
            },
            &DVector::from_row_slice(&[1.0]),
            &config,
        );
        match result {
            Err(Error::NanGradient { iter, iterate }) => {
                assert!(iter >= 1);
                assert_eq!(iterate.len(), 1);
            }
            other => panic!("expected NaN abort, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = SgdConfig {
            schedule: Schedule::Constant(0.0),
            minibatch: 1,
            max_iters: 5,
            seed: 0,
        };
        assert!(sgd(|p, _| p.clone(), &DVector::zeros(1), &bad).is_err());

        let bad = SgdConfig {
            schedule: Schedule::Constant(0.1),
            minibatch: 0,
            max_iters: 5,
            seed: 0,
        };
        assert!(sgd(|p, _| p.clone(), &DVector::zeros(1), &bad).is_err());
    }
}
