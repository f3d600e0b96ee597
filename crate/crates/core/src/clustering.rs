//! K-means clustering by alternating assignment and prototype updates.

use nalgebra::DVector;
use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::parallel::map_slice;
use crate::trace::Trace;
use crate::{Error, Result};

/// Prototypes, hard assignments, and the quantization objective
/// sum_n ||x_n - mu_{z_n}||^2.
#[derive(Debug, Clone)]
pub struct KMeansState {
    pub prototypes: Vec<DVector<f64>>,
    /// Cluster index per sample (the one-hot vectors' nonzero positions).
    pub assignments: Vec<usize>,
    pub objective: f64,
    /// Clusters that ended up empty and kept their previous prototype.
    pub empty_clusters: Vec<usize>,
    pub iterations: usize,
}

/// Prototype initialization.
#[derive(Debug, Clone)]
pub enum KMeansInit {
    /// K distinct data points drawn without replacement.
    RandomPoints {
        seed: u64,
    },
    Given(Vec<DVector<f64>>),
}

fn squared_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

/// Assign each point to the closest prototype; ties go to the lowest index.
pub fn e_step(data: &[DVector<f64>], prototypes: &[DVector<f64>]) -> Vec<usize> {
    map_slice(data, |x| {
        let mut best = 0;
        let mut best_d = squared_distance(x, &prototypes[0]);
        for (k, proto) in prototypes.iter().enumerate().skip(1) {
            let d = squared_distance(x, proto);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    })
}

/// Mean of the points assigned to each cluster. Empty clusters keep their
/// previous prototype and are reported in the returned flag list.
pub fn m_step(
    data: &[DVector<f64>],
    assignments: &[usize],
    previous: &[DVector<f64>],
) -> (Vec<DVector<f64>>, Vec<usize>) {
    let k = previous.len();
    let dim = previous[0].len();
    let mut sums = vec![DVector::<f64>::zeros(dim); k];
    let mut counts = vec![0usize; k];
    for (x, &z) in data.iter().zip(assignments) {
        sums[z] += x;
        counts[z] += 1;
    }
    let mut empty = Vec::new();
    let prototypes = (0..k)
        .map(|j| {
            if counts[j] == 0 {
                empty.push(j);
                previous[j].clone()
            } else {
                &sums[j] / counts[j] as f64
            }
        })
        .collect();
    (prototypes, empty)
}

/// Quantization objective for given assignments.
pub fn objective(data: &[DVector<f64>], prototypes: &[DVector<f64>], assignments: &[usize]) -> f64 {
    let dists = crate::parallel::map_indexed(data.len(), |n| {
        squared_distance(&data[n], &prototypes[assignments[n]])
    });
    dists.iter().sum()
}

/// Alternate E and M steps until the objective decrease drops below `tol`
/// or the assignments stop changing.
pub fn fit(
    data: &[DVector<f64>],
    k: usize,
    init: &KMeansInit,
    max_iters: usize,
    tol: f64,
) -> Result<(KMeansState, Trace)> {
    if data.is_empty() {
        return Err(Error::Config("kmeans needs a nonempty data set".into()));
    }
    if k == 0 || k > data.len() {
        return Err(Error::Config(format!(
            "kmeans needs 1 <= K <= N, got K = {k}, N = {}",
            data.len()
        )));
    }
    let mut prototypes = match init {
        KMeansInit::RandomPoints { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            index_sample(&mut rng, data.len(), k)
                .into_iter()
                .map(|i| data[i].clone())
                .collect::<Vec<_>>()
        }
        KMeansInit::Given(protos) => {
            if protos.len() != k {
                return Err(Error::Config(format!(
                    "init supplies {} prototypes for K = {k}",
                    protos.len()
                )));
            }
            protos.clone()
        }
    };

    let mut trace = Trace::new(&["objective"]);
    let mut assignments = e_step(data, &prototypes);
    let mut obj = objective(data, &prototypes, &assignments);
    trace.push(0, &[obj]);
    let mut empty_clusters = Vec::new();
    let mut iterations = 0;

    for iter in 1..=max_iters {
        let (new_protos, empty) = m_step(data, &assignments, &prototypes);
        prototypes = new_protos;
        empty_clusters = empty;
        let new_assignments = e_step(data, &prototypes);
        let new_obj = objective(data, &prototypes, &new_assignments);
        trace.push(iter, &[new_obj]);
        iterations = iter;
        let unchanged = new_assignments == assignments;
        let gain = obj - new_obj;
        assignments = new_assignments;
        obj = new_obj;
        if unchanged || gain < tol {
            break;
        }
    }

    Ok((
        KMeansState {
            prototypes,
            assignments,
            objective: obj,
            empty_clusters,
            iterations,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn scalar_data(values: &[f64]) -> Vec<DVector<f64>> {
        values
            .iter()
            .map(|&v| DVector::from_row_slice(&[v]))
            .collect()
    }

    #[test]
    fn e_step_nearest_and_tie_break() {
        let protos = scalar_data(&[-1.0, 3.0]);
        let a = e_step(&scalar_data(&[0.0]), &protos);
        assert_eq!(a, vec![0]);

        // equidistant point goes to the lowest index
        let protos = scalar_data(&[-1.0, 1.0]);
        let a = e_step(&scalar_data(&[0.0]), &protos);
        assert_eq!(a, vec![0]);

        let protos = scalar_data(&[5.0]);
        let a = e_step(&scalar_data(&[0.0, 1.0, 100.0]), &protos);
        assert_eq!(a, vec![0, 0, 0]);
    }

    #[test]
    fn m_step_means_and_empty_clusters() {
        let data = scalar_data(&[1.0, 3.0]);
        let previous = scalar_data(&[0.0, 7.0]);
        let (protos, empty) = m_step(&data, &[0, 0], &previous);
        assert!((protos[0][0] - 2.0).abs() < 1e-15);
        assert_eq!(protos[1][0], 7.0); // untouched
        assert_eq!(empty, vec![1]);
    }

    #[test]
    fn fit_two_separated_pairs() {
        // enumerating all 2-partitions of {0, 0.1, 10, 10.1} shows the
        // optimum splits the pairs, with objective 4 * 0.05^2 = 0.01
        let data = scalar_data(&[0.0, 0.1, 10.0, 10.1]);
        let (state, trace) =
            fit(&data, 2, &KMeansInit::RandomPoints { seed: 1 }, 100, 1e-12).unwrap();
        let mut protos: Vec<f64> = state.prototypes.iter().map(|p| p[0]).collect();
        protos.sort_by(f64::total_cmp);
        assert!((protos[0] - 0.05).abs() < 1e-12);
        assert!((protos[1] - 10.05).abs() < 1e-12);
        assert!((state.objective - 0.01).abs() < 1e-12);
        assert!(!trace.is_empty());
    }

    #[test]
    fn fit_k_equals_n_reaches_zero() {
        let data = scalar_data(&[1.0, 2.0, 5.0]);
        let (state, _) = fit(&data, 3, &KMeansInit::RandomPoints { seed: 3 }, 50, 1e-12).unwrap();
        assert!(state.objective < 1e-12);
    }

    #[test]
    fn fit_k1_closed_form() {
        // single cluster: prototype is the mean, objective is N * biased
        // variance summed over dimensions
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<DVector<f64>> = (0..40)
            .map(|_| DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let (state, _) = fit(&data, 1, &KMeansInit::RandomPoints { seed: 0 }, 50, 1e-12).unwrap();
        let n = data.len() as f64;
        let mean = data.iter().fold(DVector::zeros(3), |acc, x| acc + x) / n;
        assert!((&state.prototypes[0] - &mean).abs().max() < 1e-12);
        let expect: f64 = data.iter().map(|x| (x - &mean).norm_squared()).sum();
        assert!((state.objective - expect).abs() < 1e-10);
    }

    #[test]
    fn objective_monotone_and_terminates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..20 {
            let data: Vec<DVector<f64>> = (0..120)
                .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-4.0..4.0)))
                .collect();
            let (state, trace) =
                fit(&data, 4, &KMeansInit::RandomPoints { seed }, 500, 0.0).unwrap();
            let objs = trace.column("objective").unwrap();
            for w in objs.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "objective rose: {} -> {}", w[0], w[1]);
            }
            assert!(state.iterations < 500, "failed to reach a fixed point");
        }
    }

    #[test]
    fn permutation_invariance() {
        let data = scalar_data(&[0.0, 0.2, 4.0, 4.2, 9.0]);
        let protos = scalar_data(&[0.1, 4.1, 9.0]);
        let swapped = scalar_data(&[4.1, 0.1, 9.0]);
        let a = e_step(&data, &protos);
        let b = e_step(&data, &swapped);
        let obj_a = objective(&data, &protos, &a);
        let obj_b = objective(&data, &swapped, &b);
        assert!((obj_a - obj_b).abs() < 1e-15);
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        let data = scalar_data(&[1.0, 2.0]);
        assert!(matches!(
            fit(&data, 3, &KMeansInit::RandomPoints { seed: 0 }, 10, 1e-9),
            Err(Error::Config(_))
        ));
    }
}
