//! Deterministic linear autoencoders: closed-form PCA and dictionary
//! learning by alternating least squares with l1 sparse coding.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::parallel::map_indexed;
use crate::trace::Trace;
use crate::{Error, Result};

/// Learned dictionary and the sparse codes of the training samples.
#[derive(Debug, Clone)]
pub struct Dictionary {
    /// D x M atom matrix with column norms <= 1.
    pub w: DMatrix<f64>,
    pub codes: Vec<DVector<f64>>,
    pub objective: f64,
}

impl Dictionary {
    /// Number of nonzero coefficients per sample.
    pub fn code_sparsity(&self) -> Vec<usize> {
        self.codes
            .iter()
            .map(|z| z.iter().filter(|&&v| v != 0.0).count())
            .collect()
    }
}

fn data_mean(data: &[DVector<f64>]) -> DVector<f64> {
    let d = data[0].len();
    data.iter().fold(DVector::zeros(d), |acc, x| acc + x) / data.len() as f64
}

/// Top-M eigenvectors of the sample covariance, centered internally.
///
/// Columns are ordered by descending eigenvalue; each column's sign is fixed
/// so its largest-magnitude entry is positive.
pub fn pca_fit(data: &[DVector<f64>], m: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if data.is_empty() {
        return Err(Error::Config("pca needs a nonempty data set".into()));
    }
    let d = data[0].len();
    if m == 0 || m > d {
        return Err(Error::Config(format!(
            "pca needs 1 <= M <= D, got M = {m}, D = {d}"
        )));
    }
    let mean = data_mean(data);
    let mut cov = DMatrix::zeros(d, d);
    for x in data {
        let c = x - &mean;
        cov += &c * c.transpose();
    }
    cov /= data.len() as f64;

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut w = DMatrix::zeros(d, m);
    for (col, &idx) in order.iter().take(m).enumerate() {
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        let mut lead = 0;
        for i in 1..d {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            v = -v;
        }
        w.set_column(col, &v);
    }
    Ok((w, mean))
}

/// Reconstruction objective sum_n ||c_n - W W^T c_n||^2 on centered data.
pub fn pca_objective(data: &[DVector<f64>], w: &DMatrix<f64>, mean: &DVector<f64>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("pca objective needs data".into()));
    }
    if w.nrows() != data[0].len() || mean.len() != data[0].len() {
        return Err(Error::Config(
            "dimension mismatch between data and encoder".into(),
        ));
    }
    let terms = map_indexed(data.len(), |n| {
        let c = &data[n] - mean;
        let z = w.transpose() * &c;
        (c - w * z).norm_squared()
    });
    Ok(terms.iter().sum())
}

/// Smallest principal angle complement between the column spaces of two
/// matrices: 0 means identical subspaces, pi/2 orthogonal ones.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let svd = (qa.transpose() * qb).svd(false, false);
    let min_sigma = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .clamp(0.0, 1.0);
    min_sigma.acos()
}

/// One pass of ISTA for min_z ||x - W z||^2 + lambda ||z||_1.
///
/// Gradient step 1/L on the smooth part followed by soft thresholding at
/// lambda / (2L), with L the largest eigenvalue of W^T W.
fn sparse_code(
    w: &DMatrix<f64>,
    lipschitz: f64,
    x: &DVector<f64>,
    z0: &DVector<f64>,
    lambda: f64,
    inner_tol: f64,
    max_inner: usize,
) -> DVector<f64> {
    let mut z = z0.clone();
    if lipschitz <= 0.0 {
        return z;
    }
    let step = 1.0 / lipschitz;
    let thresh = lambda * step / 2.0;
    for _ in 0..max_inner {
        let grad = w.transpose() * (w * &z - x);
        let mut max_delta: f64 = 0.0;
        for i in 0..z.len() {
            let raw = z[i] - step * grad[i];
            let new = raw.signum() * (raw.abs() - thresh).max(0.0);
            max_delta = max_delta.max((new - z[i]).abs());
            z[i] = new;
        }
        if max_delta < inner_tol {
            break;
        }
    }
    z
}

fn penalized_objective(
    data: &[DVector<f64>],
    w: &DMatrix<f64>,
    codes: &[DVector<f64>],
    lambda: f64,
) -> f64 {
    let n = data.len() as f64;
    let recon: f64 = data
        .iter()
        .zip(codes)
        .map(|(x, z)| (x - w * z).norm_squared())
        .sum();
    let l1: f64 = codes
        .iter()
        .map(|z| z.iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    (recon + lambda * l1) / n
}

fn largest_eigenvalue_gram(w: &DMatrix<f64>) -> f64 {
    let gram = w.transpose() * w;
    gram.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Alternating minimization of (1/N) sum ||x_n - W z_n||^2 + lambda/N sum
/// ||z_n||_1 with the atom-norm constraint ||w_m|| <= 1.
///
/// Codes start at zero and are refit by ISTA; the dictionary update solves
/// the constrained least-squares problem one column at a time (each column
/// subproblem is an isotropic quadratic, so projecting its unconstrained
/// minimizer onto the unit ball is exact). Neither half-step can increase
/// the objective. The trace records the objective after the code half-step
/// and after the dictionary half-step.
pub fn dict_learn(
    data: &[DVector<f64>],
    m: usize,
    lambda: f64,
    max_outer: usize,
    tol: f64,
    seed: u64,
) -> Result<(Dictionary, Trace)> {
    if lambda < 0.0 {
        return Err(Error::Config(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    if data.is_empty() || m == 0 {
        return Err(Error::Config(
            "dict_learn needs data and M >= 1 atoms".into(),
        ));
    }
    if m > data.len() {
        return Err(Error::Config(format!(
            "cannot seed {m} atoms from {} samples",
            data.len()
        )));
    }
    let d = data[0].len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::zeros(d, m);
    for (col, i) in index_sample(&mut rng, data.len(), m)
        .into_iter()
        .enumerate()
    {
        let mut atom = data[i].clone();
        let norm = atom.norm();
        if norm > 1.0 {
            atom /= norm;
        }
        w.set_column(col, &atom);
    }
    let mut codes: Vec<DVector<f64>> = vec![DVector::zeros(m); data.len()];
    let mut trace = Trace::new(&["objective_codes", "objective"]);
    let mut obj = penalized_objective(data, &w, &codes, lambda);

    for iter in 1..=max_outer {
        // code half-step
        let lipschitz = largest_eigenvalue_gram(&w);
        let w_ref = &w;
        let codes_prev = codes;
        codes = map_indexed(data.len(), |n| {
            sparse_code(
                w_ref,
                lipschitz,
                &data[n],
                &codes_prev[n],
                lambda,
                1e-8,
                10_000,
            )
        });
        let obj_codes = penalized_objective(data, &w, &codes, lambda);

        // dictionary half-step: block coordinate descent over atoms
        let mut gram = DMatrix::<f64>::zeros(m, m);
        let mut cross = DMatrix::<f64>::zeros(d, m);
        for (x, z) in data.iter().zip(&codes) {
            gram += z * z.transpose();
            cross += x * z.transpose();
        }
        for a in 0..m {
            let gaa = gram[(a, a)];
            if gaa <= 1e-300 {
                continue; // unused atom, leave it in place
            }
            let residual = cross.column(a) - &w * gram.column(a);
            let mut atom = w.column(a) + residual / gaa;
            let norm = atom.norm();
            if norm > 1.0 {
                atom /= norm;
            }
            w.set_column(a, &atom);
        }
        let new_obj = penalized_objective(data, &w, &codes, lambda);
        trace.push(iter, &[obj_codes, new_obj]);
        let gain = obj - new_obj;
        obj = new_obj;
        if gain.abs() < tol {
            break;
        }
    }

    Ok((
        Dictionary {
            w,
            codes,
            objective: obj,
        },
        trace,
    ))
}
