//! Seeded, configuration-driven experiment runner for the lvlearn toolkit.
//!
//! Every subcommand writes `trace.csv` and `result.json` into its run
//! directory (plus `ranks.csv` for pagerank); reruns with the same seed and
//! configuration are byte-identical. Flags override values from an optional
//! JSON config file whose keys carry the long flag names.

mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use lvlearn::approx_inference as ai;
use lvlearn::autoencoders;
use lvlearn::clustering;
use lvlearn::divergences as dv;
use lvlearn::expfam::{ExpFamModel, NaturalParams, Observation};
use lvlearn::latent_em as lem;
use lvlearn::num::ExtendedReal;
use lvlearn::pagerank;
use lvlearn::rbm;
use lvlearn::Trace;

/// Errors carrying the process exit code: 2 for configuration problems,
/// 3 for numeric/estimation failures inside a run.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<lvlearn::Error> for CliError {
    fn from(e: lvlearn::Error) -> Self {
        match e {
            lvlearn::Error::Config(_) => CliError {
                code: 2,
                message: e.to_string(),
            },
            other => CliError {
                code: 3,
                message: other.to_string(),
            },
        }
    }
}

#[derive(Parser)]
#[command(
    name = "lvlearn",
    about = "Latent-variable learning and approximate inference experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// RNG seed; required for stochastic subcommands.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory for trace.csv / result.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// K-means clustering on a CSV dataset.
    Kmeans {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Gaussian mixture EM.
    GmmEm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        /// Freeze every covariance at eps * I (the K-means limit).
        #[arg(long)]
        frozen_cov: Option<f64>,
    },
    /// Bernoulli mixture EM on binary data.
    BernEm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Probabilistic PCA by EM.
    Ppca {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        frozen_sigma2: Option<f64>,
    },
    /// Closed-form PCA.
    Pca {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Dictionary learning with l1 sparse coding.
    Dict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        max_outer: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// RBM training with CD-k.
    RbmCd {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Exact Ising posterior by enumeration.
    IsingExact {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ising: IsingArgs,
    },
    /// Gibbs sampling of the Ising posterior.
    IsingGibbs {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ising: IsingArgs,
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// Mean-field VI on the Ising posterior.
    IsingMfvi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ising: IsingArgs,
        #[arg(long)]
        max_sweeps: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// I- and M-projections of a 1-D Gaussian mixture.
    Project {
        #[command(flatten)]
        common: Common,
        /// Comma-separated component weights.
        #[arg(long)]
        weights: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        means: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        vars: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        init_mean: Option<f64>,
        #[arg(long)]
        init_var: Option<f64>,
    },
    /// Divergence battery over two finite pmfs.
    Divergence {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        q: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        alpha: Option<f64>,
    },
    /// REINFORCE / reparametrization gradient estimators and their
    /// paired-run variance comparison.
    Gradest {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        x: Option<f64>,
        /// Logit of the Bernoulli variational family.
        #[arg(long, allow_negative_numbers = true)]
        phi: Option<f64>,
        /// Second component mean of the two-Gaussian joint.
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        /// Gaussian family location.
        #[arg(long, allow_negative_numbers = true)]
        b: Option<f64>,
        /// Gaussian family log-scale.
        #[arg(long, allow_negative_numbers = true)]
        s: Option<f64>,
        #[arg(long)]
        m_samples: Option<usize>,
    },
    /// PageRank over an edge-list CSV.
    Pagerank {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long)]
        d: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Log-likelihood and ELBO across a parameter grid for the
    /// two-component Gaussian demo model.
    ElboDemo {
        #[command(flatten)]
        common: Common,
        /// start:stop:step
        #[arg(long, allow_hyphen_values = true)]
        theta_grid: Option<String>,
        /// Variational probability of the second component.
        #[arg(long, allow_negative_numbers = true)]
        phi: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        x: Option<f64>,
    },
}

#[derive(Args, Clone)]
struct IsingArgs {
    /// Instance JSON ({height, width, eta1, eta2, x}).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// HxW grid; the observation is sampled from the model with --seed.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    eta1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eta2: Option<f64>,
}

// ---------------------------------------------------------------------------
// config merging
// ---------------------------------------------------------------------------

fn load_config(common: &Common) -> Result<Value, CliError> {
    match &common.config {
        None => Ok(Value::Null),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::config(format!("{}: invalid config JSON ({e})", path.display()))
            })
        }
    }
}

/// Flag value if given, else the config entry under `key`.
fn pick<T: Clone + serde::de::DeserializeOwned>(
    flag: &Option<T>,
    cfg: &Value,
    key: &str,
) -> Result<Option<T>, CliError> {
    if let Some(v) = flag {
        return Ok(Some(v.clone()));
    }
    match cfg.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| CliError::config(format!("config key '{key}': {e}"))),
    }
}

fn need<T>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::config(format!("missing required value '{key}' (flag or config)")))
}

fn out_dir(common: &Common, cfg: &Value, name: &str) -> Result<io::RunDir, CliError> {
    let dir =
        pick(&common.out, cfg, "out")?.unwrap_or_else(|| PathBuf::from(format!("runs/{name}")));
    io::RunDir::prepare(&dir, common.force)
}

fn seed_for(common: &Common, cfg: &Value) -> Result<u64, CliError> {
    need(pick(&common.seed, cfg, "seed")?, "seed")
}

/// One generator per run, split into independent streams per component.
fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse()
                .map_err(|e| CliError::config(format!("bad {what} entry ({e})")))
        })
        .collect()
}

fn parse_grid(text: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = text.split(['x', 'X']).collect();
    if parts.len() != 2 {
        return Err(CliError::config(format!(
            "grid must look like 4x4, got '{text}'"
        )));
    }
    let h = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::config("bad grid height"))?;
    let w = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::config("bad grid width"))?;
    Ok((h, w))
}

fn parse_range(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::config(format!(
            "range must look like -5:5:0.1, got '{text}'"
        )));
    }
    let nums: Result<Vec<f64>, CliError> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|e| CliError::config(format!("bad range bound ({e})")))
        })
        .collect();
    let nums = nums?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if step <= 0.0 || stop < start {
        return Err(CliError::config("range needs start <= stop and step > 0"));
    }
    let count = ((stop - start) / step).round() as usize;
    Ok((0..=count).map(|i| start + step * i as f64).collect())
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

fn mat_json(m: &DMatrix<f64>) -> Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect();
    json!(rows)
}

fn ext_json(v: ExtendedReal) -> Value {
    match v {
        ExtendedReal::Finite(x) => json!(x),
        ExtendedReal::PosInfinite => json!("+inf"),
        ExtendedReal::NegInfinite => json!("-inf"),
    }
}

fn load_ising(
    args: &IsingArgs,
    common: &Common,
    cfg: &Value,
) -> Result<ai::IsingInstance, CliError> {
    let instance = pick(&args.instance, cfg, "instance")?;
    if let Some(path) = instance {
        let file = io::read_ising(&path)?;
        return Ok(ai::IsingInstance::new(
            file.height,
            file.width,
            file.x,
            file.eta1,
            file.eta2,
        )?);
    }
    let grid = need(pick(&args.grid, cfg, "grid")?, "grid")?;
    let (h, w) = parse_grid(&grid)?;
    let eta1 = need(pick(&args.eta1, cfg, "eta1")?, "eta1")?;
    let eta2 = need(pick(&args.eta2, cfg, "eta2")?, "eta2")?;
    let seed = seed_for(common, cfg)?;
    Ok(ai::sample_instance(h, w, eta1, eta2, seed)?)
}

/// The demo joint: z ~ Bern(0.5), x|z=0 ~ N(2,1), x|z=1 ~ N(theta,1).
fn demo_joint(theta: f64) -> Result<lem::DiscreteLatentJoint, CliError> {
    Ok(lem::DiscreteLatentJoint::new(
        dv::FinitePmf::new(vec![0.5, 0.5])?,
        ExpFamModel::Gaussian(1),
        vec![
            NaturalParams::gaussian1(2.0, 1.0)?,
            NaturalParams::gaussian1(theta, 1.0)?,
        ],
    )?)
}

// ---------------------------------------------------------------------------
// subcommand bodies
// ---------------------------------------------------------------------------

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Kmeans {
            common,
            data,
            k,
            max_iters,
            tol,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "kmeans")?;
            let data = io::read_dataset(&need(pick(&data, &cfg, "data")?, "data")?)?;
            let k = need(pick(&k, &cfg, "k")?, "k")?;
            let max_iters = pick(&max_iters, &cfg, "max-iters")?.unwrap_or(200);
            let tol = pick(&tol, &cfg, "tol")?.unwrap_or(1e-9);
            let seed = seed_for(&common, &cfg)?;
            let (state, trace) = clustering::fit(
                &data,
                k,
                &clustering::KMeansInit::RandomPoints { seed },
                max_iters,
                tol,
            )?;
            run.write_trace(&trace)?;
            run.write_result(&json!({
                "prototypes": state.prototypes.iter().map(vec_json).collect::<Vec<_>>(),
                "assignments": state.assignments,
                "objective": state.objective,
                "empty_clusters": state.empty_clusters,
                "iterations": state.iterations,
            }))
        }
        Command::GmmEm {
            common,
            data,
            k,
            max_iters,
            tol,
            frozen_cov,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "gmm-em")?;
            let data = io::read_dataset(&need(pick(&data, &cfg, "data")?, "data")?)?;
            let k = need(pick(&k, &cfg, "k")?, "k")?;
            let seed = seed_for(&common, &cfg)?;
            let config = lem::EmConfig {
                max_iters: pick(&max_iters, &cfg, "max-iters")?.unwrap_or(500),
                tol: pick(&tol, &cfg, "tol")?.unwrap_or(1e-8),
                frozen_covariance: pick(&frozen_cov, &cfg, "frozen-cov")?,
            };
            let (params, trace) = lem::em_fit(
                lem::MixtureKind::Gmm,
                &data,
                k,
                &lem::EmInit::KMeans { seed },
                &config,
            )?;
            let lem::MixtureParams::Gaussian(p) = params else {
                unreachable!()
            };
            let loglik = lem::gmm_log_likelihood(&p, &data)?;
            run.write_trace(&trace)?;
            run.write_result(&json!({
                "weights": p.weights,
                "means": p.means.iter().map(vec_json).collect::<Vec<_>>(),
                "covariances": p.covariances.iter().map(mat_json).collect::<Vec<_>>(),
                "loglik": loglik,
            }))
        }
        Command::BernEm {
            common,
            data,
            k,
            max_iters,
            tol,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "bern-em")?;
            let data = io::read_dataset(&need(pick(&data, &cfg, "data")?, "data")?)?;
            let k = need(pick(&k, &cfg, "k")?, "k")?;
            let seed = seed_for(&common, &cfg)?;
            let config = lem::EmConfig {
                max_iters: pick(&max_iters, &cfg, "max-iters")?.unwrap_or(500),
                tol: pick(&tol, &cfg, "tol")?.unwrap_or(1e-8),
                frozen_covariance: None,
            };
            let (params, trace) = lem::em_fit(
                lem::MixtureKind::BernoulliMixture,
                &data,
                k,
                &lem::EmInit::KMeans { seed },
                &config,
            )?;
            let lem::MixtureParams::Bernoulli(p) = params else {
                unreachable!()
            };
            let loglik = lem::bern_log_likelihood(&p, &data)?;
            run.write_trace(&trace)?;
            run.write_result(&json!({
                "weights": p.weights,
                "probs": p.probs.iter().map(vec_json).collect::<Vec<_>>(),
                "loglik": loglik,
            }))
        }
        Command::Ppca {
            common,
            data,
            m,
            max_iters,
            tol,
            frozen_sigma2,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "ppca")?;
            let data = io::read_dataset(&need(pick(&data, &cfg, "data")?, "data")?)?;
            let m = need(pick(&m, &cfg, "m")?, "m")?;
            let seed = seed_for(&common, &cfg)?;
            let config = lem::PpcaConfig {
                max_iters: pick(&max_iters, &cfg, "max-iters")?.unwrap_or(500),
                tol: pick(&tol, &cfg, "tol")?.unwrap_or(1e-8),
                frozen_sigma2: pick(&frozen_sigma2, &cfg, "frozen-sigma2")?,
            };
            let (params, trace) =
                lem::ppca_fit(&data, m, &lem::PpcaInit::Seeded { seed }, &config)?;
            let loglik = lem::ppca_log_likelihood(&params, &data)?;
            run.write_trace(&trace)?;
            run.write_result(&json!({
                "w": mat_json(&params.w),
                "mu": vec_json(&params.mu),
                "sigma2": params.sigma2,
                "loglik": loglik,
            }))
        }
        Command::Pca { common, data, m } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "pca")?;
            let data = io::read_dataset(&need(pick(&data, &cfg, "data")?, "data")?)?;
            let m = need(pick(&m, &cfg, "m")?, "m")?;
            let (w, mean) = autoencoders::pca_fit(&data, m)?;
            let objective = autoencoders::pca_objective(&data, &w, &mean)?;
            let mut trace = Trace::new(&["objective"]);
            trace.push(0, &[objective]);
            run.write_trace(&trace)?;
            run.write_result(&json!({
                "w": mat_json(&w),
                "mean": vec_json(&mean),
                "objective": objective,
            }))
        }
        Command::Dict {
            common,
            data,
            m,
            lambda,
            max_outer,
            tol,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "dict")?;
            let data = io::read_dataset(&need(pick(&data, &cfg, "data")?, "data")?)?;
            let m = need(pick(&m, &cfg, "m")?, "m")?;
            let lambda = need(pick(&lambda, &cfg, "lambda")?, "lambda")?;
            let max_outer = pick(&max_outer, &cfg, "max-outer")?.unwrap_or(100);
            let tol = pick(&tol, &cfg, "tol")?.unwrap_or(1e-10);
            let seed = seed_for(&common, &cfg)?;
            let (dict, trace) = autoencoders::dict_learn(&data, m, lambda, max_outer, tol, seed)?;
            run.write_trace(&trace)?;
            run.write_result(&json!({
                "w": mat_json(&dict.w),
                "objective": dict.objective,
                "code_sparsity": dict.code_sparsity(),
            }))
        }
        Command::RbmCd {
            common,
            data,
            hidden,
            k,
            epochs,
            batch,
            lr,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "rbm-cd")?;
            let data = io::read_binary_dataset(&need(pick(&data, &cfg, "data")?, "data")?)?;
            let hidden = need(pick(&hidden, &cfg, "hidden")?, "hidden")?;
            let k = pick(&k, &cfg, "k")?.unwrap_or(1);
            let seed = seed_for(&common, &cfg)?;
            let config = rbm::RbmTrainConfig {
                epochs: pick(&epochs, &cfg, "epochs")?.unwrap_or(100),
                batch_size: pick(&batch, &cfg, "batch")?.unwrap_or(16),
                learning_rate: pick(&lr, &cfg, "lr")?.unwrap_or(0.05),
            };
            let visible = data[0].len();
            let params0 = rbm::RbmParams::seeded_init(visible, hidden, seed);
            let mut rng = rng_for(seed, 1);
            let (params, trace) = rbm::train(&params0, &data, k, &config, &mut rng)?;
            run.write_trace(&trace)?;
            run.write_result(&json!({
                "hidden_bias": vec_json(&params.hidden_bias),
                "visible_bias": vec_json(&params.visible_bias),
                "weights": mat_json(&params.weights),
            }))
        }
        Command::IsingExact { common, ising } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "ising-exact")?;
            let instance = load_ising(&ising, &common, &cfg)?;
            let exact = ai::ising_exact(&instance)?;
            let mut trace = Trace::new(&["log_evidence"]);
            trace.push(0, &[exact.log_evidence]);
            run.write_trace(&trace)?;
            run.write_result(&json!({
                "x": instance.x,
                "marginals": exact.marginals,
                "log_evidence": exact.log_evidence,
            }))
        }
        Command::IsingGibbs {
            common,
            ising,
            sweeps,
            burn_in,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "ising-gibbs")?;
            let instance = load_ising(&ising, &common, &cfg)?;
            let sweeps = pick(&sweeps, &cfg, "sweeps")?.unwrap_or(100_000);
            let burn_in = pick(&burn_in, &cfg, "burn-in")?.unwrap_or(1000);
            let seed = seed_for(&common, &cfg)?;
            let mut rng = rng_for(seed, 2);
            let marginals = ai::gibbs_ising(&instance, sweeps, burn_in, &mut rng)?;
            let mut result = json!({
                "x": instance.x,
                "marginals": marginals,
                "sweeps": sweeps,
                "burn_in": burn_in,
            });
            let mut trace = Trace::new(&["max_abs_error"]);
            if instance.sites() <= ai::ISING_EXACT_SITE_CAP {
                let exact = ai::ising_exact(&instance)?;
                let max_err = marginals
                    .iter()
                    .zip(&exact.marginals)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                result["exact_marginals"] = json!(exact.marginals);
                result["max_abs_error"] = json!(max_err);
                trace.push(sweeps, &[max_err]);
            }
            run.write_trace(&trace)?;
            run.write_result(&result)
        }
        Command::IsingMfvi {
            common,
            ising,
            max_sweeps,
            tol,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "ising-mfvi")?;
            let instance = load_ising(&ising, &common, &cfg)?;
            let max_sweeps = pick(&max_sweeps, &cfg, "max-sweeps")?.unwrap_or(200);
            let tol = pick(&tol, &cfg, "tol")?.unwrap_or(1e-10);
            let (state, trace) = ai::mfvi_ising(&instance, max_sweeps, tol)?;
            run.write_trace(&trace)?;
            let mut result = json!({
                "x": instance.x,
                "q1": state.q1,
                "free_energy": state.free_energy,
            });
            if instance.sites() <= ai::ISING_EXACT_SITE_CAP {
                let exact = ai::ising_exact(&instance)?;
                result["kl_exact"] = json!(ai::kl_posterior_vs_factorized(&exact, &state.q1));
            }
            run.write_result(&result)
        }
        Command::Project {
            common,
            weights,
            means,
            vars,
            init_mean,
            init_var,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "project")?;
            let weights = parse_list(
                &need(pick(&weights, &cfg, "weights")?, "weights")?,
                "weight",
            )?;
            let means = parse_list(&need(pick(&means, &cfg, "means")?, "means")?, "mean")?;
            let vars = parse_list(&need(pick(&vars, &cfg, "vars")?, "vars")?, "variance")?;
            let target = ai::GaussianMixture1d::new(weights, means, vars)?;
            let m_proj = ai::m_projection_gaussian(&target);
            let mut config = ai::IProjectionConfig::default();
            if let Some(m) = pick(&init_mean, &cfg, "init-mean")? {
                config.init.mean = m;
            }
            if let Some(v) = pick(&init_var, &cfg, "init-var")? {
                config.init.variance = v;
            }
            let i_proj = ai::i_projection_gaussian(&target, &config)?;
            let trace = Trace::new(&[]);
            run.write_trace(&trace)?;
            run.write_result(&json!({
                "m_projection": { "mean": m_proj.mean, "variance": m_proj.variance },
                "i_projection": { "mean": i_proj.mean, "variance": i_proj.variance },
                "kl_q_p_at_m_projection": ai::kl_gaussian_to_mixture(&m_proj, &target)?,
                "kl_q_p_at_i_projection": ai::kl_gaussian_to_mixture(&i_proj, &target)?,
                "kl_p_q_at_m_projection": ai::kl_mixture_to_gaussian(&target, &m_proj)?,
            }))
        }
        Command::Divergence {
            common,
            p,
            q,
            alpha,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "divergence")?;
            let p = dv::FinitePmf::new(parse_list(&need(pick(&p, &cfg, "p")?, "p")?, "p")?)?;
            let q = dv::FinitePmf::new(parse_list(&need(pick(&q, &cfg, "q")?, "q")?, "q")?)?;
            let alpha = pick(&alpha, &cfg, "alpha")?.unwrap_or(2.0);
            let (var_kl, t_kl) = dv::f_divergence_variational(&p, &q, &dv::FGenerator::KlForward)?;
            let (var_js, _) = dv::f_divergence_variational(&p, &q, &dv::FGenerator::JensenShannon)?;
            let trace = Trace::new(&[]);
            run.write_trace(&trace)?;
            run.write_result(&json!({
                "kl_pq": ext_json(dv::kl(&p, &q)?),
                "kl_qp": ext_json(dv::kl(&q, &p)?),
                "cross_entropy": ext_json(dv::cross_entropy(&p, &q)?),
                "entropy_p": dv::generalized_entropy(&p, &dv::GeneralizedLoss::Log)?,
                "jensen_shannon": dv::jensen_shannon(&p, &q)?,
                "alpha": alpha,
                "alpha_divergence": ext_json(dv::alpha_divergence(&p, &q, alpha)?),
                "f_closed_kl": ext_json(dv::f_divergence_closed(&p, &q, &dv::FGenerator::KlForward)?),
                "f_variational_kl": { "value": ext_json(var_kl), "t": t_kl },
                "f_variational_js": ext_json(var_js),
            }))
        }
        Command::Gradest {
            common,
            x,
            phi,
            theta,
            b,
            s,
            m_samples,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "gradest")?;
            let x = pick(&x, &cfg, "x")?.unwrap_or(0.0);
            let phi = pick(&phi, &cfg, "phi")?.unwrap_or(0.3);
            let theta = pick(&theta, &cfg, "theta")?.unwrap_or(0.0);
            let b = pick(&b, &cfg, "b")?.unwrap_or(0.3);
            let s = pick(&s, &cfg, "s")?.unwrap_or(-0.1);
            let m_samples = pick(&m_samples, &cfg, "m-samples")?.unwrap_or(10_000);
            let seed = seed_for(&common, &cfg)?;

            let joint = demo_joint(theta)?;
            let obs = Observation::Scalar(x);
            let mut rng = rng_for(seed, 3);
            let reinforce = ai::reinforce_gradient(&joint, &obs, phi, m_samples, &mut rng)?;
            let reinforce_exact = ai::reinforce_exact_gradient(&joint, &obs, phi)?;
            let mut rng = rng_for(seed, 4);
            let (rp_b, rp_s) = ai::reparam_gradient(b, s, x, m_samples, &mut rng)?;
            let (rp_b_exact, rp_s_exact) = ai::reparam_exact_gradient(b, s, x);
            let cmp = ai::compare_gradient_variance(b, s, x, m_samples, seed)?;
            let trace = Trace::new(&[]);
            run.write_trace(&trace)?;
            run.write_result(&json!({
                "reinforce": { "estimate": reinforce, "exact": reinforce_exact, "phi": phi },
                "reparam": {
                    "grad_b": rp_b, "grad_s": rp_s,
                    "exact_b": rp_b_exact, "exact_s": rp_s_exact,
                },
                "variance_comparison": {
                    "reparam_mean": cmp.reparam_mean,
                    "reparam_variance": cmp.reparam_variance,
                    "reinforce_mean": cmp.reinforce_mean,
                    "reinforce_variance": cmp.reinforce_variance,
                    "exact": cmp.exact,
                    "m_samples": m_samples,
                },
            }))
        }
        Command::Pagerank {
            common,
            edges,
            d,
            tol,
            max_iters,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "pagerank")?;
            let (n_pages, edge_list) =
                io::read_edges(&need(pick(&edges, &cfg, "edges")?, "edges")?)?;
            let d = pick(&d, &cfg, "d")?.unwrap_or(0.85);
            let tol = pick(&tol, &cfg, "tol")?.unwrap_or(1e-12);
            let max_iters = pick(&max_iters, &cfg, "max-iters")?.unwrap_or(100_000);
            let graph = pagerank::LinkGraph::from_edges(n_pages, &edge_list)?;
            let ranks = pagerank::solve(&graph, d, tol, max_iters)?;
            run.write_ranks(&ranks)?;
            let trace = Trace::new(&[]);
            run.write_trace(&trace)?;
            run.write_result(&json!({ "d": d, "ranks": ranks }))
        }
        Command::ElboDemo {
            common,
            theta_grid,
            phi,
            x,
        } => {
            let cfg = load_config(&common)?;
            let run = out_dir(&common, &cfg, "elbo-demo")?;
            let grid = parse_range(
                &pick(&theta_grid, &cfg, "theta-grid")?.unwrap_or_else(|| "-5:5:0.1".into()),
            )?;
            let phi = pick(&phi, &cfg, "phi")?.unwrap_or(0.3);
            if !(0.0..=1.0).contains(&phi) {
                return Err(CliError::config("phi must lie in [0, 1]"));
            }
            let x = pick(&x, &cfg, "x")?.unwrap_or(0.0);
            let q = dv::FinitePmf::new(vec![1.0 - phi, phi])?;
            let obs = Observation::Scalar(x);
            let mut rows = Vec::with_capacity(grid.len());
            let mut max_gap: f64 = f64::NEG_INFINITY;
            for &theta in &grid {
                let joint = demo_joint(theta)?;
                let ll = joint.log_marginal(&obs)?;
                let bound = lem::elbo(&joint, &q, &obs, lem::ElboForm::EnergyEntropy)?.as_f64();
                max_gap = max_gap.max(bound - ll);
                rows.push(vec![theta, ll, bound]);
            }
            run.write_csv("trace.csv", "theta,loglik,elbo", &rows)?;
            run.write_result(&json!({
                "phi": phi,
                "x": x,
                "rows": rows.len(),
                "max_elbo_minus_loglik": max_gap,
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
