//! Posterior models, point estimates, the moment fit of `lambda`, error
//! metrics and seeded synthetic benchmark problems.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::linalg::{distance_sq, ensure_same_shape, nuclear_norm, DenseMatrix};
use crate::samplers::prox::{ensure_binary_mask, masked_distance_sq};
use crate::samplers::{chain_rng, run_chain, ChainConfig, ChainOutput, Gamma2Mode, HyperState, LambdaMode, ModelSpec};

/// Noise sd of the default benchmark protocol.
pub const DEFAULT_NOISE_SD: f64 = 0.1;
/// Probability that an entry is hidden in the default completion protocol.
pub const DEFAULT_HIDE_PROB: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoisingModel {
    pub y: DenseMatrix,
    pub hyper: HyperState,
    pub lambda_mode: LambdaMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionModel {
    pub y: DenseMatrix,
    pub mask: DenseMatrix,
    pub hyper: HyperState,
    pub lambda_mode: LambdaMode,
}

impl CompletionModel {
    pub fn new(y: DenseMatrix, mask: DenseMatrix, hyper: HyperState, lambda_mode: LambdaMode) -> Result<Self> {
        ensure_same_shape(&y, &mask, "mask")?;
        ensure_binary_mask(&mask)?;
        if mask.iter().all(|&v| v == 0.0) {
            return arg_err("mask has no observed entries");
        }
        Ok(Self { y, mask, hyper, lambda_mode })
    }
}

fn log_posterior_from(resid_sq: f64, norm: f64, dim: usize, hyper: &HyperState) -> f64 {
    crate::samplers::chain::log_posterior_terms(resid_sq, norm, dim, hyper)
}

/// `-||Y - X||_F^2 / (2 gamma2) - (lambda / sqrt(gamma2)) ||X||_* + nm log(lambda / sqrt(gamma2))`,
/// the last term dropped when `lambda = 0`.
pub fn log_posterior_denoise(x: &DenseMatrix, model: &DenoisingModel) -> Result<f64> {
    ensure_same_shape(x, &model.y, "denoising posterior")?;
    Ok(log_posterior_from(distance_sq(&model.y, x), nuclear_norm(x)?, x.len(), &model.hyper))
}

/// As [`log_posterior_denoise`] with the masked residual `||M o (Y - X)||_F^2`.
pub fn log_posterior_complete(x: &DenseMatrix, model: &CompletionModel) -> Result<f64> {
    ensure_same_shape(x, &model.y, "completion posterior")?;
    Ok(log_posterior_from(masked_distance_sq(&model.y, x, &model.mask), nuclear_norm(x)?, x.len(), &model.hyper))
}

/// Entrywise mean of the retained draws.
pub fn posterior_mean(output: &ChainOutput) -> Result<DenseMatrix> {
    if output.retained == 0 {
        return arg_err("chain has no retained draws");
    }
    if output.draws.is_empty() {
        return Ok(output.draw_mean.clone());
    }
    let mut sum = DenseMatrix::zeros(output.draws[0].nrows(), output.draws[0].ncols());
    for d in &output.draws {
        sum += d;
    }
    Ok(sum / output.draws.len() as f64)
}

/// Moment estimate `lambda = nm / mean ||X_i||_*` from `E ||X||_* = nm / lambda`.
pub fn fit_lambda_moment(dataset: &[DenseMatrix]) -> Result<f64> {
    let (mean, dim) = mean_nuclear_norm(dataset)?;
    if !(mean > 0.0) {
        return arg_err("mean nuclear norm is zero");
    }
    Ok(dim as f64 / mean)
}

/// Mean nuclear norm of a uniformly shaped dataset and `nm`.
pub fn mean_nuclear_norm(dataset: &[DenseMatrix]) -> Result<(f64, usize)> {
    let Some(first) = dataset.first() else {
        return arg_err("dataset is empty");
    };
    let shape = first.shape();
    if dataset.iter().any(|x| x.shape() != shape) {
        return arg_err("dataset matrices must share one shape");
    }
    let norms = dataset.iter().map(nuclear_norm).collect::<Result<Vec<_>>>()?;
    Ok((norms.iter().sum::<f64>() / norms.len() as f64, shape.0 * shape.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sse: f64,
    /// SSE over all `nm` entries divided by `nm`.
    pub mse_all: f64,
    /// Mean squared error over hidden (`mask = 0`) entries, when a mask is given.
    pub mse_hidden: Option<f64>,
    /// Mean squared error over observed entries, when a mask is given.
    pub mse_observed: Option<f64>,
}

pub fn metrics(truth: &DenseMatrix, estimate: &DenseMatrix, mask: Option<&DenseMatrix>) -> Result<Metrics> {
    ensure_same_shape(truth, estimate, "metrics")?;
    let sse = distance_sq(truth, estimate);
    let mse_all = sse / truth.len() as f64;
    let (mse_hidden, mse_observed) = match mask {
        None => (None, None),
        Some(mask) => {
            ensure_same_shape(truth, mask, "metrics mask")?;
            let mut acc = [(0.0, 0usize); 2];
            for ((t, e), m) in truth.iter().zip(estimate.iter()).zip(mask.iter()) {
                let slot = &mut acc[(*m != 0.0) as usize];
                slot.0 += (t - e).powi(2);
                slot.1 += 1;
            }
            let mean = |(s, n): (f64, usize)| if n > 0 { Some(s / n as f64) } else { None };
            (mean(acc[0]), mean(acc[1]))
        }
    };
    Ok(Metrics { sse, mse_all, mse_hidden, mse_observed })
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// The default comparison grid: 10 values from 0.01 to 100.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(0.01, 100.0, 10)
}

/// Rank-`rank` matrix `A B^T` with standard normal factors scaled by
/// `1 / sqrt(rank)`, so entries have unit variance.
pub fn synthetic_low_rank<R: Rng + ?Sized>(rows: usize, cols: usize, rank: usize, rng: &mut R) -> DenseMatrix {
    let a = DenseMatrix::from_fn(rows, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = DenseMatrix::from_fn(cols, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    a * b.transpose() / (rank as f64).sqrt()
}

pub fn add_noise<R: Rng + ?Sized>(x: &DenseMatrix, sd: f64, rng: &mut R) -> DenseMatrix {
    x.map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
}

/// Binary mask hiding each entry independently with probability `p_hidden`
/// (at least one entry always stays observed).
pub fn random_mask<R: Rng + ?Sized>(rows: usize, cols: usize, p_hidden: f64, rng: &mut R) -> DenseMatrix {
    let mut m = DenseMatrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < p_hidden { 0.0 } else { 1.0 });
    if m.iter().all(|&v| v == 0.0) {
        m[(0, 0)] = 1.0;
    }
    m
}

/// Baseline completion: observed entries kept, hidden entries set to the mean
/// of the observed ones.
pub fn naive_impute(y: &DenseMatrix, mask: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_same_shape(y, mask, "naive imputation")?;
    let (s, n) =
        y.iter().zip(mask.iter()).filter(|(_, &m)| m != 0.0).fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    if n == 0 {
        return arg_err("mask has no observed entries");
    }
    let mean = s / n as f64;
    Ok(y.zip_map(mask, |v, m| if m != 0.0 { v } else { mean }))
}

/// A seeded benchmark problem: truth, observations and (for completion) a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub truth: DenseMatrix,
    pub y: DenseMatrix,
    pub mask: Option<DenseMatrix>,
    pub noise_sd: f64,
}

impl Problem {
    /// Low-rank truth plus Gaussian noise, all entries observed.
    pub fn denoising(rows: usize, cols: usize, rank: usize, noise_sd: f64, seed: u64) -> Self {
        let mut rng = chain_rng(seed, u64::MAX);
        let truth = synthetic_low_rank(rows, cols, rank, &mut rng);
        let y = add_noise(&truth, noise_sd, &mut rng);
        Self { truth, y, mask: None, noise_sd }
    }

    /// Low-rank truth, entries hidden with probability `p_hidden`, noise on
    /// the observed entries; hidden entries of `y` are zero.
    pub fn completion(rows: usize, cols: usize, rank: usize, noise_sd: f64, p_hidden: f64, seed: u64) -> Self {
        let mut rng = chain_rng(seed, u64::MAX);
        let truth = synthetic_low_rank(rows, cols, rank, &mut rng);
        let mask = random_mask(rows, cols, p_hidden, &mut rng);
        let y = add_noise(&truth, noise_sd, &mut rng).component_mul(&mask);
        Self { truth, y, mask: Some(mask), noise_sd }
    }

    /// Chain descriptor with `gamma2` fixed at the true noise variance.
    pub fn spec(&self, lambda: LambdaMode) -> ModelSpec {
        let g2 = Gamma2Mode::Fixed(self.noise_sd * self.noise_sd);
        match &self.mask {
            None => ModelSpec::denoise(self.y.clone(), lambda, g2),
            Some(m) => ModelSpec::complete(self.y.clone(), m.clone(), lambda, g2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub mean: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
}

impl TraceSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((p * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
        Some(Self { mean: v.iter().sum::<f64>() / v.len() as f64, median: q(0.5), q05: q(0.05), q95: q(0.95) })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub posterior_mean: DenseMatrix,
    pub metrics: Option<Metrics>,
    /// Summary of `lambda` over the retained iterations.
    pub lambda: TraceSummary,
    pub acceptance: f64,
    pub output: ChainOutput,
}

/// Run one chain and score its posterior mean against `truth` when given.
pub fn run_experiment<R: Rng + ?Sized>(
    spec: &ModelSpec,
    truth: Option<&DenseMatrix>,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<ExperimentResult> {
    let output = run_chain(spec, cfg, rng)?;
    let mean = posterior_mean(&output)?;
    let mask = match &spec.kind {
        crate::samplers::ModelKind::Complete { mask, .. } => Some(mask),
        _ => None,
    };
    let metrics = truth.map(|t| metrics(t, &mean, mask)).transpose()?;
    let lambdas = output.retained_values(&output.traces.lambda, cfg);
    Ok(ExperimentResult {
        posterior_mean: mean,
        metrics,
        lambda: TraceSummary::of(&lambdas).expect("retained draws exist"),
        acceptance: output.acceptance_rates["x"],
        output,
    })
}

/// Fixed-`lambda` runs over `grid` in parallel; run `i` draws from
/// [`chain_rng`]`(cfg.seed, i)`.
pub fn run_lambda_grid(problem: &Problem, grid: &[f64], cfg: &ChainConfig) -> Result<Vec<(f64, ExperimentResult)>> {
    grid.par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let mut rng = chain_rng(cfg.seed, i as u64);
            let spec = problem.spec(LambdaMode::Fixed(lambda));
            run_experiment(&spec, Some(&problem.truth), cfg, &mut rng).map(|r| (lambda, r))
        })
        .collect()
}
