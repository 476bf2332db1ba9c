//! Chain orchestration: model descriptors, the fixed-scan Gibbs driver and
//! parallel multi-chain runs.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adapt::StepAdapter;
use super::hyper::{gamma2_update_from_stats, lambda_gibbs_update, HyperState};
use super::prox::{
    ensure_binary_mask, masked_distance_sq, posterior_mode, prox_grad_completion_step, prox_langevin_denoise_step,
    prox_langevin_prior_step, ProxTarget,
};
use super::svd_gibbs::svd_gibbs_step;
use super::{ChainConfig, ChainState, SCALAR_TARGET_ACCEPTANCE};
use crate::distributions::NndParams;
use crate::error::{NndError, Result};
use crate::linalg::{distance_sq, ensure_finite, ensure_same_shape, DenseMatrix};

/// Initial proposal sd of the `log gamma2` random walk.
const GAMMA2_INITIAL_STEP: f64 = 0.5;

/// Soft-impute sweeps allowed when locating the completion starting point.
const MODE_SWEEPS: usize = 2_000;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Prior { rows: usize, cols: usize },
    Denoise { y: DenseMatrix },
    Complete { y: DenseMatrix, mask: DenseMatrix },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaMode {
    Fixed(f64),
    Adaptive { initial: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gamma2Mode {
    Fixed(f64),
    Sampled { initial: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    Prox,
    SvdGibbs,
}

/// Everything needed to run a chain apart from the run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub lambda: LambdaMode,
    pub gamma2: Gamma2Mode,
    pub kernel: Kernel,
    /// Starting point; defaults to zero for the prior and to the (masked) data otherwise.
    pub initial_x: Option<DenseMatrix>,
}

impl ModelSpec {
    pub fn prior(rows: usize, cols: usize, lambda: f64) -> Self {
        Self {
            kind: ModelKind::Prior { rows, cols },
            lambda: LambdaMode::Fixed(lambda),
            gamma2: Gamma2Mode::Fixed(1.0),
            kernel: Kernel::Prox,
            initial_x: None,
        }
    }

    pub fn denoise(y: DenseMatrix, lambda: LambdaMode, gamma2: Gamma2Mode) -> Self {
        Self { kind: ModelKind::Denoise { y }, lambda, gamma2, kernel: Kernel::Prox, initial_x: None }
    }

    pub fn complete(y: DenseMatrix, mask: DenseMatrix, lambda: LambdaMode, gamma2: Gamma2Mode) -> Self {
        Self { kind: ModelKind::Complete { y, mask }, lambda, gamma2, kernel: Kernel::Prox, initial_x: None }
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_initial(mut self, x: DenseMatrix) -> Self {
        self.initial_x = Some(x);
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        match &self.kind {
            ModelKind::Prior { rows, cols } => (*rows, *cols),
            ModelKind::Denoise { y } | ModelKind::Complete { y, .. } => y.shape(),
        }
    }

    /// Reject contradictory or malformed descriptors.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: &str| Err(NndError::Config(m.to_string()));
        match self.lambda {
            LambdaMode::Fixed(l) if !(l >= 0.0 && l.is_finite()) => {
                return cfg_err("fixed lambda must be finite and non-negative")
            }
            LambdaMode::Adaptive { initial } if !(initial > 0.0 && initial.is_finite()) => {
                return cfg_err("initial lambda must be positive")
            }
            _ => {}
        }
        match self.gamma2 {
            Gamma2Mode::Fixed(g) | Gamma2Mode::Sampled { initial: g } if !(g > 0.0 && g.is_finite()) => {
                return cfg_err("gamma2 must be positive and finite")
            }
            _ => {}
        }
        match &self.kind {
            ModelKind::Prior { rows, cols } => {
                if *rows == 0 || *cols == 0 {
                    return cfg_err("matrix dimensions must be positive");
                }
                match self.lambda {
                    LambdaMode::Fixed(l) if l > 0.0 => {}
                    LambdaMode::Fixed(_) => return cfg_err("the prior needs lambda > 0"),
                    LambdaMode::Adaptive { .. } => {
                        return cfg_err("adaptive lambda needs data (denoise or complete model)")
                    }
                }
                if matches!(self.gamma2, Gamma2Mode::Sampled { .. }) {
                    return cfg_err("gamma2 cannot be sampled without data");
                }
            }
            ModelKind::Denoise { y } => {
                ensure_finite(y, "data")?;
                if y.is_empty() {
                    return cfg_err("data matrix is empty");
                }
            }
            ModelKind::Complete { y, mask } => {
                if self.kernel == Kernel::SvdGibbs {
                    return cfg_err(
                        "the SVD-Gibbs kernel is only available for fully observed data; use the prox kernel for completion",
                    );
                }
                ensure_finite(y, "data")?;
                ensure_same_shape(y, mask, "mask")?;
                ensure_binary_mask(mask)?;
                if mask.iter().all(|&v| v == 0.0) {
                    return cfg_err("mask has no observed entries");
                }
            }
        }
        if let Some(x0) = &self.initial_x {
            ensure_finite(x0, "initial state")?;
            if x0.shape() != self.shape() {
                return cfg_err("initial state shape does not match the model");
            }
        }
        Ok(())
    }

    fn initial_hyper(&self) -> Result<HyperState> {
        let lambda = match self.lambda {
            LambdaMode::Fixed(l) => l,
            LambdaMode::Adaptive { initial } => initial,
        };
        match self.gamma2 {
            Gamma2Mode::Fixed(g) => HyperState::new(lambda, g, true),
            Gamma2Mode::Sampled { initial } => HyperState::new(lambda, initial, false),
        }
    }

    /// Start of the chain unless `initial_x` is set: the prox kernels start
    /// at the posterior mode under the initial hyperparameters, which removes
    /// the long drift from the data towards the shrunken bulk; SVD-Gibbs
    /// starts at `Y`, since it works on log singular values and a
    /// rank-deficient mode would sit on that boundary.
    fn initial_point(&self, hyper: &HyperState) -> Result<DenseMatrix> {
        if let Some(x0) = &self.initial_x {
            return Ok(x0.clone());
        }
        let (lambda, gamma2) = (hyper.lambda, hyper.gamma2);
        Ok(match (&self.kind, self.kernel) {
            (ModelKind::Prior { rows, cols }, _) => DenseMatrix::zeros(*rows, *cols),
            (ModelKind::Denoise { y }, Kernel::SvdGibbs) => y.clone(),
            (ModelKind::Denoise { y }, Kernel::Prox) => {
                posterior_mode(&ProxTarget::Denoise { y, lambda, gamma2 }, MODE_SWEEPS)?.unwrap_or_else(|| y.clone())
            }
            (ModelKind::Complete { y, mask }, _) => {
                posterior_mode(&ProxTarget::Complete { y, mask, lambda, gamma2 }, MODE_SWEEPS)?
                    .unwrap_or_else(|| y.component_mul(mask))
            }
        })
    }
}

/// Per-iteration scalar traces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Traces {
    pub iter: Vec<usize>,
    pub nuclear_norm: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub delta: Vec<f64>,
    pub log_post: Vec<f64>,
    pub accepted: Vec<bool>,
}

impl Traces {
    fn with_capacity(n: usize) -> Self {
        Self {
            iter: Vec::with_capacity(n),
            nuclear_norm: Vec::with_capacity(n),
            lambda: Vec::with_capacity(n),
            gamma2: Vec::with_capacity(n),
            delta: Vec::with_capacity(n),
            log_post: Vec::with_capacity(n),
            accepted: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.iter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iter.is_empty()
    }

    /// Acceptance rate of the matrix update over the last `window` iterations.
    pub fn terminal_acceptance(&self, window: usize) -> f64 {
        let w = window.min(self.accepted.len());
        if w == 0 {
            return 0.0;
        }
        let tail = &self.accepted[self.accepted.len() - w..];
        tail.iter().filter(|&&a| a).count() as f64 / w as f64
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Retained draws (empty when `keep_draws` is off).
    pub draws: Vec<DenseMatrix>,
    /// Entrywise mean of the retained draws.
    pub draw_mean: DenseMatrix,
    pub retained: usize,
    pub traces: Traces,
    /// Acceptance rate per update type (`"x"`, and `"gamma2"` when sampled).
    pub acceptance_rates: BTreeMap<String, f64>,
    pub final_delta: f64,
    pub final_hyper: HyperState,
    pub wall_time: Duration,
}

impl ChainOutput {
    /// Values of `trace` at the retained iterations.
    pub fn retained_values(&self, trace: &[f64], cfg: &ChainConfig) -> Vec<f64> {
        (0..trace.len()).filter(|&t| cfg.is_retained(t)).map(|t| trace[t]).collect()
    }
}

/// Deterministic generator for chain `index` of a run seeded with `seed`:
/// one ChaCha stream per chain.
pub fn chain_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Log posterior used for the traces: Gaussian data term plus the conditional
/// prior `NND(lambda / sqrt(gamma2))` including its `nm log(rate)` normalizer.
pub(crate) fn log_posterior_terms(resid_sq: f64, norm: f64, dim: usize, hyper: &HyperState) -> f64 {
    let rate = hyper.prior_rate();
    let prior = if rate > 0.0 { dim as f64 * rate.ln() - rate * norm } else { 0.0 };
    -resid_sq / (2.0 * hyper.gamma2) + prior
}

/// Run one chain for `spec` under `cfg`.
///
/// Each iteration updates `X`, then `gamma2` (if sampled), then `lambda` (if
/// adaptive). Step sizes adapt during burn-in and are then frozen at their
/// averaged value unless `adapt_during_burn_in_only` is off.
pub fn run_chain<R: rand::Rng + ?Sized>(spec: &ModelSpec, cfg: &ChainConfig, rng: &mut R) -> Result<ChainOutput> {
    cfg.validate()?;
    spec.validate()?;
    let start = Instant::now();
    let (rows, cols) = spec.shape();
    let dim = rows * cols;
    let mut hyper = spec.initial_hyper()?;
    let x0 = spec.initial_point(&hyper)?;
    let mut state = match spec.kernel {
        Kernel::Prox => ChainState::ambient(x0, cfg.initial_delta)?,
        Kernel::SvdGibbs => ChainState::svd(&x0, cfg.initial_delta)?,
    };
    state.fault_skip_mh = cfg.fault_skip_mh;
    if let Some(k) = cfg.sigma_substeps {
        state.sigma_substeps = k;
    }
    let prior_params = match spec.kind {
        ModelKind::Prior { rows, cols } => Some(NndParams::new(hyper.lambda, rows, cols)?),
        _ => None,
    };
    let adaptive_lambda = matches!(spec.lambda, LambdaMode::Adaptive { .. });

    let mut x_adapt = StepAdapter::new(cfg.initial_delta, cfg.target_acceptance, cfg);
    let mut g_adapt = StepAdapter::new(GAMMA2_INITIAL_STEP, SCALAR_TARGET_ACCEPTANCE, cfg);
    let mut g_counter = super::AcceptanceCounter::default();

    let mut traces = Traces::with_capacity(cfg.iterations);
    let mut draws = Vec::with_capacity(if cfg.keep_draws { cfg.retained() } else { 0 });
    let mut sum = DenseMatrix::zeros(rows, cols);
    let mut retained = 0usize;

    for t in 0..cfg.iterations {
        state.delta = x_adapt.delta;
        let accepted = match (&spec.kind, spec.kernel) {
            (ModelKind::Prior { .. }, Kernel::Prox) => {
                prox_langevin_prior_step(&mut state, prior_params.as_ref().unwrap(), rng)?
            }
            (ModelKind::Prior { .. }, Kernel::SvdGibbs) => svd_gibbs_step(&mut state, None, &hyper, rng)?,
            (ModelKind::Denoise { y }, Kernel::Prox) => prox_langevin_denoise_step(&mut state, y, &hyper, rng)?,
            (ModelKind::Denoise { y }, Kernel::SvdGibbs) => svd_gibbs_step(&mut state, Some(y), &hyper, rng)?,
            (ModelKind::Complete { y, mask }, _) => prox_grad_completion_step(&mut state, y, mask, &hyper, rng)?,
        };
        let adapting = cfg.adapts_at(t + 1);
        if adapting {
            x_adapt.update_prob(state.accept_prob);
        } else if !x_adapt.is_frozen() {
            x_adapt.freeze();
        }

        let x = state.matrix();
        let norm = state.nuclear_norm();
        let (resid, n_obs) = match &spec.kind {
            ModelKind::Prior { .. } => (0.0, 0),
            ModelKind::Denoise { y } => (distance_sq(y, &x), dim),
            ModelKind::Complete { y, mask } => {
                (masked_distance_sq(y, &x, mask), mask.iter().filter(|&&v| v != 0.0).count())
            }
        };

        if !hyper.gamma2_fixed {
            let acc =
                gamma2_update_from_stats(&mut hyper, n_obs, dim, resid, norm, g_adapt.delta, rng, cfg.fault_skip_mh)?;
            g_counter.record(acc);
            if adapting {
                g_adapt.update(acc);
            } else if !g_adapt.is_frozen() {
                g_adapt.freeze();
            }
        }
        if adaptive_lambda {
            lambda_gibbs_update(&mut hyper, norm, rows, cols, rng)?;
        }

        traces.iter.push(t);
        traces.nuclear_norm.push(norm);
        traces.lambda.push(hyper.lambda);
        traces.gamma2.push(hyper.gamma2);
        traces.delta.push(state.delta);
        traces.log_post.push(log_posterior_terms(resid, norm, dim, &hyper));
        traces.accepted.push(accepted);

        if cfg.is_retained(t) {
            sum += &x;
            retained += 1;
            if cfg.keep_draws {
                draws.push(x);
            }
        }
    }

    let mut acceptance_rates = BTreeMap::new();
    acceptance_rates.insert("x".to_string(), state.x_updates.rate());
    if !hyper.gamma2_fixed {
        acceptance_rates.insert("gamma2".to_string(), g_counter.rate());
    }
    let draw_mean = if retained > 0 { sum / retained as f64 } else { sum };
    Ok(ChainOutput {
        draws,
        draw_mean,
        retained,
        traces,
        acceptance_rates,
        final_delta: x_adapt.delta,
        final_hyper: hyper,
        wall_time: start.elapsed(),
    })
}

/// Run `n_chains` independent chains in parallel; chain `i` uses
/// [`chain_rng`]`(cfg.seed, i)`. Output order follows the chain index.
pub fn run_chains(spec: &ModelSpec, cfg: &ChainConfig, n_chains: usize) -> Result<Vec<ChainOutput>> {
    (0..n_chains)
        .into_par_iter()
        .map(|i| {
            let mut rng = chain_rng(cfg.seed, i as u64);
            run_chain(spec, cfg, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::gaussian_matrix;

    fn small_cfg(iterations: usize, burn_in: usize, thinning: usize) -> ChainConfig {
        ChainConfig { iterations, burn_in, thinning, seed: 7, ..ChainConfig::default() }
    }

    #[test]
    fn trace_and_draw_counts() {
        let cfg = small_cfg(1_000, 100, 7);
        let out = run_chain(&ModelSpec::prior(2, 3, 1.0), &cfg, &mut chain_rng(1, 0)).unwrap();
        assert_eq!(out.traces.len(), 1_000);
        assert_eq!(out.draws.len(), (1_000 - 100) / 7);
        assert_eq!(out.retained, out.draws.len());
        assert!(out.draws.iter().all(|d| d.shape() == (2, 3)));
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let mut rng = chain_rng(9, 0);
        let y = gaussian_matrix(3, 4, &mut rng);
        let spec = ModelSpec::denoise(y, LambdaMode::Adaptive { initial: 1.0 }, Gamma2Mode::Sampled { initial: 1.0 });
        let cfg = small_cfg(400, 100, 1);
        for kernel in [Kernel::Prox, Kernel::SvdGibbs] {
            let spec = spec.clone().with_kernel(kernel);
            let a = run_chain(&spec, &cfg, &mut chain_rng(3, 0)).unwrap();
            let b = run_chain(&spec, &cfg, &mut chain_rng(3, 0)).unwrap();
            assert_eq!(a.traces, b.traces);
            assert_eq!(a.draws, b.draws);
        }
    }

    #[test]
    fn parallel_chains_match_sequential_runs() {
        let cfg = small_cfg(300, 50, 1);
        let spec = ModelSpec::prior(2, 2, 1.0);
        let par = run_chains(&spec, &cfg, 3).unwrap();
        for (i, out) in par.iter().enumerate() {
            let seq = run_chain(&spec, &cfg, &mut chain_rng(cfg.seed, i as u64)).unwrap();
            assert_eq!(out.traces, seq.traces);
        }
        assert_ne!(par[0].traces, par[1].traces);
    }

    #[test]
    fn svd_gibbs_for_completion_is_a_config_error() {
        let y = DenseMatrix::zeros(2, 2);
        let spec = ModelSpec::complete(
            y,
            DenseMatrix::from_element(2, 2, 1.0),
            LambdaMode::Fixed(1.0),
            Gamma2Mode::Fixed(1.0),
        )
        .with_kernel(Kernel::SvdGibbs);
        let err = run_chain(&spec, &ChainConfig::default(), &mut chain_rng(0, 0)).unwrap_err();
        assert!(matches!(err, NndError::Config(_)));
    }

    #[test]
    fn contradictory_prior_specs_are_rejected() {
        let mut spec = ModelSpec::prior(2, 2, 1.0);
        spec.lambda = LambdaMode::Adaptive { initial: 1.0 };
        assert!(matches!(spec.validate(), Err(NndError::Config(_))));
        let mut spec = ModelSpec::prior(2, 2, 1.0);
        spec.gamma2 = Gamma2Mode::Sampled { initial: 1.0 };
        assert!(matches!(spec.validate(), Err(NndError::Config(_))));
        assert!(ModelSpec::prior(2, 2, 0.0).validate().is_err());
    }

    #[test]
    fn empty_mask_is_rejected() {
        let spec = ModelSpec::complete(
            DenseMatrix::zeros(2, 2),
            DenseMatrix::zeros(2, 2),
            LambdaMode::Fixed(1.0),
            Gamma2Mode::Fixed(1.0),
        );
        assert!(spec.validate().is_err());
    }

    #[test]
    fn hyper_traces_stay_positive_and_finite() {
        let mut rng = chain_rng(11, 0);
        let y = gaussian_matrix(4, 4, &mut rng);
        let spec = ModelSpec::denoise(y, LambdaMode::Adaptive { initial: 1.0 }, Gamma2Mode::Sampled { initial: 1.0 });
        let out = run_chain(&spec, &small_cfg(2_000, 500, 1), &mut rng).unwrap();
        for (l, g) in out.traces.lambda.iter().zip(&out.traces.gamma2) {
            assert!(*l > 0.0 && l.is_finite());
            assert!(*g > 0.0 && g.is_finite());
        }
        assert!(out.acceptance_rates.contains_key("gamma2"));
    }

    #[test]
    fn delta_is_frozen_after_burn_in() {
        let cfg = small_cfg(600, 300, 1);
        let out = run_chain(&ModelSpec::prior(2, 2, 1.0), &cfg, &mut chain_rng(2, 0)).unwrap();
        let tail = &out.traces.delta[301..];
        assert!(tail.iter().all(|&d| d == tail[0]));
    }
}
