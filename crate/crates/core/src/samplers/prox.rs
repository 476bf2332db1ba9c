//! Proximal Langevin kernels on the full matrix.
//!
//! Every kernel proposes `X* ~ N(mean(X^t), delta I)` where `mean` is a
//! proximal (or proximal-gradient) map of the current state, and applies the
//! Metropolis-Hastings correction with the asymmetric proposal densities
//! `q(X^t | X*) / q(X* | X^t)`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::sv_mala::metropolis_test;
use super::{ChainState, HyperState};
use crate::distributions::NndParams;
use crate::error::{arg_err, Result};
use crate::linalg::{distance_sq, ensure_same_shape, nuclear_norm, prox_nuclear, soft_threshold, svd, DenseMatrix};

/// Target posterior for an ambient proximal kernel.
#[derive(Debug, Clone, Copy)]
pub enum ProxTarget<'a> {
    /// `-rate ||X||_*`.
    Prior { rate: f64 },
    /// `-||Y - X||_F^2 / (2 gamma2) - (lambda / sqrt(gamma2)) ||X||_*`.
    Denoise { y: &'a DenseMatrix, lambda: f64, gamma2: f64 },
    /// `-||M o (Y - X)||_F^2 / (2 gamma2) - (lambda / sqrt(gamma2)) ||X||_*`.
    Complete { y: &'a DenseMatrix, mask: &'a DenseMatrix, lambda: f64, gamma2: f64 },
}

impl ProxTarget<'_> {
    /// Log target given the nuclear norm of `x`.
    pub fn log_target(&self, x: &DenseMatrix, norm: f64) -> f64 {
        match *self {
            ProxTarget::Prior { rate } => -rate * norm,
            ProxTarget::Denoise { y, lambda, gamma2 } => {
                -distance_sq(y, x) / (2.0 * gamma2) - lambda / gamma2.sqrt() * norm
            }
            ProxTarget::Complete { y, mask, lambda, gamma2 } => {
                -masked_distance_sq(y, x, mask) / (2.0 * gamma2) - lambda / gamma2.sqrt() * norm
            }
        }
    }

    /// Mean of the Gaussian proposal from `x` with scale `delta`.
    pub fn proposal_mean(&self, x: &DenseMatrix, delta: f64) -> Result<DenseMatrix> {
        match *self {
            ProxTarget::Prior { rate } => prox_nuclear(x, 0.5 * delta * rate),
            ProxTarget::Denoise { y, lambda, gamma2 } => {
                let w = delta + 2.0 * gamma2;
                let centre = (y * delta + x * (2.0 * gamma2)) / w;
                prox_nuclear(&centre, lambda * delta * gamma2 / (w * gamma2.sqrt()))
            }
            ProxTarget::Complete { y, mask, lambda, gamma2 } => {
                let step = x - masked_gradient(x, y, mask, gamma2) * delta;
                prox_nuclear(&step, delta * lambda / gamma2.sqrt())
            }
        }
    }

    /// Nuclear norm of `x` together with the proposal mean from `x`. The prior
    /// case reuses one SVD for both.
    fn norm_and_mean(&self, x: &DenseMatrix, delta: f64) -> Result<(f64, DenseMatrix)> {
        match *self {
            ProxTarget::Prior { rate } => {
                let dec = svd(x)?;
                let norm = dec.s.iter().sum();
                let mut s: Vec<f64> = dec.s.iter().cloned().collect();
                soft_threshold(&mut s, 0.5 * delta * rate);
                Ok((norm, dec.with_values(&s)))
            }
            _ => Ok((nuclear_norm(x)?, self.proposal_mean(x, delta)?)),
        }
    }

    fn cache_key(&self, delta: f64) -> [u64; 3] {
        match *self {
            ProxTarget::Prior { rate } => [delta.to_bits(), rate.to_bits(), 0],
            ProxTarget::Denoise { lambda, gamma2, .. } | ProxTarget::Complete { lambda, gamma2, .. } => {
                [delta.to_bits(), lambda.to_bits(), gamma2.to_bits()]
            }
        }
    }
}

/// `||M o (Y - X)||_F^2`.
pub fn masked_distance_sq(y: &DenseMatrix, x: &DenseMatrix, mask: &DenseMatrix) -> f64 {
    y.iter().zip(x.iter()).zip(mask.iter()).map(|((a, b), m)| m * (a - b) * (a - b)).sum()
}

/// Gradient of `||M o (Y - X)||_F^2 / (2 gamma2)` in `X`: `M o (X - Y) / gamma2`.
pub fn masked_gradient(x: &DenseMatrix, y: &DenseMatrix, mask: &DenseMatrix, gamma2: f64) -> DenseMatrix {
    let mut g = x - y;
    g.component_mul_assign(mask);
    g / gamma2
}

/// Full matrix state with its nuclear norm and a cached proposal mean.
#[derive(Debug, Clone)]
pub struct AmbientState {
    pub x: DenseMatrix,
    pub norm: f64,
    mean_cache: Option<([u64; 3], DenseMatrix)>,
}

impl AmbientState {
    pub fn new(x: DenseMatrix) -> Result<Self> {
        let norm = nuclear_norm(&x)?;
        Ok(Self { x, norm, mean_cache: None })
    }
}

fn gaussian_log_kernel(to: &DenseMatrix, mean: &DenseMatrix, delta: f64) -> f64 {
    -distance_sq(to, mean) / (2.0 * delta)
}

/// Log Metropolis-Hastings ratio for moving `from -> to` with scale `delta`.
pub fn mh_log_ratio(target: &ProxTarget<'_>, from: &DenseMatrix, to: &DenseMatrix, delta: f64) -> Result<f64> {
    let (n_from, m_from) = target.norm_and_mean(from, delta)?;
    let (n_to, m_to) = target.norm_and_mean(to, delta)?;
    Ok(target.log_target(to, n_to) - target.log_target(from, n_from) + gaussian_log_kernel(from, &m_to, delta)
        - gaussian_log_kernel(to, &m_from, delta))
}

/// One proximal MH step from `state` targeting `target`.
pub(crate) fn prox_mh_step<R: Rng + ?Sized>(
    state: &mut AmbientState,
    target: &ProxTarget<'_>,
    delta: f64,
    rng: &mut R,
    skip_mh: bool,
) -> Result<(bool, f64)> {
    let key = target.cache_key(delta);
    let forward = match state.mean_cache.take() {
        Some((k, m)) if k == key => m,
        _ => target.proposal_mean(&state.x, delta)?,
    };
    let sd = delta.sqrt();
    let proposal = forward.map(|v| v + sd * rng.sample::<f64, _>(StandardNormal));
    let (prop_norm, reverse) = target.norm_and_mean(&proposal, delta)?;

    let (accept, prob) = if skip_mh {
        (true, 1.0)
    } else {
        let log_alpha = target.log_target(&proposal, prop_norm) - target.log_target(&state.x, state.norm)
            + gaussian_log_kernel(&state.x, &reverse, delta)
            - gaussian_log_kernel(&proposal, &forward, delta);
        metropolis_test(log_alpha, rng)
    };
    if accept {
        state.x = proposal;
        state.norm = prop_norm;
        state.mean_cache = Some((key, reverse));
    } else {
        state.mean_cache = Some((key, forward));
    }
    Ok((accept, prob))
}

fn run_step<R: Rng + ?Sized>(state: &mut ChainState, target: ProxTarget<'_>, rng: &mut R) -> Result<bool> {
    let delta = state.delta;
    let skip = state.fault_skip_mh;
    let (accepted, prob) = prox_mh_step(state.ambient_mut()?, &target, delta, rng, skip)?;
    state.accept_prob = prob;
    state.iteration += 1;
    state.x_updates.record(accepted);
    Ok(accepted)
}

/// Proximal Langevin step targeting `NND(p.lambda)`: proposal
/// `N(prox_nuclear(X, delta lambda / 2), delta I)`.
pub fn prox_langevin_prior_step<R: Rng + ?Sized>(state: &mut ChainState, p: &NndParams, rng: &mut R) -> Result<bool> {
    if let Ok(a) = state.ambient_mut() {
        if a.x.shape() != (p.rows, p.cols) {
            return arg_err("state shape does not match NND parameters");
        }
    }
    run_step(state, ProxTarget::Prior { rate: p.lambda }, rng)
}

/// Proximal Langevin step for the Gaussian denoising posterior under the
/// conditional prior `NND(lambda / sqrt(gamma2))`.
pub fn prox_langevin_denoise_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    y: &DenseMatrix,
    hyper: &HyperState,
    rng: &mut R,
) -> Result<bool> {
    ensure_same_shape(&state.ambient_mut()?.x, y, "denoise step")?;
    run_step(state, ProxTarget::Denoise { y, lambda: hyper.lambda, gamma2: hyper.gamma2 }, rng)
}

/// Proximal-gradient Langevin step for the masked (completion) posterior.
pub fn prox_grad_completion_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    y: &DenseMatrix,
    mask: &DenseMatrix,
    hyper: &HyperState,
    rng: &mut R,
) -> Result<bool> {
    ensure_same_shape(&state.ambient_mut()?.x, y, "completion step")?;
    ensure_same_shape(y, mask, "completion mask")?;
    ensure_binary_mask(mask)?;
    run_step(state, ProxTarget::Complete { y, mask, lambda: hyper.lambda, gamma2: hyper.gamma2 }, rng)
}

/// Posterior mode at fixed `lambda`, `gamma2`: singular-value thresholding
/// of `Y` at `lambda * gamma` for denoising; for completion, soft-impute
/// (proximal gradient with unit step in units of `gamma2`) from `M o Y`,
/// iterated to a relative change below 1e-10 or `max_iter` sweeps.
pub fn posterior_mode(target: &ProxTarget, max_iter: usize) -> Result<Option<DenseMatrix>> {
    match *target {
        ProxTarget::Prior { .. } => Ok(None),
        ProxTarget::Denoise { y, lambda, gamma2 } => prox_nuclear(y, lambda * gamma2.sqrt()).map(Some),
        ProxTarget::Complete { y, mask, lambda, gamma2 } => {
            ensure_same_shape(y, mask, "completion mask")?;
            let threshold = lambda * gamma2.sqrt();
            let observed = y.component_mul(mask);
            let scale = 1.0 + y.amax();
            let mut x = observed.clone();
            for _ in 0..max_iter {
                let filled = &observed + x.zip_map(mask, |v, m| v * (1.0 - m));
                let next = prox_nuclear(&filled, threshold)?;
                let change = (&next - &x).amax();
                x = next;
                if change < 1e-10 * scale {
                    break;
                }
            }
            Ok(Some(x))
        }
    }
}

pub fn ensure_binary_mask(mask: &DenseMatrix) -> Result<()> {
    if mask.iter().all(|&v| v == 0.0 || v == 1.0) {
        Ok(())
    } else {
        arg_err("mask entries must be 0 or 1")
    }
}
