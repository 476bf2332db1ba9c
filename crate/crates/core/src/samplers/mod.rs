//! MCMC kernels and chain orchestration.
//!
//! Ambient-space kernels (proximal Langevin for the prior and the denoising
//! posterior, proximal-gradient Langevin for completion) and the SVD-Gibbs
//! kernel over `(U, sigma, V)` share one [`ChainState`]. Step sizes adapt by
//! Robbins-Monro toward a target acceptance rate, and the penalty `lambda`
//! and noise variance `gamma2` have their own Gibbs / Metropolis updates.

mod adapt;
pub(crate) mod chain;
mod hyper;
pub(crate) mod prox;
pub mod sv_mala;
mod svd_gibbs;
pub mod vmf;

pub use adapt::{robbins_monro_update, StepAdapter, DELTA_MAX, DELTA_MIN};
pub use chain::{
    chain_rng, run_chain, run_chains, ChainOutput, Gamma2Mode, Kernel, LambdaMode, ModelKind, ModelSpec, Traces,
};
pub use hyper::{gamma2_log_target, gamma2_update, gamma2_update_from_stats, lambda_gibbs_update, HyperState};
pub use prox::{
    ensure_binary_mask, masked_distance_sq, masked_gradient, mh_log_ratio, posterior_mode, prox_grad_completion_step,
    prox_langevin_denoise_step, prox_langevin_prior_step, AmbientState, ProxTarget,
};
pub use svd_gibbs::{svd_gibbs_step, SvdState};
pub use vmf::{sample_matrix_vmf, sample_vector_vmf, vmf_gibbs_sweep};

use serde::{Deserialize, Serialize};

use crate::error::{NndError, Result};

/// Acceptance rate targeted by the matrix-valued kernels.
pub const MATRIX_TARGET_ACCEPTANCE: f64 = 0.574;
/// Acceptance rate targeted by the scalar `gamma2` random walk.
pub const SCALAR_TARGET_ACCEPTANCE: f64 = 0.44;

/// Run configuration shared by every chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub initial_delta: f64,
    pub target_acceptance: f64,
    pub rm_gain: f64,
    pub rm_decay: f64,
    pub seed: u64,
    pub adapt_during_burn_in_only: bool,
    /// Store every retained draw (otherwise only their running mean).
    #[serde(default = "default_true")]
    pub keep_draws: bool,
    /// Calibration hook: accept every proposal without the Metropolis-Hastings
    /// test. Only used to check that the validation battery has power.
    #[serde(default)]
    pub fault_skip_mh: bool,
    /// sigma-MALA steps per SVD-Gibbs scan; `None` uses `2 n` for `n`
    /// singular values, which keeps the sigma block about as costly as one
    /// `U`/`V` sweep.
    #[serde(default)]
    pub sigma_substeps: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 1_000,
            thinning: 1,
            initial_delta: 0.1,
            target_acceptance: MATRIX_TARGET_ACCEPTANCE,
            rm_gain: 1.0,
            rm_decay: 0.6,
            seed: 0,
            adapt_during_burn_in_only: true,
            keep_draws: true,
            fault_skip_mh: false,
            sigma_substeps: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(NndError::Config(m));
        if self.iterations == 0 {
            return fail("iterations must be positive".into());
        }
        if self.burn_in >= self.iterations {
            return fail(format!("burn_in ({}) must be smaller than iterations ({})", self.burn_in, self.iterations));
        }
        if self.sigma_substeps == Some(0) {
            return fail("sigma_substeps must be positive".into());
        }
        if self.thinning == 0 {
            return fail("thinning must be positive".into());
        }
        if !(self.initial_delta > 0.0) || !self.initial_delta.is_finite() {
            return fail(format!("initial_delta must be positive, got {}", self.initial_delta));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return fail(format!("target_acceptance must lie in (0, 1), got {}", self.target_acceptance));
        }
        if !(self.rm_gain > 0.0) {
            return fail(format!("rm_gain must be positive, got {}", self.rm_gain));
        }
        if !(self.rm_decay > 0.5 && self.rm_decay <= 1.0) {
            return fail(format!("rm_decay must lie in (0.5, 1], got {}", self.rm_decay));
        }
        Ok(())
    }

    /// Number of draws retained after burn-in and thinning.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }

    /// Whether the 0-based iteration `t` produces a retained draw.
    pub fn is_retained(&self, t: usize) -> bool {
        t >= self.burn_in && (t - self.burn_in + 1).is_multiple_of(self.thinning)
    }

    /// Whether step sizes adapt after the 1-based iteration `t`.
    pub fn adapts_at(&self, t: usize) -> bool {
        !self.adapt_during_burn_in_only || t <= self.burn_in
    }
}

/// Per-update acceptance bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceCounter {
    pub proposed: u64,
    pub accepted: u64,
}

impl AcceptanceCounter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// The chain's current point, either as a full matrix or as SVD factors.
#[derive(Debug, Clone)]
pub enum Representation {
    Ambient(AmbientState),
    Svd(SvdState),
}

/// Evolving state of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub repr: Representation,
    /// Proposal scale of the matrix kernel (for SVD-Gibbs: the sigma-MALA step).
    pub delta: f64,
    pub iteration: u64,
    pub x_updates: AcceptanceCounter,
    pub fault_skip_mh: bool,
    /// sigma-MALA steps per SVD-Gibbs scan.
    pub sigma_substeps: usize,
    /// Metropolis acceptance probability of the last update (mean over the
    /// sigma-MALA substeps for SVD-Gibbs).
    pub accept_prob: f64,
}

impl ChainState {
    pub fn ambient(x: crate::DenseMatrix, delta: f64) -> Result<Self> {
        Ok(Self {
            repr: Representation::Ambient(AmbientState::new(x)?),
            delta,
            iteration: 0,
            x_updates: AcceptanceCounter::default(),
            fault_skip_mh: false,
            sigma_substeps: 1,
            accept_prob: 0.0,
        })
    }

    pub fn svd(x: &crate::DenseMatrix, delta: f64) -> Result<Self> {
        Ok(Self {
            repr: Representation::Svd(SvdState::from_matrix(x)?),
            delta,
            iteration: 0,
            x_updates: AcceptanceCounter::default(),
            fault_skip_mh: false,
            sigma_substeps: 2 * x.nrows().min(x.ncols()),
            accept_prob: 0.0,
        })
    }

    /// Current point as a matrix.
    pub fn matrix(&self) -> crate::DenseMatrix {
        match &self.repr {
            Representation::Ambient(a) => a.x.clone(),
            Representation::Svd(s) => s.matrix(),
        }
    }

    pub fn nuclear_norm(&self) -> f64 {
        match &self.repr {
            Representation::Ambient(a) => a.norm,
            Representation::Svd(s) => s.sigma.iter().map(|v| v.abs()).sum(),
        }
    }

    pub(crate) fn ambient_mut(&mut self) -> Result<&mut AmbientState> {
        match &mut self.repr {
            Representation::Ambient(a) => Ok(a),
            Representation::Svd(_) => Err(NndError::Logic("ambient kernel called on an SVD-represented state".into())),
        }
    }

    pub(crate) fn svd_mut(&mut self) -> Result<&mut SvdState> {
        match &mut self.repr {
            Representation::Svd(s) => Ok(s),
            Representation::Ambient(_) => Err(NndError::Logic("SVD-Gibbs kernel called on an ambient state".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = ChainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.iterations, 10_000);
        assert_eq!(cfg.burn_in, 1_000);
        assert_eq!(cfg.target_acceptance, 0.574);
        assert_eq!(cfg.retained(), 9_000);
    }

    #[test]
    fn invalid_configs() {
        let base = ChainConfig::default();
        for bad in [
            ChainConfig { burn_in: 10_000, ..base.clone() },
            ChainConfig { thinning: 0, ..base.clone() },
            ChainConfig { initial_delta: 0.0, ..base.clone() },
            ChainConfig { rm_decay: 0.5, ..base.clone() },
            ChainConfig { target_acceptance: 1.0, ..base.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(NndError::Config(_))));
        }
    }

    #[test]
    fn retention_schedule() {
        let cfg = ChainConfig { iterations: 23, burn_in: 3, thinning: 4, ..Default::default() };
        let kept: Vec<usize> = (0..23).filter(|&t| cfg.is_retained(t)).collect();
        assert_eq!(kept.len(), cfg.retained());
        assert_eq!(kept, vec![6, 10, 14, 18, 22]);
    }
}
