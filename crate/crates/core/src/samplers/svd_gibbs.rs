//! Gibbs sampler over the SVD factors `(U, sigma, V)`.
//!
//! Matrices are handled in the wide orientation `n x m` with `n <= m`
//! (tall inputs are transposed on entry and back on exit), so `U` is
//! `n x n` orthogonal and `V` is an `m x n` Stiefel frame.

use rand::Rng;

use super::sv_mala::{mala_step, MalaPoint, SingularValueTarget};
use super::vmf::vmf_gibbs_sweep;
use super::{ChainState, HyperState};
use crate::distributions::{sample_haar_orthogonal, sample_uniform_stiefel};
use crate::error::{arg_err, Result};
use crate::linalg::{ensure_finite, scale_columns, svd, DenseMatrix};

/// Smallest singular value allowed in the state (the log-coordinate chain
/// cannot start at zero or at coincident values).
const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SvdState {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
    /// The represented matrix is `(U diag(sigma) V^T)^T`.
    pub transposed: bool,
}

impl SvdState {
    pub fn from_matrix(x: &DenseMatrix) -> Result<Self> {
        ensure_finite(x, "SVD state")?;
        let transposed = x.nrows() > x.ncols();
        let wide = if transposed { x.transpose() } else { x.clone() };
        let dec = svd(&wide)?;
        let scale = dec.s.iter().cloned().fold(1.0f64, f64::max);
        let n = dec.s.len();
        // Keep values positive and strictly distinct.
        let mut sigma: Vec<f64> = dec.s.iter().cloned().collect();
        for i in (0..n).rev() {
            let floor = SIGMA_FLOOR * scale * (n - i) as f64;
            let above_next = if i + 1 < n { sigma[i + 1] * (1.0 + 1e-6) + SIGMA_FLOOR * scale } else { 0.0 };
            sigma[i] = sigma[i].max(floor).max(above_next);
        }
        Ok(Self { u: dec.u, sigma, v: dec.v, transposed })
    }

    /// `(n, m)` of the wide orientation.
    pub fn dims(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    pub fn matrix(&self) -> DenseMatrix {
        let x = scale_columns(&self.u, &self.sigma) * self.v.transpose();
        if self.transposed {
            x.transpose()
        } else {
            x
        }
    }
}

/// One SVD-Gibbs scan: a sigma-MALA step (step size `state.delta`), then a
/// matrix vMF Gibbs sweep for `U` with parameter `Y V diag(sigma) / gamma2`,
/// then one for `V` with parameter `Y^T U diag(sigma) / gamma2`.
///
/// With `y = None` the target is the prior `NND(hyper.lambda)`; `U` and `V`
/// are then drawn exactly from their uniform laws. Returns whether the sigma
/// proposal was accepted.
pub fn svd_gibbs_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    y: Option<&DenseMatrix>,
    hyper: &HyperState,
    rng: &mut R,
) -> Result<bool> {
    let delta = state.delta;
    let skip = state.fault_skip_mh;
    let substeps = state.sigma_substeps.max(1);
    let s = state.svd_mut()?;
    let (n, m) = s.dims();

    let (accepted, prob) = match y {
        None => {
            let target = SingularValueTarget::prior(hyper.lambda, n, m);
            let out = sigma_step(s, &target, delta, substeps, rng, skip);
            s.u = sample_haar_orthogonal(n, rng)?;
            s.v = sample_uniform_stiefel(n, m, rng)?;
            out
        }
        Some(y) => {
            let yw = if s.transposed { y.transpose() } else { y.clone() };
            if yw.shape() != (n, m) {
                return arg_err(format!("data shape {:?} does not match the state", y.shape()));
            }
            let g2 = hyper.gamma2;
            let yv = &yw * &s.v;
            let center: Vec<f64> = (0..n).map(|i| s.u.column(i).dot(&yv.column(i))).collect();
            let target = SingularValueTarget::conditional(hyper.prior_rate(), n, m, center, g2);
            let out = sigma_step(s, &target, delta, substeps, rng, skip);

            let fu = scale_columns(&yv, &s.sigma) / g2;
            vmf_gibbs_sweep(&mut s.u, &fu, rng)?;
            let fv = scale_columns(&(yw.transpose() * &s.u), &s.sigma) / g2;
            vmf_gibbs_sweep(&mut s.v, &fv, rng)?;
            out
        }
    };
    state.accept_prob = prob;
    state.iteration += 1;
    state.x_updates.record(accepted);
    Ok(accepted)
}

fn sigma_step<R: Rng + ?Sized>(
    s: &mut SvdState,
    target: &SingularValueTarget,
    h: f64,
    substeps: usize,
    rng: &mut R,
    skip: bool,
) -> (bool, f64) {
    let l: Vec<f64> = s.sigma.iter().map(|v| v.ln()).collect();
    let mut point = MalaPoint::new(target, l);
    let mut accepted = false;
    let mut prob_sum = 0.0;
    for _ in 0..substeps {
        let (a, p) = mala_step(&mut point, h, target, rng, skip);
        accepted = a;
        prob_sum += p;
    }
    s.sigma = point.values();
    (accepted, prob_sum / substeps as f64)
}
