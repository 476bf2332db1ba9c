//! MALA over singular values in log coordinates.
//!
//! The target is the singular-value density
//! `exp(-rate sum s) prod s_i^(m-n) prod_{i<j} |s_i^2 - s_j^2|`, optionally
//! multiplied by the Gaussian factor `exp(-||s - c||^2 / (2 gamma2))` that
//! appears in the SVD-Gibbs conditional. Working with `l = log s` (plus the
//! Jacobian `sum l`) removes the boundary at zero.
//!
//! For the conditional target the proposal is preconditioned per coordinate
//! by `M_i = gamma2 / (gamma2 + s_i^2)`: the Gaussian factor has sd `gamma`
//! on `s_i`, i.e. about `gamma / s_i` on `l_i`, so without it a single step
//! size cannot serve large and small singular values at once. `M` depends
//! on the current point and enters both proposal densities.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{AcceptanceCounter, ChainConfig, StepAdapter};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SingularValueTarget {
    pub rate: f64,
    /// Smaller matrix dimension (number of singular values).
    pub n: usize,
    /// Larger matrix dimension.
    pub m: usize,
    center: Option<Vec<f64>>,
    gamma2: f64,
}

/// `log |exp(2a) - exp(2b)|`.
fn log_abs_sq_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        return f64::NEG_INFINITY;
    }
    2.0 * a.max(b) + (-(-2.0 * d).exp_m1()).ln()
}

impl SingularValueTarget {
    pub fn prior(rate: f64, n: usize, m: usize) -> Self {
        debug_assert!(n <= m);
        Self { rate, n, m, center: None, gamma2: 1.0 }
    }

    /// Conditional of `sigma` in the SVD-Gibbs sampler, `center = diag(U^T Y V)`.
    pub fn conditional(rate: f64, n: usize, m: usize, center: Vec<f64>, gamma2: f64) -> Self {
        debug_assert_eq!(center.len(), n);
        Self { rate, n, m, center: Some(center), gamma2 }
    }

    /// Log-density in `l = log s`, Jacobian included.
    pub fn log_density(&self, l: &[f64]) -> f64 {
        let excess = (self.m - self.n) as f64;
        let mut total = 0.0;
        for (i, &li) in l.iter().enumerate() {
            let s = li.exp();
            total += -self.rate * s + (excess + 1.0) * li;
            if let Some(c) = &self.center {
                total -= (s - c[i]).powi(2) / (2.0 * self.gamma2);
            }
        }
        for i in 0..l.len() {
            for j in (i + 1)..l.len() {
                total += log_abs_sq_gap(l[i], l[j]);
            }
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    /// Gradient of [`Self::log_density`] with respect to `l`.
    pub fn gradient(&self, l: &[f64], out: &mut [f64]) {
        let excess = (self.m - self.n) as f64;
        for i in 0..l.len() {
            let s = l[i].exp();
            let mut g = -self.rate * s + excess + 1.0;
            if let Some(c) = &self.center {
                g -= s * (s - c[i]) / self.gamma2;
            }
            for j in 0..l.len() {
                if j != i {
                    // d/dl_i log|s_i^2 - s_j^2| = 2 / (1 - exp(2 (l_j - l_i))).
                    g += 2.0 / (-(2.0 * (l[j] - l[i])).exp_m1());
                }
            }
            out[i] = g;
        }
    }

    /// Diagonal proposal preconditioner at `l` (all ones for the prior).
    pub fn preconditioner(&self, l: &[f64], out: &mut [f64]) {
        match &self.center {
            None => out.iter_mut().for_each(|m| *m = 1.0),
            Some(_) => {
                for (m, &li) in out.iter_mut().zip(l) {
                    let s2 = (2.0 * li).exp();
                    *m = self.gamma2 / (self.gamma2 + s2);
                }
            }
        }
    }

    /// A distinct, positive starting point.
    pub fn initial_point(&self) -> Vec<f64> {
        let n = self.n as f64;
        (0..self.n)
            .map(|i| {
                let base = match &self.center {
                    Some(c) => c[i].abs(),
                    None => (self.m as f64 / self.rate) * (n - i as f64) / n,
                };
                (base.max(1e-3) * (1.0 + 1e-3 * i as f64)).ln()
            })
            .collect()
    }
}

/// Current point of a singular-value MALA chain with cached density,
/// gradient and preconditioner.
#[derive(Debug, Clone)]
pub struct MalaPoint {
    pub l: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
    pub precond: Vec<f64>,
}

impl MalaPoint {
    pub fn new(target: &SingularValueTarget, l: Vec<f64>) -> Self {
        let mut grad = vec![0.0; l.len()];
        target.gradient(&l, &mut grad);
        let mut precond = vec![1.0; l.len()];
        target.preconditioner(&l, &mut precond);
        let log_density = target.log_density(&l);
        Self { l, log_density, grad, precond }
    }

    pub fn values(&self) -> Vec<f64> {
        self.l.iter().map(|v| v.exp()).collect()
    }

    /// Log density of proposing `to` from `self` with step `h`.
    fn log_proposal(&self, to: &[f64], h: f64) -> f64 {
        (0..to.len())
            .map(|i| {
                let var = h * self.precond[i];
                let d = to[i] - self.l[i] - 0.5 * var * self.grad[i];
                -d * d / (2.0 * var) - 0.5 * self.precond[i].ln()
            })
            .sum()
    }
}

/// One preconditioned MALA step `l* = l + (h/2) M grad + sqrt(h M) xi`,
/// Metropolis-adjusted.
pub fn mala_step<R: Rng + ?Sized>(
    point: &mut MalaPoint,
    h: f64,
    target: &SingularValueTarget,
    rng: &mut R,
    skip_mh: bool,
) -> (bool, f64) {
    let proposal: Vec<f64> = (0..point.l.len())
        .map(|i| {
            let var = h * point.precond[i];
            point.l[i] + 0.5 * var * point.grad[i] + var.sqrt() * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let cand = MalaPoint::new(target, proposal);
    let (accept, prob) = if skip_mh {
        let ok = cand.log_density.is_finite();
        (ok, if ok { 1.0 } else { 0.0 })
    } else {
        let log_alpha =
            cand.log_density - point.log_density + cand.log_proposal(&point.l, h) - point.log_proposal(&cand.l, h);
        metropolis_test(log_alpha, rng)
    };
    if accept && cand.grad.iter().all(|g| g.is_finite()) {
        *point = cand;
        (true, prob)
    } else {
        (false, prob)
    }
}

/// Metropolis test on a log acceptance ratio; NaN rejects.
pub(crate) fn metropolis_accept<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> bool {
    metropolis_test(log_alpha, rng).0
}

/// Metropolis test that also returns the acceptance probability
/// `min(1, exp(log_alpha))` (0 for NaN).
pub(crate) fn metropolis_test<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> (bool, f64) {
    if log_alpha.is_nan() {
        (false, 0.0)
    } else if log_alpha >= 0.0 {
        (true, 1.0)
    } else {
        (rng.random::<f64>().ln() < log_alpha, log_alpha.exp())
    }
}

/// Output of [`run_singular_value_chain`].
#[derive(Debug, Clone)]
pub struct SvChainOutput {
    /// Retained draws of the singular values (unsorted).
    pub draws: Vec<Vec<f64>>,
    /// `sum s` at every iteration.
    pub sum_trace: Vec<f64>,
    pub accepted: Vec<bool>,
    pub acceptance: AcceptanceCounter,
    pub final_step: f64,
}

/// Run a MALA chain on the singular-value target with Robbins-Monro step
/// adaptation according to `cfg`.
pub fn run_singular_value_chain<R: Rng + ?Sized>(
    target: &SingularValueTarget,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<SvChainOutput> {
    cfg.validate()?;
    let mut point = MalaPoint::new(target, target.initial_point());
    let mut adapter = StepAdapter::new(cfg.initial_delta, cfg.target_acceptance, cfg);
    let mut out = SvChainOutput {
        draws: Vec::with_capacity(cfg.retained()),
        sum_trace: Vec::with_capacity(cfg.iterations),
        accepted: Vec::with_capacity(cfg.iterations),
        acceptance: AcceptanceCounter::default(),
        final_step: cfg.initial_delta,
    };
    for t in 0..cfg.iterations {
        let (accepted, prob) = mala_step(&mut point, adapter.delta, target, rng, cfg.fault_skip_mh);
        out.acceptance.record(accepted);
        out.accepted.push(accepted);
        if cfg.adapts_at(t + 1) {
            adapter.update_prob(prob);
        } else if !adapter.is_frozen() {
            adapter.freeze();
        }
        let values = point.values();
        out.sum_trace.push(values.iter().sum());
        if cfg.is_retained(t) {
            out.draws.push(values);
        }
    }
    out.final_step = adapter.delta;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::sv_log_density;
    use approx::assert_relative_eq;

    #[test]
    fn log_density_matches_direct_formula_plus_jacobian() {
        let t = SingularValueTarget::prior(1.3, 3, 5);
        let s = [2.0, 0.7, 1.1];
        let l: Vec<f64> = s.iter().map(|v: &f64| v.ln()).collect();
        let direct = sv_log_density(&s, 1.3, 3, 5) + l.iter().sum::<f64>();
        assert_relative_eq!(t.log_density(&l), direct, max_relative = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = SingularValueTarget::conditional(0.8, 3, 4, vec![1.5, -0.2, 0.9], 0.3);
        let l = vec![0.3, -1.1, 0.05];
        let mut g = vec![0.0; 3];
        t.gradient(&l, &mut g);
        let h = 1e-6;
        for i in 0..3 {
            let mut lp = l.clone();
            let mut lm = l.clone();
            lp[i] += h;
            lm[i] -= h;
            let fd = (t.log_density(&lp) - t.log_density(&lm)) / (2.0 * h);
            assert_relative_eq!(g[i], fd, max_relative = 1e-6, epsilon = 1e-7);
        }
    }

    #[test]
    fn coincident_values_have_zero_density() {
        let t = SingularValueTarget::prior(1.0, 2, 2);
        assert_eq!(t.log_density(&[0.4, 0.4]), f64::NEG_INFINITY);
    }

    #[test]
    fn preconditioned_chain_matches_quadrature_law() {
        use crate::diagnostics::ks_statistic;
        use crate::special::integrate;
        use rand::SeedableRng;
        // One singular value of a 1 x 2 matrix: density s exp(-s - (s - 3)^2).
        let t = SingularValueTarget::conditional(1.0, 1, 2, vec![3.0], 0.5);
        let dens = |s: f64| if s > 0.0 { s * (-s - (s - 3.0).powi(2)).exp() } else { 0.0 };
        let z = integrate(dens, 0.0, 20.0, 1e-13);
        let cfg = ChainConfig { iterations: 105_000, burn_in: 5_000, thinning: 10, ..ChainConfig::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let out = run_singular_value_chain(&t, &cfg, &mut rng).unwrap();
        let mut s: Vec<f64> = out.draws.iter().map(|v| v[0]).collect();
        s.sort_by(f64::total_cmp);
        let (_, p) = ks_statistic(&s, |x| integrate(dens, 0.0, x.max(0.0), 1e-13) / z).unwrap();
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn preconditioner_shrinks_for_large_values() {
        let t = SingularValueTarget::conditional(1.0, 2, 2, vec![10.0, 0.1], 0.01);
        let mut m = vec![0.0; 2];
        t.preconditioner(&[10f64.ln(), 0.1f64.ln()], &mut m);
        assert_relative_eq!(m[0], 0.01 / 100.01, max_relative = 1e-12);
        assert_relative_eq!(m[1], 0.5, max_relative = 1e-12);
        let p = SingularValueTarget::prior(1.0, 2, 2);
        p.preconditioner(&[0.0, 1.0], &mut m);
        assert_eq!(m, vec![1.0, 1.0]);
    }
}
