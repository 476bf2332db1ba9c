use super::ChainConfig;

pub const DELTA_MIN: f64 = 1e-12;
pub const DELTA_MAX: f64 = 1e12;

/// One Robbins-Monro step on the log scale:
/// `delta' = delta * exp(c / t^decay * (1[accepted] - target))`, clamped.
pub fn robbins_monro_update(delta: f64, accepted: bool, t: usize, cfg: &ChainConfig) -> f64 {
    rm_step(delta, accepted, t, cfg.target_acceptance, cfg.rm_gain, cfg.rm_decay)
}

fn rm_step(delta: f64, accepted: bool, t: usize, target: f64, gain: f64, decay: f64) -> f64 {
    rm_step_prob(delta, if accepted { 1.0 } else { 0.0 }, t, target, gain, decay)
}

fn rm_step_prob(delta: f64, prob: f64, t: usize, target: f64, gain: f64, decay: f64) -> f64 {
    let t = t.max(1) as f64;
    let eta = gain / t.powf(decay);
    (delta * (eta * (prob - target)).exp()).clamp(DELTA_MIN, DELTA_MAX)
}

/// Robbins-Monro adapter that remembers its own iteration count.
///
/// The step-size clock restarts at 1/8, 1/4 and 1/2 of the burn-in, so gains
/// spent while the chain was still far from equilibrium do not pin `delta`.
/// The mean of `log delta` over the last quarter of the burn-in is kept, and
/// [`StepAdapter::freeze`] switches to that average, which is far less noisy
/// than the last iterate.
#[derive(Debug, Clone)]
pub struct StepAdapter {
    pub delta: f64,
    target: f64,
    gain: f64,
    decay: f64,
    t: usize,
    seen: usize,
    restarts: Vec<usize>,
    window_start: usize,
    log_sum: f64,
    log_count: usize,
    frozen: bool,
}

impl StepAdapter {
    pub fn new(initial: f64, target: f64, cfg: &ChainConfig) -> Self {
        let b = cfg.burn_in;
        let restarts = vec![b / 8, b / 4, b / 2];
        let window_start = 3 * b / 4;
        Self {
            delta: initial,
            target,
            gain: cfg.rm_gain,
            decay: cfg.rm_decay,
            t: 0,
            seen: 0,
            restarts,
            window_start,
            log_sum: 0.0,
            log_count: 0,
            frozen: false,
        }
    }

    pub fn update(&mut self, accepted: bool) -> f64 {
        self.update_prob(if accepted { 1.0 } else { 0.0 })
    }

    /// Update from the Metropolis acceptance probability of the last
    /// proposal; same mean as the accept indicator, much less noise.
    pub fn update_prob(&mut self, prob: f64) -> f64 {
        if self.frozen {
            return self.delta;
        }
        if self.restarts.contains(&self.seen) {
            self.t = 0;
        }
        self.seen += 1;
        self.t += 1;
        self.delta = rm_step_prob(self.delta, prob, self.t, self.target, self.gain, self.decay);
        if self.seen > self.window_start {
            self.log_sum += self.delta.ln();
            self.log_count += 1;
        }
        self.delta
    }

    /// Stop adapting and settle on the averaged step size.
    pub fn freeze(&mut self) -> f64 {
        if !self.frozen && self.log_count > 0 {
            self.delta = (self.log_sum / self.log_count as f64).exp();
        }
        self.frozen = true;
        self.delta
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn accept_grows_by_expected_factor() {
        let cfg = ChainConfig::default();
        let t = 7;
        let eta = 1.0 / (t as f64).powf(0.6);
        let d = robbins_monro_update(0.3, true, t, &cfg);
        assert_relative_eq!(d, 0.3 * (0.426 * eta).exp(), max_relative = 1e-14);
        let d = robbins_monro_update(0.3, false, t, &cfg);
        assert_relative_eq!(d, 0.3 * (-0.574 * eta).exp(), max_relative = 1e-14);
    }

    #[test]
    fn drift_is_zero_mean_at_target_rate() {
        // E[1[acc] - 0.574] = 0.574 * 0.426 - 0.426 * 0.574 = 0.
        let cfg = ChainConfig::default();
        let up = robbins_monro_update(1.0, true, 1, &cfg).ln();
        let down = robbins_monro_update(1.0, false, 1, &cfg).ln();
        assert!((0.574 * up + 0.426 * down).abs() < 1e-15);
    }

    #[test]
    fn clamped() {
        let cfg = ChainConfig { rm_gain: 1e6, ..Default::default() };
        assert_eq!(robbins_monro_update(1.0, true, 1, &cfg), DELTA_MAX);
        assert_eq!(robbins_monro_update(1.0, false, 1, &cfg), DELTA_MIN);
    }

    #[test]
    fn clock_restarts_and_freeze_uses_last_quarter() {
        // burn_in 8: restarts before updates 2, 3 and 5, window is updates 7 and 8.
        let cfg = ChainConfig { burn_in: 8, ..Default::default() };
        let mut a = StepAdapter::new(1.0, 0.574, &cfg);
        let accs = [true, false, true, true, false, true, false, true];
        let clock = [1, 1, 1, 2, 1, 2, 3, 4];
        let mut d = 1.0;
        let mut logs = Vec::new();
        for (acc, t) in accs.into_iter().zip(clock) {
            d = robbins_monro_update(d, acc, t, &cfg);
            assert_relative_eq!(a.update(acc), d, max_relative = 1e-14);
            logs.push(d.ln());
        }
        let expected = (logs[6..].iter().sum::<f64>() / 2.0).exp();
        assert_relative_eq!(a.freeze(), expected, max_relative = 1e-14);
        assert_eq!(a.update(true), expected);
    }
}
