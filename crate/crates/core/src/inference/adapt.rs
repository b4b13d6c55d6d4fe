use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Multiplicative Robbins-Monro step: `scale * exp(gain * (acceptance - target))`.
pub fn adapt_step(current_scale: f64, recent_acceptance: f64, target: f64, gain: f64) -> f64 {
    current_scale * (gain * (recent_acceptance - target)).exp()
}

/// Gain for the `batch`-th adaptation window (1-based), decaying as `batch^-0.6`.
pub fn adaptation_gain(batch: usize) -> f64 {
    (batch.max(1) as f64).powf(-0.6)
}

/// Random-walk proposal scale with windowed acceptance bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveScale {
    pub scale: f64,
    window_accepted: u32,
    window_proposed: u32,
    pub accepted: u64,
    pub proposed: u64,
}

impl AdaptiveScale {
    pub fn new(scale: f64) -> Self {
        Self {
            scale,
            window_accepted: 0,
            window_proposed: 0,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, current: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        current + self.scale * z
    }

    pub fn record(&mut self, accepted: bool) {
        self.window_proposed += 1;
        self.proposed += 1;
        if accepted {
            self.window_accepted += 1;
            self.accepted += 1;
        }
    }

    /// Close the current window; `gain` of `None` only resets the counters.
    pub fn end_window(&mut self, target: f64, gain: Option<f64>) {
        if let (Some(gain), true) = (gain, self.window_proposed > 0) {
            let rate = self.window_accepted as f64 / self.window_proposed as f64;
            self.scale = adapt_step(self.scale, rate, target, gain);
        }
        self.window_accepted = 0;
        self.window_proposed = 0;
    }

    pub fn reset_totals(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}
