//! Robbins–Monro proposal-scale adaptation, frozen after burn-in.

use serde::{Deserialize, Serialize};

/// Acceptance target for scalar random-walk steps (g, ν, dispersions).
pub const RW_TARGET: f64 = 0.234;
/// Acceptance target for coordinate-wise Barker steps.
pub const BARKER_TARGET: f64 = 0.574;

const DECAY: f64 = 0.6;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdaptiveScale {
    pub log_scale: f64,
    pub target: f64,
    pub steps: u64,
    pub accepted: u64,
    pub frozen: bool,
}

impl AdaptiveScale {
    pub fn new(scale: f64, target: f64) -> Self {
        assert!(scale > 0.0, "proposal scale must be positive");
        Self {
            log_scale: scale.ln(),
            target,
            steps: 0,
            accepted: 0,
            frozen: false,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    /// Record one MH step with acceptance probability `alpha`.
    pub fn record(&mut self, alpha: f64, accepted: bool) {
        self.steps += 1;
        if accepted {
            self.accepted += 1;
        }
        if !self.frozen {
            let a = if alpha.is_nan() { 0.0 } else { alpha.min(1.0) };
            self.log_scale += (self.steps as f64).powf(-DECAY) * (a - self.target);
            self.log_scale = self.log_scale.clamp(-20.0, 10.0);
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }
}

/// min(1, exp(log_ratio)) with NaN mapped to 0.
pub fn accept_prob(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}
