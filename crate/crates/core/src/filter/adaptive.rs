//! Receiver-noise variance estimated from recent innovations.

use alloc::collections::VecDeque;

/// The last `k` innovations `Z − Z̄` of one (vehicle, satellite) channel.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationWindow {
    capacity: usize,
    values: VecDeque<f64>,
}

impl InnovationWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            values: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, innovation: f64) {
        if self.capacity == 0 {
            return;
        }
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(innovation);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    /// Unbiased sample variance (mean removed, `1/(k−1)`); `None` below two
    /// samples.
    pub fn sample_variance(&self) -> Option<f64> {
        let n = self.values.len();
        if n < 2 {
            return None;
        }
        let mean = self.values.iter().sum::<f64>() / n as f64;
        Some(self.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
    }
}

/// Diagonal entry of the adaptive measurement noise for one channel:
/// `max(var(innovations) − H Σ Hᵀ, σ_z²)`, or `σ_z²` while the window holds
/// fewer than two innovations.
pub fn adaptive_noise(window: &InnovationWindow, state_variance: f64, sigma_z: f64) -> f64 {
    let floor = sigma_z * sigma_z;
    match window.sample_variance() {
        Some(v) => (v - state_variance).max(floor),
        None => floor,
    }
}
