//! Truth-side pseudo-range error processes and measurement synthesis.

use alloc::vec::Vec;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geodesy::SatelliteState;
use crate::{SatelliteId, VehicleId};

/// Noise parameters, SI units. Defaults are the reference simulation values.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NoiseConfig {
    /// Receiver white noise std, m.
    pub sigma_z: f64,
    /// Common-bias drift std, m/s.
    pub sigma_c: f64,
    /// Clock-bias derivative std, m/s.
    pub sigma_b: f64,
    /// Clock-drift derivative std, m/s².
    pub sigma_d: f64,
    /// Along-track acceleration std, m/s².
    pub sigma_ax: f64,
    /// Cross-track acceleration std, m/s².
    pub sigma_ay: f64,
    /// Std of the filter-side common-bias initialisation error, m.
    pub sigma_init_common: f64,
    /// Update interval, s.
    pub delta_t: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_z: 1.0,
            sigma_c: 0.1,
            sigma_b: 1.0,
            sigma_d: 1.0,
            sigma_ax: 1.0,
            sigma_ay: 0.1,
            sigma_init_common: 0.5,
            delta_t: 0.1,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        let sigmas = [
            self.sigma_z,
            self.sigma_c,
            self.sigma_b,
            self.sigma_d,
            self.sigma_ax,
            self.sigma_ay,
            self.sigma_init_common,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err("noise standard deviations must be finite and non-negative");
        }
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err("delta_t must be positive");
        }
        Ok(())
    }
}

/// Per-satellite common biases `C^j`, indexed densely in constellation order.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonBiasVector {
    pub values: Vec<f64>,
}

impl CommonBiasVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: alloc::vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ground-truth vehicle state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleTruthState {
    /// ENU position; `z` is the map altitude.
    pub position: Vector3<f64>,
    pub velocity: Vector2<f64>,
    pub clock_bias: f64,
    pub clock_drift: f64,
}

/// A single pseudo-range observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudorangeMeasurement {
    pub time: f64,
    pub vehicle_id: VehicleId,
    pub satellite_id: SatelliteId,
    pub range: f64,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Independent `N(0, magnitude²)` biases for `n_sats` satellites.
pub fn init_common_biases<R: Rng + ?Sized>(n_sats: usize, magnitude: f64, rng: &mut R) -> CommonBiasVector {
    CommonBiasVector {
        values: (0..n_sats).map(|_| magnitude * normal(rng)).collect(),
    }
}

/// One Gauss-Markov step: `C_t = C_{t-1} + w Δt`, `w ~ N(0, σ_c²)`.
pub fn propagate_common_biases<R: Rng + ?Sized>(
    c: &CommonBiasVector,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> CommonBiasVector {
    let mut out = c.clone();
    propagate_common_biases_in_place(&mut out, cfg, rng);
    out
}

pub fn propagate_common_biases_in_place<R: Rng + ?Sized>(c: &mut CommonBiasVector, cfg: &NoiseConfig, rng: &mut R) {
    let step = cfg.sigma_c * cfg.delta_t;
    for v in c.values.iter_mut() {
        *v += step * normal(rng);
    }
}

/// Two-state clock random walk whose increment covariance is the filter's
/// `R_b` block: drift noise enters as an acceleration, bias noise as a rate.
pub fn propagate_clock<R: Rng + ?Sized>(bias: f64, drift: f64, cfg: &NoiseConfig, rng: &mut R) -> (f64, f64) {
    let dt = cfg.delta_t;
    let w_d = cfg.sigma_d * normal(rng);
    let w_b = cfg.sigma_b * normal(rng);
    let new_bias = bias + drift * dt + 0.5 * w_d * dt * dt + w_b * dt;
    let new_drift = drift + w_d * dt;
    (new_bias, new_drift)
}

/// Synthesize `Z = ‖p − s‖ + C^j + b + multipath + v`, `v ~ N(0, σ_z²)`.
///
/// `bias_index` is the dense index of `sat` inside `c`. Blocked satellites are
/// the caller's business: nothing here knows about buildings.
pub fn generate_pseudorange<R: Rng + ?Sized>(
    time: f64,
    vehicle_id: VehicleId,
    truth: &VehicleTruthState,
    sat: &SatelliteState,
    c: &CommonBiasVector,
    bias_index: usize,
    multipath_error: f64,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> PseudorangeMeasurement {
    let geometric = (truth.position - sat.position.0).norm();
    let range = geometric + c.values[bias_index] + truth.clock_bias + multipath_error + cfg.sigma_z * normal(rng);
    PseudorangeMeasurement {
        time,
        vehicle_id,
        satellite_id: sat.satellite_id,
        range,
    }
}
