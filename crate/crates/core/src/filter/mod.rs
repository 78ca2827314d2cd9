//! The Rao-Blackwellized particle filter and its building blocks.
//!
//! Each particle samples the per-satellite common biases; conditioned on
//! them, every vehicle's kinematic state and receiver clock is tracked by its
//! own six-state EKF in the order `(x, ẋ, y, ẏ, b, ḃ)`.

mod adaptive;
mod ekf;
mod rbpf;
mod resample;

pub use adaptive::{adaptive_noise, InnovationWindow};
pub use ekf::{
    clock_process_noise, ekf_update, measurement_geometry, process_noise, transition_matrix, AcceptedMeasurement,
    MeasurementGeometry, VehicleEkfState,
};
pub use rbpf::{
    apply_map_constraint, classify_multipath, predict_particle, weight_measurement, BiasEstimate, Gate, Particle, Rbpf,
    StepOutput, VehicleEstimate, VehicleInit,
};
pub use resample::{effective_sample_size, systematic_resample};

use crate::error_models::NoiseConfig;
use crate::map_constraints::MapError;
use crate::SatelliteId;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("satellite coincides with the receiver")]
    CoincidentSatellite,
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("all particle weights are zero")]
    Divergence,
    #[error("measurement from satellite {0} which the filter does not track")]
    UnknownSatellite(SatelliteId),
    #[error("no satellite position for {0}")]
    MissingSatellitePosition(SatelliteId),
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ResamplePolicy {
    /// Resample after every step.
    Always,
    /// Resample only when the effective sample size drops below
    /// `fraction · N_p`.
    EffectiveSampleSize { fraction: f64 },
}

/// How the predicted range depends on the receiver position.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RangeModel {
    /// Euclidean distance to the satellite.
    Spherical,
    /// Range linearised once about a fixed reference point, making the
    /// measurement model exactly linear. Used to compare against a plain KF.
    PlaneWave { reference: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FilterConfig {
    pub n_particles: usize,
    /// Below `F⁻¹(alpha1)` a measurement is always accepted.
    pub alpha1: f64,
    /// Above `F⁻¹(alpha2)` a measurement is always rejected.
    pub alpha2: f64,
    /// Mahalanobis level `F⁻¹(alpha3)` priced into rejected measurements.
    pub alpha3: f64,
    pub noise: NoiseConfig,
    /// Monte Carlo samples per containment probability.
    pub n_mc: usize,
    pub adaptive_noise: bool,
    pub adaptive_window: usize,
    pub resample: ResamplePolicy,
    /// `∂Z/∂b = 1`. Off reproduces a Jacobian with a zero clock column,
    /// appropriate only when the receiver clock is not simulated.
    pub clock_in_jacobian: bool,
    /// χ² multipath classification; off accepts every measurement.
    pub gating: bool,
    pub map_constraint: bool,
    pub range_model: RangeModel,
    /// Receiver altitude where the lane map has none.
    pub default_altitude: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n_particles: 200,
            alpha1: 0.95,
            alpha2: 1.0,
            alpha3: 0.99,
            noise: NoiseConfig::default(),
            n_mc: 100,
            adaptive_noise: false,
            adaptive_window: 10,
            resample: ResamplePolicy::Always,
            clock_in_jacobian: true,
            gating: true,
            map_constraint: true,
            range_model: RangeModel::Spherical,
            default_altitude: 0.0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.n_particles == 0 {
            return Err(FilterError::InvalidConfig("n_particles must be positive"));
        }
        let in_unit = |a: f64| a > 0.0 && a <= 1.0;
        if !(in_unit(self.alpha1) && in_unit(self.alpha2) && in_unit(self.alpha3)) {
            return Err(FilterError::InvalidConfig("confidence levels must lie in (0, 1]"));
        }
        if self.alpha1 >= self.alpha2 {
            return Err(FilterError::InvalidConfig("alpha1 must be below alpha2"));
        }
        if self.alpha3 >= 1.0 {
            return Err(FilterError::InvalidConfig("alpha3 must be below 1"));
        }
        self.noise.validate().map_err(FilterError::InvalidConfig)?;
        if self.adaptive_noise && self.adaptive_window < 2 {
            return Err(FilterError::InvalidConfig("adaptive_window must be at least 2"));
        }
        if let ResamplePolicy::EffectiveSampleSize { fraction } = self.resample {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(FilterError::InvalidConfig("resample fraction must lie in [0, 1]"));
            }
        }
        if !self.default_altitude.is_finite() {
            return Err(FilterError::InvalidConfig("default_altitude must be finite"));
        }
        Ok(())
    }
}
