//! Per-vehicle extended Kalman filter conditioned on one bias hypothesis.

use libm::{cos, sin};
use nalgebra::{Dyn, Matrix2, Matrix6, OMatrix, RowVector6, Vector2, Vector3, Vector6, U6};

use super::{FilterError, RangeModel};
use crate::error_models::NoiseConfig;

/// Floor on the innovation variance, m².
const MIN_INNOVATION_VARIANCE: f64 = 1e-6;

/// Mean and covariance of `(x, ẋ, y, ẏ, b, ḃ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleEkfState {
    pub mean: Vector6<f64>,
    pub cov: Matrix6<f64>,
}

impl VehicleEkfState {
    pub fn new(mean: Vector6<f64>, cov: Matrix6<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[2])
    }

    pub fn horizontal_cov(&self) -> Matrix2<f64> {
        Matrix2::new(self.cov[(0, 0)], self.cov[(0, 2)], self.cov[(2, 0)], self.cov[(2, 2)])
    }

    pub fn predict(&mut self, a: &Matrix6<f64>, r: &Matrix6<f64>) {
        self.mean = a * self.mean;
        self.cov = a * self.cov * a.transpose() + r;
        symmetrize(&mut self.cov);
    }
}

fn symmetrize(m: &mut Matrix6<f64>) {
    *m = (*m + m.transpose()) * 0.5;
}

/// Constant-velocity transition, block-diagonal over (x, y, clock).
pub fn transition_matrix(dt: f64) -> Matrix6<f64> {
    let mut a = Matrix6::identity();
    for blk in 0..3 {
        a[(2 * blk, 2 * blk + 1)] = dt;
    }
    a
}

/// Clock block of the process noise: drift noise `σ_d` as an acceleration on
/// the bias plus a direct bias rate noise `σ_b`.
pub fn clock_process_noise(noise: &NoiseConfig) -> Matrix2<f64> {
    let dt = noise.delta_t;
    let sd2 = noise.sigma_d * noise.sigma_d;
    let sb2 = noise.sigma_b * noise.sigma_b;
    let (dt2, dt3, dt4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);
    Matrix2::new(sd2 * dt4 / 4.0 + sb2 * dt2, sd2 * dt3 / 2.0, sd2 * dt3 / 2.0, sd2 * dt2)
}

/// Process noise for a vehicle heading `heading` radians counter-clockwise
/// from east.
///
/// `σ_ax` acts along the direction of travel and `σ_ay` across it, each as a
/// white acceleration. A heading of zero gives the axis-aligned blocks
/// `σ²·[[Δt⁴/4, Δt³/2], [Δt³/2, Δt²]]`.
pub fn process_noise(noise: &NoiseConfig, heading: f64) -> Matrix6<f64> {
    let dt = noise.delta_t;
    let (c, s) = (cos(heading), sin(heading));
    let rot = Matrix2::new(c, -s, s, c);
    let accel =
        rot * Matrix2::new(
            noise.sigma_ax * noise.sigma_ax,
            0.0,
            0.0,
            noise.sigma_ay * noise.sigma_ay,
        ) * rot.transpose();
    let g = [0.5 * dt * dt, dt];
    let mut r = Matrix6::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    r[(2 * i + a, 2 * j + b)] = accel[(i, j)] * g[a] * g[b];
                }
            }
        }
    }
    let clock = clock_process_noise(noise);
    for a in 0..2 {
        for b in 0..2 {
            r[(4 + a, 4 + b)] = clock[(a, b)];
        }
    }
    r
}

/// Predicted range and its linearisation for one (vehicle, satellite) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementGeometry {
    /// Row of `H̃`: `∂Z/∂state`.
    pub jacobian: RowVector6<f64>,
    pub predicted: f64,
    /// `Z − Z̄`.
    pub innovation: f64,
    /// `H Σ Hᵀ + σ_z²`, floored.
    pub variance: f64,
    /// `H Σ Hᵀ` without receiver noise; the adaptive noise estimate needs it.
    pub state_variance: f64,
    /// `(Z − Z̄)² / P`.
    pub mahalanobis: f64,
}

/// Linearise the range to `sat` (ENU) about the predicted state.
///
/// The receiver sits at the predicted `(x, y)` and at `altitude`.
pub fn measurement_geometry(
    ekf: &VehicleEkfState,
    common_bias: f64,
    sat: &Vector3<f64>,
    measured: f64,
    altitude: f64,
    sigma_z: f64,
    model: &RangeModel,
    clock_in_jacobian: bool,
) -> Result<MeasurementGeometry, FilterError> {
    let p = Vector3::new(ekf.mean[0], ekf.mean[2], altitude);
    let (range, unit) = match model {
        RangeModel::Spherical => {
            let d = p - sat;
            let n = d.norm();
            if n < 1e-6 {
                return Err(FilterError::CoincidentSatellite);
            }
            (n, d / n)
        }
        RangeModel::PlaneWave { reference } => {
            let r = Vector3::new(reference[0], reference[1], reference[2]);
            let d = r - sat;
            let n = d.norm();
            if n < 1e-6 {
                return Err(FilterError::CoincidentSatellite);
            }
            let u = d / n;
            (n + u.dot(&(p - r)), u)
        }
    };
    let clock = if clock_in_jacobian { 1.0 } else { 0.0 };
    let jacobian = RowVector6::new(unit.x, 0.0, unit.y, 0.0, clock, 0.0);
    let predicted = range + common_bias + ekf.mean[4];
    let state_variance = (jacobian * ekf.cov * jacobian.transpose())[(0, 0)];
    let variance = (state_variance + sigma_z * sigma_z).max(MIN_INNOVATION_VARIANCE);
    let innovation = measured - predicted;
    Ok(MeasurementGeometry {
        jacobian,
        predicted,
        innovation,
        variance,
        state_variance,
        mahalanobis: innovation * innovation / variance,
    })
}

/// One measurement accepted into the batch update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedMeasurement {
    pub jacobian: RowVector6<f64>,
    pub innovation: f64,
    /// Diagonal entry of `Q`.
    pub noise_variance: f64,
}

/// Batch update with all accepted measurements of one vehicle:
/// `K = ΣH̃ᵀ(H̃ΣH̃ᵀ + Q)⁻¹`, `μ += K·innovation`, `Σ = (I − KH̃)Σ`.
pub fn ekf_update(ekf: &mut VehicleEkfState, accepted: &[AcceptedMeasurement]) -> Result<(), FilterError> {
    let n = accepted.len();
    if n == 0 {
        return Ok(());
    }
    let h = OMatrix::<f64, Dyn, U6>::from_fn(n, |r, c| accepted[r].jacobian[c]);
    let h_sigma = &h * ekf.cov;
    let mut s = &h_sigma * h.transpose();
    for (i, m) in accepted.iter().enumerate() {
        s[(i, i)] += m.noise_variance;
    }
    let chol = s.cholesky().ok_or(FilterError::SingularInnovation)?;
    // K = Σ Hᵀ S⁻¹ = (S⁻¹ H Σ)ᵀ for symmetric Σ and S
    let gain = chol.solve(&h_sigma).transpose();
    let innovation = nalgebra::DVector::from_iterator(n, accepted.iter().map(|m| m.innovation));
    ekf.mean += &gain * innovation;
    ekf.cov = (Matrix6::identity() - &gain * &h) * ekf.cov;
    symmetrize(&mut ekf.cov);
    Ok(())
}

/// Smallest eigenvalue of a symmetric 6×6 matrix.
#[cfg(test)]
pub(crate) fn min_eigenvalue(m: &Matrix6<f64>) -> f64 {
    m.symmetric_eigenvalues().min()
}
