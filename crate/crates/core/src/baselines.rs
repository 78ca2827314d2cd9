//! Comparison algorithms: standalone least-squares fixes, the memoryless
//! map-matching correction of a common translation, and its variant fed by
//! per-vehicle constant-velocity smoothers.

use alloc::vec::Vec;

use libm::{cos, sin, sqrt};
use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2, Vector3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error_models::{NoiseConfig, PseudorangeMeasurement};
use crate::geodesy::{EnuPosition, SatelliteState};
use crate::map_constraints::LaneMap;
use crate::stats::normal_cdf;
use crate::SatelliteId;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("need at least 3 satellites, got {0}")]
    TooFewSatellites(usize),
    #[error("least squares did not converge")]
    NoConvergence,
    #[error("satellite geometry is singular")]
    SingularGeometry,
    #[error("no vehicles")]
    NoVehicles,
}

/// Standalone position fix of one receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoSolution {
    pub position: EnuPosition,
    /// Receiver clock bias, m.
    pub clock_bias: f64,
    /// Covariance of `(x, y, b)`.
    pub covariance: Matrix3<f64>,
    pub satellites: Vec<SatelliteId>,
}

impl EgoSolution {
    pub fn horizontal(&self) -> Vector2<f64> {
        Vector2::new(self.position.0.x, self.position.0.y)
    }

    pub fn horizontal_cov(&self) -> Matrix2<f64> {
        self.covariance.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

const EGO_MAX_ITERATIONS: usize = 50;
const EGO_STEP_TOLERANCE: f64 = 1e-4;

/// Gauss-Newton on the pseudo-ranges for `(x, y, b)` with the altitude held
/// fixed. Measurements whose satellite has no state are skipped.
///
/// `initial` seeds the horizontal position; the origin works for receivers
/// within a few hundred kilometres of it.
pub fn ego_localize(
    measurements: &[PseudorangeMeasurement],
    satellites: &[SatelliteState],
    altitude: f64,
    sigma_z: f64,
    initial: Option<Vector2<f64>>,
) -> Result<EgoSolution, BaselineError> {
    let mut used: Vec<(SatelliteId, Vector3<f64>, f64)> = measurements
        .iter()
        .filter_map(|m| {
            satellites
                .iter()
                .find(|s| s.satellite_id == m.satellite_id)
                .map(|s| (m.satellite_id, s.position.0, m.range))
        })
        .collect();
    used.sort_by_key(|u| u.0);
    if used.len() < 3 {
        return Err(BaselineError::TooFewSatellites(used.len()));
    }
    let start = initial.unwrap_or_else(Vector2::zeros);
    let mut x = Vector3::new(start.x, start.y, 0.0);
    for _ in 0..EGO_MAX_ITERATIONS {
        let mut gtg = Matrix3::zeros();
        let mut gtr = Vector3::zeros();
        for (_, s, z) in &used {
            let d = Vector3::new(x.x, x.y, altitude) - s;
            let r = d.norm();
            let g = Vector3::new(d.x / r, d.y / r, 1.0);
            let resid = z - (r + x.z);
            gtg += g * g.transpose();
            gtr += g * resid;
        }
        let chol = gtg.cholesky().ok_or(BaselineError::SingularGeometry)?;
        let step = chol.solve(&gtr);
        x += step;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(BaselineError::NoConvergence);
        }
        if step.norm() < EGO_STEP_TOLERANCE {
            // covariance at the converged point
            let mut gtg = Matrix3::zeros();
            for (_, s, _) in &used {
                let d = Vector3::new(x.x, x.y, altitude) - s;
                let r = d.norm();
                let g = Vector3::new(d.x / r, d.y / r, 1.0);
                gtg += g * g.transpose();
            }
            let inv = gtg.try_inverse().ok_or(BaselineError::SingularGeometry)?;
            return Ok(EgoSolution {
                position: EnuPosition::new(x.x, x.y, altitude),
                clock_bias: x.z,
                covariance: inv * (sigma_z * sigma_z),
                satellites: used.iter().map(|u| u.0).collect(),
            });
        }
    }
    Err(BaselineError::NoConvergence)
}

/// One vehicle's input to the map-matching correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmmInput {
    pub position: Vector2<f64>,
    /// Non-common error covariance; its RMS axis sets the blur.
    pub cov: Matrix2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticCmmConfig {
    pub n_candidates: usize,
    /// Std of the zero-mean Gaussian the candidate translations are drawn
    /// from, m.
    pub prior_std: f64,
}

impl Default for StaticCmmConfig {
    fn default() -> Self {
        Self {
            n_candidates: 500,
            prior_std: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticCmmResult {
    /// Common translation added to every input position.
    pub correction: Vector2<f64>,
    /// Weighted spread of the candidates around `correction`.
    pub correction_cov: Matrix2<f64>,
    pub corrected: Vec<Vector2<f64>>,
    /// Input covariance plus `correction_cov`, per vehicle.
    pub covariances: Vec<Matrix2<f64>>,
    /// Every candidate scored zero; the correction is zero.
    pub low_confidence: bool,
}

/// Lane likelihood blurred by a Gaussian of std `sigma`: `Φ(d / σ)` with `d`
/// the signed distance to the lane boundary (exact for a straight edge).
pub fn blurred_in_lane(map: &LaneMap, p: &Vector2<f64>, sigma: f64) -> f64 {
    let d = map.signed_distance(p);
    if sigma <= 0.0 {
        return if d >= 0.0 { 1.0 } else { 0.0 };
    }
    normal_cdf(d / sigma)
}

/// Memoryless cooperative map matching: draw candidate common translations,
/// score each by `Π_i blurred_in_lane(p_i + t)`, return the weighted mean.
pub fn static_cmm<R: Rng + ?Sized>(
    inputs: &[CmmInput],
    map: &LaneMap,
    cfg: &StaticCmmConfig,
    rng: &mut R,
) -> Result<StaticCmmResult, BaselineError> {
    if inputs.is_empty() {
        return Err(BaselineError::NoVehicles);
    }
    let blur: Vec<f64> = inputs.iter().map(|i| sqrt(0.5 * i.cov.trace().max(0.0))).collect();
    let mut candidates = Vec::with_capacity(cfg.n_candidates);
    let mut total = 0.0;
    for _ in 0..cfg.n_candidates {
        let (a, b): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
        let t = Vector2::new(a, b) * cfg.prior_std;
        let score: f64 = inputs
            .iter()
            .zip(&blur)
            .map(|(inp, s)| blurred_in_lane(map, &(inp.position + t), *s))
            .product();
        total += score;
        candidates.push((t, score));
    }
    let low_confidence = !(total > 0.0);
    let (correction, correction_cov) = if low_confidence {
        (Vector2::zeros(), Matrix2::zeros())
    } else {
        let mean = candidates.iter().map(|(t, s)| t * (s / total)).sum::<Vector2<f64>>();
        let cov = candidates
            .iter()
            .map(|(t, s)| (t - mean) * (t - mean).transpose() * (s / total))
            .sum::<Matrix2<f64>>();
        (mean, cov)
    };
    Ok(StaticCmmResult {
        correction,
        correction_cov,
        corrected: inputs.iter().map(|i| i.position + correction).collect(),
        covariances: inputs.iter().map(|i| i.cov + correction_cov).collect(),
        low_confidence,
    })
}

/// Constant-velocity Kalman filter over a vehicle's ego fixes, state
/// `(x, ẋ, y, ẏ)`, with the along/cross-track accelerations of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSmoother {
    transition: Matrix4<f64>,
    process: Matrix4<f64>,
    initial_velocity_var: f64,
    state: Option<(Vector4<f64>, Matrix4<f64>)>,
}

impl CvSmoother {
    pub fn new(noise: &NoiseConfig, heading: f64, initial_velocity_var: f64) -> Self {
        let dt = noise.delta_t;
        let mut transition = Matrix4::identity();
        transition[(0, 1)] = dt;
        transition[(2, 3)] = dt;
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
        let process = Matrix4::from_fn(|r, c| accel[(r / 2, c / 2)] * g[r % 2] * g[c % 2]);
        Self {
            transition,
            process,
            initial_velocity_var,
            state: None,
        }
    }

    pub fn state(&self) -> Option<&(Vector4<f64>, Matrix4<f64>)> {
        self.state.as_ref()
    }

    /// Predict one interval and, if a fix is available, update with it.
    /// Returns the horizontal estimate once initialised.
    pub fn step(&mut self, fix: Option<(Vector2<f64>, Matrix2<f64>)>) -> Option<(Vector2<f64>, Matrix2<f64>)> {
        match (&mut self.state, fix) {
            (None, None) => return None,
            (None, Some((z, r))) => {
                let mut p = Matrix4::zeros();
                p[(0, 0)] = r[(0, 0)];
                p[(0, 2)] = r[(0, 1)];
                p[(2, 0)] = r[(1, 0)];
                p[(2, 2)] = r[(1, 1)];
                p[(1, 1)] = self.initial_velocity_var;
                p[(3, 3)] = self.initial_velocity_var;
                self.state = Some((Vector4::new(z.x, 0.0, z.y, 0.0), p));
            }
            (Some((x, p)), fix) => {
                *x = self.transition * *x;
                *p = self.transition * *p * self.transition.transpose() + self.process;
                if let Some((z, r)) = fix {
                    let h = nalgebra::Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0);
                    let s = h * *p * h.transpose() + r;
                    if let Some(s_inv) = s.try_inverse() {
                        let k = *p * h.transpose() * s_inv;
                        *x += k * (z - h * *x);
                        *p = (Matrix4::identity() - k * h) * *p;
                        *p = (*p + p.transpose()) * 0.5;
                    }
                }
            }
        }
        self.state.as_ref().map(|(x, p)| {
            (
                Vector2::new(x[0], x[2]),
                Matrix2::new(p[(0, 0)], p[(0, 2)], p[(2, 0)], p[(2, 2)]),
            )
        })
    }
}
