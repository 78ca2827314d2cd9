use alloc::vec::Vec;

use libm::{exp, log};
use nalgebra::{Matrix2, Matrix6, Vector2, Vector3, Vector6};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::adaptive::{adaptive_noise, InnovationWindow};
use super::ekf::{
    ekf_update, measurement_geometry, process_noise, transition_matrix, AcceptedMeasurement, MeasurementGeometry,
    VehicleEkfState,
};
use super::resample::{effective_sample_size, systematic_resample};
use super::{FilterConfig, FilterError, ResamplePolicy};
use crate::error_models::{propagate_common_biases_in_place, CommonBiasVector, NoiseConfig, PseudorangeMeasurement};
use crate::geodesy::SatelliteState;
use crate::map_constraints::{containment_probability, LaneMap};
use crate::rng::{domain, stream};
use crate::stats::{chi2_cdf, chi2_inv, gaussian_log_density};
use crate::{SatelliteId, VehicleId};

/// χ² thresholds derived from the three confidence levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub alpha1: f64,
    pub alpha2: f64,
    /// `F⁻¹(α₁)`.
    pub accept_below: f64,
    /// `F⁻¹(α₂)`; infinite for `α₂ = 1`.
    pub reject_above: f64,
    /// `F⁻¹(α₃)`, the Mahalanobis level charged for a rejected measurement.
    pub penalty: f64,
}

impl Gate {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Self {
        Self {
            alpha1,
            alpha2,
            accept_below: chi2_inv(alpha1),
            reject_above: chi2_inv(alpha2),
            penalty: chi2_inv(alpha3),
        }
    }

    pub fn from_config(cfg: &FilterConfig) -> Self {
        Self::new(cfg.alpha1, cfg.alpha2, cfg.alpha3)
    }
}

/// Multipath indicator: `true` when the measurement is judged to carry a
/// reflection and is withheld from the state update.
///
/// Between the two thresholds the decision is random with probability
/// `(F(D²) − α₁)/(α₂ − α₁)`.
pub fn classify_multipath<R: Rng + ?Sized>(geom: &MeasurementGeometry, gate: &Gate, rng: &mut R) -> bool {
    let d2 = geom.mahalanobis;
    if d2 <= gate.accept_below {
        return false;
    }
    if d2 >= gate.reject_above {
        return true;
    }
    let u: f64 = rng.random();
    u <= (chi2_cdf(d2) - gate.alpha1) / (gate.alpha2 - gate.alpha1)
}

/// Log-domain weight update for one measurement.
///
/// Accepted: Gaussian likelihood `N(Z; Z̄, P)`. Rejected: the same density
/// evaluated at the fixed level `F⁻¹(α₃)`, independent of the residual.
pub fn weight_measurement(log_weight: f64, geom: &MeasurementGeometry, multipath: bool, gate: &Gate) -> f64 {
    let d2 = if multipath { gate.penalty } else { geom.mahalanobis };
    log_weight + gaussian_log_density(d2, geom.variance)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub biases: CommonBiasVector,
    pub ekfs: Vec<VehicleEkfState>,
    /// Log of the weight; normalised so the weights sum to one after each
    /// step.
    pub log_weight: f64,
    /// Innovation windows indexed `vehicle * n_sats + sat` (empty unless the
    /// adaptive noise is on).
    pub windows: Vec<InnovationWindow>,
    /// Measurements flagged as multipath per vehicle in the last step.
    pub flagged: Vec<u32>,
}

impl Particle {
    pub fn weight(&self) -> f64 {
        exp(self.log_weight)
    }
}

/// Propagate the particle's biases (its own random increments) and every
/// vehicle EKF.
pub fn predict_particle<R: Rng + ?Sized>(
    particle: &mut Particle,
    transition: &Matrix6<f64>,
    process: &[Matrix6<f64>],
    noise: &NoiseConfig,
    rng: &mut R,
) {
    propagate_common_biases_in_place(&mut particle.biases, noise, rng);
    for (ekf, r) in particle.ekfs.iter_mut().zip(process) {
        ekf.predict(transition, r);
    }
}

fn vehicle_containment<R: Rng + ?Sized>(
    ekf: &VehicleEkfState,
    map: &LaneMap,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64, FilterError> {
    Ok(containment_probability(
        &ekf.position(),
        &ekf.horizontal_cov(),
        map,
        n_mc,
        rng,
    )?)
}

/// Multiply the weight by the product over vehicles of the probability that
/// the vehicle is on a lane. An empty map constrains nothing.
pub fn apply_map_constraint<R: Rng + ?Sized>(
    particle: &mut Particle,
    map: &LaneMap,
    n_mc: usize,
    rng: &mut R,
) -> Result<(), FilterError> {
    if map.is_empty() {
        return Ok(());
    }
    for ekf in &particle.ekfs {
        particle.log_weight += log(vehicle_containment(ekf, map, n_mc, rng)?);
    }
    Ok(())
}

/// Starting point of one vehicle's EKF.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleInit {
    pub id: VehicleId,
    pub state: VehicleEkfState,
    /// Direction of travel, radians counter-clockwise from east; orients the
    /// along/cross-track process noise.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleEstimate {
    pub id: VehicleId,
    /// Weighted mean of the particles' EKF means.
    pub mean: Vector6<f64>,
    /// Mixture covariance of the horizontal position (within plus between
    /// particles).
    pub horizontal_cov: Matrix2<f64>,
    pub n_measurements: usize,
    /// Weighted mean number of measurements flagged as multipath.
    pub flagged: f64,
}

impl VehicleEstimate {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasEstimate {
    pub satellites: Vec<SatelliteId>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub vehicles: Vec<VehicleEstimate>,
    pub biases: BiasEstimate,
    /// Before resampling.
    pub effective_sample_size: f64,
    pub resampled: bool,
    /// Every weight vanished; weights were reset to uniform.
    pub diverged: bool,
}

/// One satellite observation of one vehicle, ready for the filter.
#[derive(Debug, Clone, Copy)]
struct Observation {
    sat: usize,
    range: f64,
    position: Vector3<f64>,
}

/// Read-only data shared by all particles during a step.
struct StepContext<'a> {
    cfg: &'a FilterConfig,
    map: &'a LaneMap,
    transition: &'a Matrix6<f64>,
    process: &'a [Matrix6<f64>],
    gate: &'a Gate,
    vehicle_ids: &'a [VehicleId],
    observations: &'a [Vec<Observation>],
    n_sats: usize,
    seed: u64,
    step: u64,
}

fn particle_key(k: usize) -> u64 {
    (k as u64) << 32
}

impl StepContext<'_> {
    fn process_particle(&self, k: usize, particle: &mut Particle) -> Result<(), FilterError> {
        let cfg = self.cfg;
        let mut rng = stream(self.seed, domain::FILTER_STEP, self.step, particle_key(k));
        predict_particle(particle, self.transition, self.process, &cfg.noise, &mut rng);

        let constrain = cfg.map_constraint && !self.map.is_empty();
        let sigma_z = cfg.noise.sigma_z;
        let mut accepted = Vec::new();
        for (v, obs) in self.observations.iter().enumerate() {
            // each vehicle draws from its own stream so the processing order
            // of vehicles cannot change the result
            let mut rng = stream(
                self.seed,
                domain::FILTER_STEP,
                self.step,
                particle_key(k) | (self.vehicle_ids[v].0 as u64 + 1),
            );
            let ekf = &particle.ekfs[v];
            let altitude = self.map.altitude_at(&ekf.position()).unwrap_or(cfg.default_altitude);
            accepted.clear();
            let mut flagged = 0;
            for o in obs {
                let geom = measurement_geometry(
                    ekf,
                    particle.biases.values[o.sat],
                    &o.position,
                    o.range,
                    altitude,
                    sigma_z,
                    &cfg.range_model,
                    cfg.clock_in_jacobian,
                )?;
                let multipath = cfg.gating && classify_multipath(&geom, self.gate, &mut rng);
                particle.log_weight = weight_measurement(particle.log_weight, &geom, multipath, self.gate);
                let mut noise_variance = sigma_z * sigma_z;
                if cfg.adaptive_noise {
                    let window = &mut particle.windows[v * self.n_sats + o.sat];
                    window.push(geom.innovation);
                    noise_variance = adaptive_noise(window, geom.state_variance, sigma_z);
                }
                if multipath {
                    flagged += 1;
                } else {
                    accepted.push(AcceptedMeasurement {
                        jacobian: geom.jacobian,
                        innovation: geom.innovation,
                        noise_variance,
                    });
                }
            }
            particle.flagged[v] = flagged;
            let ekf = &mut particle.ekfs[v];
            ekf_update(ekf, &accepted)?;
            if constrain {
                particle.log_weight += log(vehicle_containment(ekf, self.map, cfg.n_mc, &mut rng)?);
            }
        }
        Ok(())
    }
}

/// The cooperative filter over a fixed set of satellites and vehicles.
#[derive(Debug, Clone)]
pub struct Rbpf {
    cfg: FilterConfig,
    map: LaneMap,
    satellites: Vec<SatelliteId>,
    vehicle_ids: Vec<VehicleId>,
    transition: Matrix6<f64>,
    process: Vec<Matrix6<f64>>,
    gate: Gate,
    particles: Vec<Particle>,
    seed: u64,
    steps: u64,
}

impl Rbpf {
    /// Particles start from `bias_prior` (one value per satellite, same order
    /// as `satellites`) perturbed by `N(0, σ_init²)`; all share the vehicle
    /// initial states. Vehicles are processed in the order given.
    pub fn new(
        cfg: FilterConfig,
        map: LaneMap,
        satellites: &[SatelliteId],
        bias_prior: &[f64],
        vehicles: &[VehicleInit],
        seed: u64,
    ) -> Result<Self, FilterError> {
        cfg.validate()?;
        if satellites.len() != bias_prior.len() {
            return Err(FilterError::InvalidConfig("one bias prior per satellite required"));
        }
        // sort satellites so lookups can bisect, carrying the priors along
        let mut order: Vec<usize> = (0..satellites.len()).collect();
        order.sort_by_key(|&i| satellites[i]);
        let sats: Vec<SatelliteId> = order.iter().map(|&i| satellites[i]).collect();
        if sats.windows(2).any(|w| w[0] == w[1]) {
            return Err(FilterError::InvalidConfig("duplicate satellite id"));
        }
        let prior: Vec<f64> = order.iter().map(|&i| bias_prior[i]).collect();
        let vehicle_ids: Vec<VehicleId> = vehicles.iter().map(|v| v.id).collect();
        let mut sorted_ids = vehicle_ids.clone();
        sorted_ids.sort();
        if sorted_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(FilterError::InvalidConfig("duplicate vehicle id"));
        }

        // with a zero clock column the clock is unobservable; any correlation
        // with position would let updates move `b`, which still enters `Z̄`
        let initial: Vec<VehicleEkfState> = vehicles
            .iter()
            .map(|v| {
                let mut s = v.state.clone();
                if !cfg.clock_in_jacobian {
                    for i in 4..6 {
                        for j in 0..4 {
                            s.cov[(i, j)] = 0.0;
                            s.cov[(j, i)] = 0.0;
                        }
                    }
                }
                s
            })
            .collect();

        let n = cfg.n_particles;
        let n_windows = if cfg.adaptive_noise {
            vehicles.len() * sats.len()
        } else {
            0
        };
        let particles = (0..n)
            .map(|k| {
                let mut rng = stream(seed, domain::FILTER_INIT, k as u64, 0);
                let values = prior
                    .iter()
                    .map(|c| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        c + cfg.noise.sigma_init_common * z
                    })
                    .collect();
                Particle {
                    biases: CommonBiasVector { values },
                    ekfs: initial.clone(),
                    log_weight: -log(n as f64),
                    windows: (0..n_windows)
                        .map(|_| InnovationWindow::new(cfg.adaptive_window))
                        .collect(),
                    flagged: alloc::vec![0; vehicles.len()],
                }
            })
            .collect();
        Ok(Self {
            transition: transition_matrix(cfg.noise.delta_t),
            process: vehicles.iter().map(|v| process_noise(&cfg.noise, v.heading)).collect(),
            gate: Gate::from_config(&cfg),
            cfg,
            map,
            satellites: sats,
            vehicle_ids,
            particles,
            seed,
            steps: 0,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Satellites in ascending id, the order of every bias vector.
    pub fn satellites(&self) -> &[SatelliteId] {
        &self.satellites
    }

    pub fn vehicle_ids(&self) -> &[VehicleId] {
        &self.vehicle_ids
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Advance by one interval and absorb the measurements taken at its end.
    ///
    /// Measurements of vehicles the filter does not know are ignored; a
    /// vehicle without measurements is only predicted.
    pub fn step(
        &mut self,
        measurements: &[PseudorangeMeasurement],
        satellites: &[SatelliteState],
    ) -> Result<StepOutput, FilterError> {
        let mut observations: Vec<Vec<Observation>> = alloc::vec![Vec::new(); self.vehicle_ids.len()];
        for m in measurements {
            let Some(v) = self.vehicle_ids.iter().position(|id| *id == m.vehicle_id) else {
                continue;
            };
            let sat = self
                .satellites
                .binary_search(&m.satellite_id)
                .map_err(|_| FilterError::UnknownSatellite(m.satellite_id))?;
            let state = satellites
                .iter()
                .find(|s| s.satellite_id == m.satellite_id)
                .ok_or(FilterError::MissingSatellitePosition(m.satellite_id))?;
            observations[v].push(Observation {
                sat,
                range: m.range,
                position: state.position.0,
            });
        }
        for obs in observations.iter_mut() {
            obs.sort_by_key(|o| o.sat);
        }

        self.steps += 1;
        let ctx = StepContext {
            cfg: &self.cfg,
            map: &self.map,
            transition: &self.transition,
            process: &self.process,
            gate: &self.gate,
            vehicle_ids: &self.vehicle_ids,
            observations: &observations,
            n_sats: self.satellites.len(),
            seed: self.seed,
            step: self.steps,
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            self.particles
                .par_iter_mut()
                .enumerate()
                .try_for_each(|(k, p)| ctx.process_particle(k, p))?;
        }
        #[cfg(not(feature = "parallel"))]
        self.particles
            .iter_mut()
            .enumerate()
            .try_for_each(|(k, p)| ctx.process_particle(k, p))?;

        let diverged = !self.normalize();
        let weights: Vec<f64> = self.particles.iter().map(Particle::weight).collect();
        let ess = effective_sample_size(&weights);
        let (vehicles, biases) = self.estimate_with(&weights, &observations);

        let n = self.cfg.n_particles;
        let resample = match self.cfg.resample {
            ResamplePolicy::Always => true,
            ResamplePolicy::EffectiveSampleSize { fraction } => ess < fraction * n as f64,
        };
        if resample {
            let mut rng = stream(self.seed, domain::FILTER_STEP, self.steps, u64::MAX);
            let parents = systematic_resample(&weights, n, &mut rng)?;
            let uniform = -log(n as f64);
            self.particles = parents
                .into_iter()
                .map(|i| {
                    let mut p = self.particles[i].clone();
                    p.log_weight = uniform;
                    p
                })
                .collect();
        }
        Ok(StepOutput {
            vehicles,
            biases,
            effective_sample_size: ess,
            resampled: resample,
            diverged,
        })
    }

    /// Normalise the log-weights; returns `false` (and resets to uniform) if
    /// every weight is zero.
    fn normalize(&mut self) -> bool {
        let max = self
            .particles
            .iter()
            .map(|p| p.log_weight)
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            let uniform = -log(self.particles.len() as f64);
            for p in &mut self.particles {
                p.log_weight = uniform;
            }
            return false;
        }
        let total: f64 = self.particles.iter().map(|p| exp(p.log_weight - max)).sum();
        let shift = max + log(total);
        for p in &mut self.particles {
            p.log_weight -= shift;
        }
        true
    }

    /// Weighted point estimates from the current particle set.
    pub fn estimate(&self) -> (Vec<VehicleEstimate>, BiasEstimate) {
        let weights: Vec<f64> = self.particles.iter().map(Particle::weight).collect();
        self.estimate_with(&weights, &[])
    }

    fn estimate_with(
        &self,
        weights: &[f64],
        observations: &[Vec<Observation>],
    ) -> (Vec<VehicleEstimate>, BiasEstimate) {
        let total: f64 = weights.iter().sum();
        let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
        let vehicles = self
            .vehicle_ids
            .iter()
            .enumerate()
            .map(|(v, id)| {
                let mut mean = Vector6::zeros();
                let mut flagged = 0.0;
                for (p, wk) in self.particles.iter().zip(&w) {
                    mean += p.ekfs[v].mean * *wk;
                    flagged += p.flagged[v] as f64 * wk;
                }
                let mut cov = Matrix2::zeros();
                let centre = Vector2::new(mean[0], mean[2]);
                for (p, wk) in self.particles.iter().zip(&w) {
                    let d = p.ekfs[v].position() - centre;
                    cov += (p.ekfs[v].horizontal_cov() + d * d.transpose()) * *wk;
                }
                VehicleEstimate {
                    id: *id,
                    mean,
                    horizontal_cov: cov,
                    n_measurements: observations.get(v).map_or(0, Vec::len),
                    flagged,
                }
            })
            .collect();
        let n_sats = self.satellites.len();
        let mut mean = alloc::vec![0.0; n_sats];
        let mut variance = alloc::vec![0.0; n_sats];
        for (p, wk) in self.particles.iter().zip(&w) {
            for j in 0..n_sats {
                mean[j] += p.biases.values[j] * wk;
            }
        }
        for (p, wk) in self.particles.iter().zip(&w) {
            for j in 0..n_sats {
                let d = p.biases.values[j] - mean[j];
                variance[j] += d * d * wk;
            }
        }
        (
            vehicles,
            BiasEstimate {
                satellites: self.satellites.clone(),
                mean,
                variance,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::RangeModel;
    use crate::geodesy::EnuPosition;
    use crate::map_constraints::{Lane, Polygon};

    fn geom(d2: f64, variance: f64) -> MeasurementGeometry {
        MeasurementGeometry {
            jacobian: nalgebra::RowVector6::zeros(),
            predicted: 0.0,
            innovation: (d2 * variance).sqrt(),
            variance,
            state_variance: variance - 1.0,
            mahalanobis: d2,
        }
    }

    #[test]
    fn zero_distance_is_never_multipath() {
        let gate = Gate::new(0.95, 1.0, 0.99);
        let mut rng = stream(61, 0, 0, 0);
        assert!(!classify_multipath(&geom(0.0, 1.0), &gate, &mut rng));
    }

    #[test]
    fn false_alarm_rate_matches_analytic_value() {
        // D² of clean measurements is χ²₁; the expected flag rate is
        // ∫_{α₁}^1 (q − α₁)/(1 − α₁) dq = (1 − α₁)/2
        let gate = Gate::new(0.95, 1.0, 0.99);
        let mut rng = stream(62, 0, 0, 0);
        let n = 200_000;
        let mut flagged = 0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            if classify_multipath(&geom(z * z, 1.0), &gate, &mut rng) {
                flagged += 1;
            }
        }
        let rate = flagged as f64 / n as f64;
        assert!((rate - 0.025).abs() < 0.002, "{rate}");
    }

    #[test]
    fn large_bias_is_flagged() {
        let gate = Gate::new(0.95, 1.0, 0.99);
        let mut rng = stream(63, 0, 0, 0);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let r = 20.0 + z;
                classify_multipath(&geom(r * r, 1.0), &gate, &mut rng)
            })
            .count();
        assert!(hits as f64 / n as f64 > 0.999);
    }

    #[test]
    fn reject_above_upper_threshold() {
        let gate = Gate::new(0.5, 0.9, 0.99);
        let mut rng = stream(64, 0, 0, 0);
        assert!(classify_multipath(
            &geom(gate.reject_above + 1e-9, 1.0),
            &gate,
            &mut rng
        ));
    }

    #[test]
    fn smaller_distance_wins_and_penalty_ignores_residual() {
        let gate = Gate::new(0.95, 1.0, 0.99);
        let near = weight_measurement(0.0, &geom(0.5, 2.0), false, &gate);
        let far = weight_measurement(0.0, &geom(3.0, 2.0), false, &gate);
        assert!(near > far);
        let a = weight_measurement(0.0, &geom(10.0, 2.0), true, &gate);
        let b = weight_measurement(0.0, &geom(400.0, 2.0), true, &gate);
        assert_eq!(a, b);
        let expected = -0.5 * (2.0 * core::f64::consts::PI * 2.0).ln() - 0.5 * chi2_inv(0.99);
        assert!((a - expected).abs() < 1e-12);
    }

    fn strip_map(half_width: f64) -> LaneMap {
        LaneMap::new(alloc::vec![Lane {
            polygon: Polygon::rectangle(Vector2::new(-1e4, -half_width), Vector2::new(1e4, half_width)).unwrap(),
            altitude: None,
        }])
    }

    fn particle_at(y: f64, cov: f64) -> Particle {
        Particle {
            biases: CommonBiasVector::zeros(1),
            ekfs: alloc::vec![VehicleEkfState::new(
                Vector6::new(0.0, 0.0, y, 0.0, 0.0, 0.0),
                Matrix6::identity() * cov
            )],
            log_weight: 0.0,
            windows: Vec::new(),
            flagged: alloc::vec![0],
        }
    }

    #[test]
    fn constraint_keeps_in_lane_and_kills_outside() {
        let map = strip_map(1.75);
        let mut rng = stream(65, 0, 0, 0);
        let mut inside = particle_at(0.0, 1e-6);
        apply_map_constraint(&mut inside, &map, 100, &mut rng).unwrap();
        assert_eq!(inside.weight(), 1.0);
        let mut outside = particle_at(20.0, 1e-6);
        apply_map_constraint(&mut outside, &map, 100, &mut rng).unwrap();
        assert_eq!(outside.weight(), 0.0);
    }

    fn single_sat_filter(n_particles: usize, map: LaneMap, gating: bool, constraint: bool, sigma_c: f64) -> Rbpf {
        let cfg = FilterConfig {
            n_particles,
            gating,
            map_constraint: constraint,
            noise: NoiseConfig {
                sigma_c,
                sigma_init_common: 0.0,
                ..NoiseConfig::default()
            },
            ..FilterConfig::default()
        };
        let v = VehicleInit {
            id: VehicleId(0),
            state: VehicleEkfState::new(Vector6::zeros(), Matrix6::identity()),
            heading: 0.0,
        };
        Rbpf::new(cfg, map, &[SatelliteId(1)], &[0.0], &[v], 7).unwrap()
    }

    #[test]
    fn two_particles_lane_offset_hypotheses() {
        // both particles see the same vehicle fix; their biases shift the
        // implied position by ±1.75 m across a lane edge at y = 3.5
        let map = LaneMap::new(alloc::vec![Lane {
            polygon: Polygon::rectangle(Vector2::new(-1e4, 0.0), Vector2::new(1e4, 3.5)).unwrap(),
            altitude: None,
        }]);
        let mut rng = stream(66, 0, 0, 0);
        let cov = 0.04;
        let mut good = particle_at(1.75, cov);
        let mut bad = particle_at(3.5 + 1.75, cov);
        apply_map_constraint(&mut good, &map, 10_000, &mut rng).unwrap();
        apply_map_constraint(&mut bad, &map, 10_000, &mut rng).unwrap();
        // hand computation: P(in lane) for N(1.75, 0.04) is ≈ 1 and for
        // N(5.25, 0.04) is Φ(−8.75) ≈ 0
        let w_good = good.weight() / (good.weight() + bad.weight());
        assert!(w_good > 0.999);
    }

    #[test]
    fn posterior_over_bias_grid_matches_exhaustive_bayes() {
        // five particles with distinct biases; the vehicle's covariance is
        // tiny so the EKF barely moves and the weights are pure likelihoods
        let sat = Vector3::new(0.0, 0.0, 2.0e7);
        let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let truth_bias = 0.4;
        let mut f = single_sat_filter(5, LaneMap::default(), false, false, 0.0);
        for (p, c) in f.particles.iter_mut().zip(grid) {
            p.biases.values[0] = c;
            p.ekfs[0].cov = Matrix6::zeros();
        }
        f.process = alloc::vec![Matrix6::zeros()];
        f.cfg.resample = ResamplePolicy::EffectiveSampleSize { fraction: 0.0 };
        let z = 2.0e7 + truth_bias;
        let meas = [PseudorangeMeasurement {
            time: 0.1,
            vehicle_id: VehicleId(0),
            satellite_id: SatelliteId(1),
            range: z,
        }];
        let states = [SatelliteState {
            satellite_id: SatelliteId(1),
            position: EnuPosition(sat),
            elevation: core::f64::consts::FRAC_PI_2,
            azimuth: 0.0,
        }];
        f.step(&meas, &states).unwrap();
        // brute force: prior uniform, likelihood N(z; range + c, σ_z²)
        let lik: Vec<f64> = grid
            .iter()
            .map(|c| (-0.5 * (truth_bias - c) * (truth_bias - c)).exp())
            .collect();
        let s: f64 = lik.iter().sum();
        for (p, l) in f.particles.iter().zip(&lik) {
            assert!((p.weight() - l / s).abs() < 1e-6);
        }
    }

    #[test]
    fn no_measurements_only_predicts() {
        let mut f = single_sat_filter(3, LaneMap::default(), true, false, 0.1);
        let before = f.particles[0].ekfs[0].cov.trace();
        let out = f.step(&[], &[]).unwrap();
        assert!(f.particles[0].ekfs[0].cov.trace() > before);
        assert_eq!(out.vehicles[0].n_measurements, 0);
        assert!(!out.diverged);
    }

    #[test]
    fn all_particles_off_lane_flags_divergence() {
        let mut f = single_sat_filter(4, strip_map(1.0), false, true, 0.0);
        for p in f.particles.iter_mut() {
            p.ekfs[0].mean[2] = 50.0;
            p.ekfs[0].cov = Matrix6::identity() * 1e-4;
        }
        let out = f.step(&[], &[]).unwrap();
        assert!(out.diverged);
        let total: f64 = f.particles.iter().map(Particle::weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_satellite_is_reported() {
        let mut f = single_sat_filter(2, LaneMap::default(), true, false, 0.1);
        let meas = [PseudorangeMeasurement {
            time: 0.1,
            vehicle_id: VehicleId(0),
            satellite_id: SatelliteId(9),
            range: 1.0,
        }];
        assert_eq!(
            f.step(&meas, &[]).unwrap_err(),
            FilterError::UnknownSatellite(SatelliteId(9))
        );
    }

    #[test]
    fn plane_wave_model_is_linear() {
        let e = VehicleEkfState::new(Vector6::new(3.0, 0.0, -4.0, 0.0, 0.0, 0.0), Matrix6::identity());
        let sat = Vector3::new(1e7, 2e7, 1.5e7);
        let model = RangeModel::PlaneWave {
            reference: [0.0, 0.0, 0.0],
        };
        let g = measurement_geometry(&e, 0.0, &sat, 0.0, 0.0, 1.0, &model, true).unwrap();
        let u = -sat / sat.norm();
        assert!((g.predicted - (sat.norm() + u.x * 3.0 - u.y * 4.0)).abs() < 1e-6);
    }

    #[test]
    fn zero_clock_column_never_moves_the_clock() {
        let cfg = FilterConfig {
            n_particles: 3,
            clock_in_jacobian: false,
            map_constraint: false,
            gating: false,
            ..FilterConfig::default()
        };
        let mut cov = Matrix6::identity() * 4.0;
        cov[(0, 4)] = 1.5;
        cov[(4, 0)] = 1.5;
        cov[(2, 4)] = -1.0;
        cov[(4, 2)] = -1.0;
        let v = VehicleInit {
            id: VehicleId(0),
            state: VehicleEkfState::new(Vector6::new(0.0, 0.0, 0.0, 0.0, 2.0, 0.0), cov),
            heading: 0.0,
        };
        let sats: Vec<SatelliteState> = [(1e7, 0.0), (0.0, 1e7), (-1e7, -1e7)]
            .iter()
            .enumerate()
            .map(|(k, (x, y))| SatelliteState {
                satellite_id: SatelliteId(k as u32 + 1),
                position: EnuPosition::new(*x, *y, 2e7),
                elevation: 1.0,
                azimuth: 0.0,
            })
            .collect();
        let ids: Vec<SatelliteId> = sats.iter().map(|s| s.satellite_id).collect();
        let mut f = Rbpf::new(cfg, LaneMap::default(), &ids, &[0.0; 3], &[v], 3).unwrap();
        for step in 1..=5 {
            let meas: Vec<PseudorangeMeasurement> = sats
                .iter()
                .map(|s| PseudorangeMeasurement {
                    time: step as f64 * 0.1,
                    vehicle_id: VehicleId(0),
                    satellite_id: s.satellite_id,
                    range: s.position.0.norm() + 5.0,
                })
                .collect();
            f.step(&meas, &sats).unwrap();
            for p in &f.particles {
                assert_eq!(p.ekfs[0].mean[4], 2.0);
            }
        }
    }
}
