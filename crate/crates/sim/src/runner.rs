//! Drives one estimator over a measurement log.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use cmm_core::baselines::{
    ego_localize, static_cmm, BaselineError, CmmInput, CvSmoother, EgoSolution, StaticCmmConfig,
};
use cmm_core::error_models::PseudorangeMeasurement;
use cmm_core::filter::{FilterError, Rbpf, VehicleEkfState, VehicleInit};
use cmm_core::geodesy::SatelliteState;
use cmm_core::map_constraints::LaneMap;
use cmm_core::rng::{domain, stream};
use cmm_core::{SatelliteId, VehicleId};
use nalgebra::{Matrix2, Matrix6, Vector2, Vector3, Vector6};

use crate::metrics::{BiasMetrics, MetricsRecord, VehicleMetrics};
use crate::scenario::Scenario;
use crate::simulate::{Epoch, MeasurementLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Cooperative map matching with the particle filter.
    Rbpf,
    /// Memoryless cooperative map matching on raw ego fixes.
    Static,
    /// The same, on constant-velocity-smoothed ego fixes.
    Smoothed,
    /// Standalone least-squares fixes.
    Ego,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Rbpf, Algorithm::Static, Algorithm::Smoothed, Algorithm::Ego];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rbpf => "rbpf",
            Algorithm::Static => "static",
            Algorithm::Smoothed => "smoothed",
            Algorithm::Ego => "ego",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected rbpf, static, smoothed or ego)"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("log has no epochs")]
    EmptyLog,
    #[error("cannot initialise vehicle {0}: {1}")]
    Initialisation(VehicleId, BaselineError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Bias prior handed to the filter in simulation: the true biases at the
/// first epoch. The filter scatters its particles around it by `σ_init`, so
/// each particle starts at truth plus independent white noise.
pub fn simulated_bias_prior(log: &MeasurementLog) -> BTreeMap<SatelliteId, f64> {
    log.satellite_ids()
        .into_iter()
        .map(|id| {
            let truth = log
                .epochs
                .iter()
                .find_map(|e| e.truth_biases.get(&id).copied())
                .unwrap_or(0.0);
            (id, truth)
        })
        .collect()
}

/// Bias prior read off a log with ground truth: at the first epoch, the mean
/// over vehicles of pseudo-range minus geometric range for each satellite.
/// Satellites never seen with truth get 0.
pub fn bias_prior_from_truth(
    log: &MeasurementLog,
    lanes: &LaneMap,
    default_altitude: f64,
) -> BTreeMap<SatelliteId, f64> {
    log.satellite_ids()
        .into_iter()
        .map(|id| {
            let residuals = log.epochs.iter().find_map(|e| {
                let s = find_sat(&e.satellites, id)?;
                let r: Vec<f64> = e
                    .measurements
                    .iter()
                    .filter(|m| m.satellite_id == id)
                    .filter_map(|m| {
                        let p = e.truth_of(m.vehicle_id)?;
                        let alt = lanes.altitude_at(&p).unwrap_or(default_altitude);
                        Some(m.range - (Vector3::new(p.x, p.y, alt) - s.position.0).norm())
                    })
                    .collect();
                (!r.is_empty()).then_some(r)
            });
            (id, residuals.map_or(0.0, |r| r.iter().sum::<f64>() / r.len() as f64))
        })
        .collect()
}

fn find_sat(sats: &[SatelliteState], id: SatelliteId) -> Option<&SatelliteState> {
    sats.iter().find(|s| s.satellite_id == id)
}

/// Ego fix with the altitude taken from the lane under the fix.
fn ego_fix(
    measurements: &[PseudorangeMeasurement],
    sats: &[SatelliteState],
    lanes: &LaneMap,
    default_altitude: f64,
    sigma_z: f64,
    initial: Option<Vector2<f64>>,
) -> Result<EgoSolution, BaselineError> {
    let altitude = initial.and_then(|p| lanes.altitude_at(&p)).unwrap_or(default_altitude);
    let fix = ego_localize(measurements, sats, altitude, sigma_z, initial)?;
    match lanes.altitude_at(&fix.horizontal()) {
        Some(a) if a != altitude => ego_localize(measurements, sats, a, sigma_z, Some(fix.horizontal())),
        _ => Ok(fix),
    }
}

/// Run `algo` over `log`. Epoch 0 initialises; one record per later epoch.
///
/// The scenario supplies the lane map, noise and filter settings and vehicle
/// headings (vehicles it does not describe are assumed to head east); the
/// time step is taken from the log.
pub fn run_algorithm(
    scn: &Scenario,
    log: &MeasurementLog,
    algo: Algorithm,
    bias_prior: &BTreeMap<SatelliteId, f64>,
    seed: u64,
) -> Result<Vec<MetricsRecord>, RunError> {
    if log.epochs.is_empty() {
        return Err(RunError::EmptyLog);
    }
    let mut fcfg = scn.config.filter_config();
    fcfg.noise.delta_t = log.delta_t;
    let vehicles = log.vehicle_ids();
    let headings: Vec<f64> = vehicles
        .iter()
        .map(|id| {
            scn.config
                .vehicles
                .iter()
                .find(|v| v.id == *id)
                .map_or(0.0, |v| v.trajectory.heading())
        })
        .collect();
    match algo {
        Algorithm::Rbpf => run_rbpf(scn, log, fcfg, &vehicles, &headings, bias_prior, seed),
        _ => run_baseline(scn, log, &fcfg, algo, &vehicles, &headings, seed),
    }
}

fn by_vehicle(e: &Epoch, id: VehicleId) -> Vec<PseudorangeMeasurement> {
    e.measurements_of(id).copied().collect()
}

fn run_rbpf(
    scn: &Scenario,
    log: &MeasurementLog,
    fcfg: cmm_core::filter::FilterConfig,
    vehicles: &[VehicleId],
    headings: &[f64],
    bias_prior: &BTreeMap<SatelliteId, f64>,
    seed: u64,
) -> Result<Vec<MetricsRecord>, RunError> {
    let init = &scn.config.init;
    let sats = log.satellite_ids();
    let prior: Vec<f64> = sats
        .iter()
        .map(|id| {
            bias_prior.get(id).copied().unwrap_or_else(|| {
                log::warn!("no bias prior for satellite {id}; using 0");
                0.0
            })
        })
        .collect();
    let e0 = &log.epochs[0];
    let mut inits = Vec::with_capacity(vehicles.len());
    for (id, heading) in vehicles.iter().zip(headings) {
        // remove the prior biases so the start is not dragged by them
        let corrected: Vec<PseudorangeMeasurement> = e0
            .measurements_of(*id)
            .map(|m| PseudorangeMeasurement {
                range: m.range - bias_prior.get(&m.satellite_id).copied().unwrap_or(0.0),
                ..*m
            })
            .collect();
        let fix = ego_fix(
            &corrected,
            &e0.satellites,
            &scn.lanes,
            fcfg.default_altitude,
            fcfg.noise.sigma_z,
            None,
        )
        .map_err(|e| RunError::Initialisation(*id, e))?;
        let c = fix.covariance * init.position_cov_scale;
        let idx = [0usize, 2, 4];
        let mut cov = Matrix6::zeros();
        for (i, a) in idx.iter().enumerate() {
            for (j, b) in idx.iter().enumerate() {
                cov[(*a, *b)] = c[(i, j)];
            }
        }
        cov[(1, 1)] = init.velocity_std.powi(2);
        cov[(3, 3)] = init.velocity_std.powi(2);
        cov[(5, 5)] = init.clock_drift_std.powi(2);
        let b = if fcfg.clock_in_jacobian { fix.clock_bias } else { 0.0 };
        let mean = Vector6::new(fix.position.0.x, 0.0, fix.position.0.y, 0.0, b, 0.0);
        inits.push(VehicleInit {
            id: *id,
            state: VehicleEkfState::new(mean, cov),
            heading: *heading,
        });
    }
    let mut filter = Rbpf::new(fcfg, scn.lanes.clone(), &sats, &prior, &inits, seed)?;
    let mut records = Vec::with_capacity(log.epochs.len() - 1);
    for e in &log.epochs[1..] {
        let out = filter.step(&e.measurements, &e.satellites)?;
        if out.diverged {
            log::warn!("weights collapsed at t = {}; reset to uniform", e.time);
        }
        records.push(MetricsRecord {
            time: e.time,
            vehicles: out
                .vehicles
                .iter()
                .map(|v| VehicleMetrics {
                    vehicle_id: v.id,
                    estimate: v.position(),
                    truth: e.truth_of(v.id),
                    cov_det: v.horizontal_cov.determinant(),
                    n_sats_used: v.n_measurements,
                    n_flagged: v.flagged,
                })
                .collect(),
            biases: out
                .biases
                .satellites
                .iter()
                .zip(&out.biases.mean)
                .map(|(id, m)| BiasMetrics {
                    satellite_id: *id,
                    estimate: *m,
                    truth: e.truth_biases.get(id).copied(),
                })
                .collect(),
            n_blocked: e.n_blocked,
            diverged: out.diverged,
        });
    }
    Ok(records)
}

fn run_baseline(
    scn: &Scenario,
    log: &MeasurementLog,
    fcfg: &cmm_core::filter::FilterConfig,
    algo: Algorithm,
    vehicles: &[VehicleId],
    headings: &[f64],
    seed: u64,
) -> Result<Vec<MetricsRecord>, RunError> {
    let sigma_z = fcfg.noise.sigma_z;
    let cmm_cfg = StaticCmmConfig {
        n_candidates: scn.config.static_cmm.n_candidates,
        prior_std: scn.config.static_cmm.prior_std,
    };
    let mut smoothers: Vec<CvSmoother> = headings
        .iter()
        .map(|h| CvSmoother::new(&fcfg.noise, *h, scn.config.init.velocity_std.powi(2)))
        .collect();
    let mut last_fix: Vec<Option<Vector2<f64>>> = vec![None; vehicles.len()];
    let mut records = Vec::with_capacity(log.epochs.len().saturating_sub(1));
    for (k, e) in log.epochs.iter().enumerate() {
        // (vehicle slot, position, covariance, satellites used)
        let mut fixes: Vec<(usize, Vector2<f64>, Matrix2<f64>, usize)> = Vec::new();
        for (v, id) in vehicles.iter().enumerate() {
            let ms = by_vehicle(e, *id);
            let fix = match ego_fix(
                &ms,
                &e.satellites,
                &scn.lanes,
                fcfg.default_altitude,
                sigma_z,
                last_fix[v],
            ) {
                Ok(f) => {
                    last_fix[v] = Some(f.horizontal());
                    Some(f)
                }
                Err(err) => {
                    log::debug!("no ego fix for vehicle {id} at t = {}: {err}", e.time);
                    None
                }
            };
            let n_used = fix.as_ref().map_or(0, |f| f.satellites.len());
            match algo {
                Algorithm::Smoothed => {
                    if let Some((p, c)) = smoothers[v].step(fix.map(|f| (f.horizontal(), f.horizontal_cov()))) {
                        fixes.push((v, p, c, n_used));
                    }
                }
                _ => {
                    if let Some(f) = fix {
                        fixes.push((v, f.horizontal(), f.horizontal_cov(), n_used));
                    }
                }
            }
        }
        if k == 0 {
            continue;
        }
        let (positions, covs): (Vec<Vector2<f64>>, Vec<Matrix2<f64>>) = if algo == Algorithm::Ego || fixes.is_empty() {
            (fixes.iter().map(|f| f.1).collect(), fixes.iter().map(|f| f.2).collect())
        } else {
            let inputs: Vec<CmmInput> = fixes
                .iter()
                .map(|f| CmmInput {
                    position: f.1,
                    cov: f.2,
                })
                .collect();
            let mut rng = stream(seed, domain::STATIC_CMM, k as u64, 0);
            let res = static_cmm(&inputs, &scn.lanes, &cmm_cfg, &mut rng)?;
            if res.low_confidence {
                log::debug!("map matching found no consistent shift at t = {}", e.time);
            }
            (res.corrected, res.covariances)
        };
        records.push(MetricsRecord {
            time: e.time,
            vehicles: fixes
                .iter()
                .zip(positions.iter().zip(&covs))
                .map(|(f, (p, c))| VehicleMetrics {
                    vehicle_id: vehicles[f.0],
                    estimate: *p,
                    truth: e.truth_of(vehicles[f.0]),
                    cov_det: c.determinant(),
                    n_sats_used: f.3,
                    n_flagged: 0.0,
                })
                .collect(),
            biases: Vec::new(),
            n_blocked: e.n_blocked,
            diverged: false,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;
    use crate::simulate::simulate_log;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("kalman".parse::<Algorithm>().is_err());
    }

    #[test]
    fn truth_prior_recovers_exact_biases_without_noise() {
        let mut scn = load_scenario("fig2_intersection").unwrap();
        scn.config.noise.sigma_z = 0.0;
        scn.config.steps = 3;
        let log = simulate_log(&scn, 2).unwrap();
        let prior = bias_prior_from_truth(&log, &scn.lanes, 0.0);
        for (id, b) in &prior {
            assert!((b - log.epochs[0].truth_biases[id]).abs() < 1e-6);
        }
    }

    #[test]
    fn every_algorithm_runs() {
        let mut scn = load_scenario("fig2_intersection").unwrap();
        scn.config.steps = 10;
        scn.config.filter.n_particles = 20;
        let log = simulate_log(&scn, 5).unwrap();
        let prior = simulated_bias_prior(&log);
        for a in Algorithm::ALL {
            let recs = run_algorithm(&scn, &log, a, &prior, 5).unwrap();
            assert_eq!(recs.len(), 10);
            assert!(recs.iter().all(|r| r.vehicles.len() == 4));
            assert!(recs
                .iter()
                .flat_map(|r| &r.vehicles)
                .all(|v| v.horizontal_error().unwrap().is_finite()));
        }
    }
}
