//! Truth propagation and synthetic pseudo-range logs.

use std::collections::BTreeMap;

use cmm_core::error_models::{
    generate_pseudorange, init_common_biases, propagate_clock, propagate_common_biases_in_place,
    PseudorangeMeasurement, VehicleTruthState,
};
use cmm_core::geodesy::{kepler_to_ecef, look_angles, EnuPosition, SatelliteState};
use cmm_core::multipath::total_multipath_error;
use cmm_core::rng::{domain, stream};
use cmm_core::{SatelliteId, VehicleId};
use nalgebra::{Vector2, Vector3};

use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub vehicle_id: VehicleId,
    pub position: Vector2<f64>,
}

/// Everything observed (and, in simulation, known) at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub time: f64,
    pub measurements: Vec<PseudorangeMeasurement>,
    /// Satellite states in the scenario ENU frame.
    pub satellites: Vec<SatelliteState>,
    /// Empty when the log carries no ground truth.
    pub truth: Vec<TruthSample>,
    /// True common biases; simulation only.
    pub truth_biases: BTreeMap<SatelliteId, f64>,
    /// Signals removed by buildings or blockage lists.
    pub n_blocked: usize,
    /// Signals received with a reflection-induced error.
    pub n_reflected: usize,
}

impl Epoch {
    pub fn truth_of(&self, id: VehicleId) -> Option<Vector2<f64>> {
        self.truth.iter().find(|t| t.vehicle_id == id).map(|t| t.position)
    }

    pub fn measurements_of(&self, id: VehicleId) -> impl Iterator<Item = &PseudorangeMeasurement> {
        self.measurements.iter().filter(move |m| m.vehicle_id == id)
    }
}

/// Epoch 0 initialises the estimators; epochs `1..` are filtered and scored.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementLog {
    pub epochs: Vec<Epoch>,
    pub delta_t: f64,
}

impl MeasurementLog {
    /// Every satellite seen anywhere in the log, ascending.
    pub fn satellite_ids(&self) -> Vec<SatelliteId> {
        let mut ids: Vec<SatelliteId> = self
            .epochs
            .iter()
            .flat_map(|e| e.measurements.iter().map(|m| m.satellite_id))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Every vehicle with measurements anywhere in the log, ascending.
    pub fn vehicle_ids(&self) -> Vec<VehicleId> {
        let mut ids: Vec<VehicleId> = self
            .epochs
            .iter()
            .flat_map(|e| e.measurements.iter().map(|m| m.vehicle_id))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error("orbit propagation failed for satellite {0}: {1}")]
    Orbit(SatelliteId, cmm_core::geodesy::GeodesyError),
    #[error("no satellite above the elevation mask at t = {0}")]
    NoSatellites(f64),
}

/// Satellite states at time `t` above the scenario's elevation mask.
pub fn satellite_states(scn: &Scenario, t: f64) -> Result<Vec<SatelliteState>, SimulationError> {
    let mask = scn.config.elevation_mask_deg.to_radians();
    let mut out = Vec::new();
    for o in &scn.orbits {
        let ecef = kepler_to_ecef(&o.elements, t).map_err(|e| SimulationError::Orbit(o.id, e))?;
        let enu = scn.frame.to_enu(&ecef);
        let (elevation, azimuth) = look_angles(&enu.0).map_err(|e| SimulationError::Orbit(o.id, e))?;
        if elevation >= mask {
            out.push(SatelliteState {
                satellite_id: o.id,
                position: enu,
                elevation,
                azimuth,
            });
        }
    }
    out.sort_by_key(|s| s.satellite_id);
    Ok(out)
}

/// Run the truth model and synthesise every measurement of the scenario.
///
/// Deterministic in `seed`: each random process draws from its own stream.
pub fn simulate_log(scn: &Scenario, seed: u64) -> Result<MeasurementLog, SimulationError> {
    let cfg = &scn.config;
    let noise = cfg.noise;
    let dt = noise.delta_t;
    let dll = cfg.dll();
    let mut bias_rng = stream(seed, domain::TRUTH_BIAS, 0, 0);
    let mut biases = init_common_biases(scn.orbits.len(), cfg.common_bias_std, &mut bias_rng);
    let bias_index: BTreeMap<SatelliteId, usize> = scn.orbits.iter().enumerate().map(|(i, o)| (o.id, i)).collect();
    let mut clocks: Vec<(f64, f64)> = vec![(0.0, 0.0); cfg.vehicles.len()];

    let mut epochs = Vec::with_capacity(cfg.steps + 1);
    for k in 0..=cfg.steps {
        let t = k as f64 * dt;
        if k > 0 {
            propagate_common_biases_in_place(&mut biases, &noise, &mut bias_rng);
            if cfg.toggles.clock {
                for (v, c) in clocks.iter_mut().enumerate() {
                    let mut rng = stream(seed, domain::TRUTH_CLOCK, k as u64, v as u64);
                    *c = propagate_clock(c.0, c.1, &noise, &mut rng);
                }
            }
        }
        let sats = satellite_states(scn, t)?;
        if sats.is_empty() {
            return Err(SimulationError::NoSatellites(t));
        }
        let mut measurements = Vec::new();
        let mut truth = Vec::with_capacity(cfg.vehicles.len());
        let (mut n_blocked, mut n_reflected) = (0, 0);
        for (v, spec) in cfg.vehicles.iter().enumerate() {
            let (p, vel) = spec.trajectory.state_at(t);
            let altitude = scn.lanes.altitude_at(&p).unwrap_or(cfg.filter.default_altitude);
            let state = VehicleTruthState {
                position: Vector3::new(p.x, p.y, altitude),
                velocity: vel,
                clock_bias: clocks[v].0,
                clock_drift: clocks[v].1,
            };
            truth.push(TruthSample {
                vehicle_id: spec.id,
                position: p,
            });
            let mut rng = stream(seed, domain::RECEIVER_NOISE, k as u64, spec.id.0 as u64);
            for sat in &sats {
                let withheld = cfg.toggles.blockage
                    && cfg
                        .blocked
                        .iter()
                        .any(|b| b.vehicle == spec.id && b.satellites.contains(&sat.satellite_id));
                let mut multipath_error = 0.0;
                let mut visible = !withheld;
                if visible && cfg.toggles.multipath && !scn.buildings.is_empty() {
                    let out = total_multipath_error(&scn.buildings, &state.position, &sat.position.0, &dll);
                    visible = out.visible;
                    multipath_error = out.error;
                    if visible && out.reflections > 0 {
                        n_reflected += 1;
                    }
                }
                if !visible {
                    n_blocked += 1;
                    continue;
                }
                measurements.push(generate_pseudorange(
                    t,
                    spec.id,
                    &state,
                    sat,
                    &biases,
                    bias_index[&sat.satellite_id],
                    multipath_error,
                    &noise,
                    &mut rng,
                ));
            }
        }
        let truth_biases = sats
            .iter()
            .map(|s| (s.satellite_id, biases.values[bias_index[&s.satellite_id]]))
            .collect();
        epochs.push(Epoch {
            time: t,
            measurements,
            satellites: sats,
            truth,
            truth_biases,
            n_blocked,
            n_reflected,
        });
    }
    Ok(MeasurementLog { epochs, delta_t: dt })
}

/// Satellite state rebuilt from a logged ENU position.
pub fn satellite_from_position(id: SatelliteId, position: Vector3<f64>) -> SatelliteState {
    let (elevation, azimuth) = look_angles(&position).unwrap_or((0.0, 0.0));
    SatelliteState {
        satellite_id: id,
        position: EnuPosition(position),
        elevation,
        azimuth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;

    #[test]
    fn deterministic_for_a_seed() {
        let scn = load_scenario("fig2_intersection").unwrap();
        let a = simulate_log(&scn, 3).unwrap();
        let b = simulate_log(&scn, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_log(&scn, 4).unwrap();
        assert_ne!(a.epochs[5].measurements, c.epochs[5].measurements);
    }

    #[test]
    fn reference_scenario_shape() {
        let scn = load_scenario("fig2_intersection").unwrap();
        let log = simulate_log(&scn, 1).unwrap();
        assert_eq!(log.epochs.len(), 301);
        for e in &log.epochs {
            assert_eq!(e.satellites.len(), 6);
            assert_eq!(e.measurements.len(), 24);
            assert_eq!(e.n_blocked, 0);
        }
        // vehicles stay on their lane centres
        let last = log.epochs.last().unwrap();
        assert!((last.truth_of(VehicleId(0)).unwrap() - Vector2::new(-10.0, -1.75)).norm() < 1e-9);
    }

    #[test]
    fn blockage_lists_remove_signals() {
        let mut scn = load_scenario("fig2_intersection").unwrap();
        scn.config.toggles.blockage = true;
        scn.config.blocked = vec![crate::scenario::BlockedSatellites {
            vehicle: VehicleId(0),
            satellites: vec![SatelliteId(1), SatelliteId(2)],
        }];
        let log = simulate_log(&scn, 1).unwrap();
        for e in &log.epochs {
            assert_eq!(e.measurements_of(VehicleId(0)).count(), 4);
            assert_eq!(e.measurements_of(VehicleId(1)).count(), 6);
            assert_eq!(e.n_blocked, 2);
        }
    }
}
