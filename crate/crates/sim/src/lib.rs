//! Scenario files, simulation loop, log replay, metrics and CSV export for
//! cooperative map matching.

pub mod io;
pub mod metrics;
pub mod replay;
pub mod runner;
pub mod scenario;
pub mod simulate;

use std::collections::BTreeMap;

use cmm_core::SatelliteId;

use metrics::MetricsRecord;
use runner::{run_algorithm, simulated_bias_prior, Algorithm, RunError};
use scenario::Scenario;
use simulate::{simulate_log, MeasurementLog, SimulationError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Io(#[from] io::IoError),
}

/// Everything one simulated run produced.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub seed: u64,
    pub log: MeasurementLog,
    pub bias_prior: BTreeMap<SatelliteId, f64>,
    pub records: Vec<MetricsRecord>,
}

/// Simulate the scenario under `seed` and run `algo` on the result.
pub fn run_simulation(scn: &Scenario, algo: Algorithm, seed: u64) -> Result<SimulationRun, Error> {
    let log = simulate_log(scn, seed)?;
    let bias_prior = simulated_bias_prior(&log);
    let records = run_algorithm(scn, &log, algo, &bias_prior, seed)?;
    Ok(SimulationRun {
        seed,
        log,
        bias_prior,
        records,
    })
}
