//! Logged pseudo-ranges fed to the estimators in place of the simulator.

use std::collections::BTreeMap;

use cmm_core::SatelliteId;

use crate::metrics::MetricsRecord;
use crate::runner::{bias_prior_from_truth, run_algorithm, Algorithm, RunError};
use crate::scenario::Scenario;
use crate::simulate::MeasurementLog;

/// Run `algo` over a recorded log.
///
/// Without an explicit `bias_prior`, one is read off the ground-truth columns
/// (zero for satellites never seen with truth). The scenario provides lanes,
/// noise, filter settings and headings; the time step comes from the log.
pub fn replay(
    scn: &Scenario,
    log: &MeasurementLog,
    algo: Algorithm,
    bias_prior: Option<&BTreeMap<SatelliteId, f64>>,
    seed: u64,
) -> Result<Vec<MetricsRecord>, RunError> {
    let derived;
    let prior = match bias_prior {
        Some(p) => p,
        None => {
            if log.epochs.iter().all(|e| e.truth.is_empty()) {
                log::warn!("log has no ground truth and no bias prior was given; starting from zero biases");
            }
            derived = bias_prior_from_truth(log, &scn.lanes, scn.config.filter.default_altitude);
            &derived
        }
    };
    run_algorithm(scn, log, algo, prior, seed)
}
