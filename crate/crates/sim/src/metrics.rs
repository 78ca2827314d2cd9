//! Per-step metrics and run summaries.

use std::collections::BTreeMap;

use cmm_core::{SatelliteId, VehicleId};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleMetrics {
    pub vehicle_id: VehicleId,
    pub estimate: Vector2<f64>,
    pub truth: Option<Vector2<f64>>,
    /// Determinant of the horizontal covariance, m⁴.
    pub cov_det: f64,
    pub n_sats_used: usize,
    /// Measurements classified as multipath (particle-weighted for the RBPF).
    pub n_flagged: f64,
}

impl VehicleMetrics {
    /// Estimate minus truth.
    pub fn signed_error(&self) -> Option<Vector2<f64>> {
        self.truth.map(|t| self.estimate - t)
    }

    pub fn horizontal_error(&self) -> Option<f64> {
        self.signed_error().map(|e| e.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasMetrics {
    pub satellite_id: SatelliteId,
    pub estimate: f64,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub time: f64,
    pub vehicles: Vec<VehicleMetrics>,
    pub biases: Vec<BiasMetrics>,
    /// Signals lost to buildings or blockage at this step (simulation only).
    pub n_blocked: usize,
    /// The filter's weights all vanished and were reset.
    pub diverged: bool,
}

/// Mean horizontal error over every (step, vehicle) with truth.
pub fn mean_error(records: &[MetricsRecord]) -> Option<f64> {
    mean(
        records
            .iter()
            .flat_map(|r| r.vehicles.iter().filter_map(|v| v.horizontal_error())),
    )
}

/// Mean estimate-minus-truth of one vehicle.
pub fn mean_signed_error(records: &[MetricsRecord], vehicle: VehicleId) -> Option<Vector2<f64>> {
    let errors: Vec<Vector2<f64>> = records
        .iter()
        .flat_map(|r| r.vehicles.iter())
        .filter(|v| v.vehicle_id == vehicle)
        .filter_map(|v| v.signed_error())
        .collect();
    if errors.is_empty() {
        return None;
    }
    Some(errors.iter().sum::<Vector2<f64>>() / errors.len() as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_runs: usize,
    /// Mean over runs of each run's mean horizontal error, m.
    pub mean_error_m: f64,
    /// Three standard deviations of the per-run means; zero for one run.
    pub three_sigma_m: f64,
    pub run_mean_errors_m: Vec<f64>,
    pub median_cov_det_m4: f64,
    pub mean_cov_det_m4: f64,
    /// Over every (step, satellite) with a known true bias.
    pub bias_rmse_m: Option<f64>,
    pub divergences: usize,
    /// Seed-averaged mean signed error per vehicle, m.
    pub mean_signed_error_m: BTreeMap<u32, [f64; 2]>,
}

/// Summary of one or more runs (typically one per seed) of the same
/// algorithm. Runs without ground truth contribute covariance statistics
/// only; `None` when no run has any record.
pub fn compute_summary(runs: &[Vec<MetricsRecord>]) -> Option<Summary> {
    if runs.iter().all(|r| r.is_empty()) {
        return None;
    }
    let run_means: Vec<f64> = runs.iter().filter_map(|r| mean_error(r)).collect();
    let n = run_means.len();
    let grand = if n > 0 {
        run_means.iter().sum::<f64>() / n as f64
    } else {
        f64::NAN
    };
    let three_sigma = if n > 1 {
        3.0 * (run_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let dets: Vec<f64> = runs
        .iter()
        .flatten()
        .flat_map(|r| r.vehicles.iter().map(|v| v.cov_det))
        .collect();
    let mean_det = mean(dets.iter().copied()).unwrap_or(f64::NAN);
    let bias_sq = mean(runs.iter().flatten().flat_map(|r| {
        r.biases
            .iter()
            .filter_map(|b| b.truth.map(|t| (b.estimate - t).powi(2)))
    }));
    let mut ids: Vec<VehicleId> = runs
        .iter()
        .flatten()
        .flat_map(|r| r.vehicles.iter().map(|v| v.vehicle_id))
        .collect();
    ids.sort();
    ids.dedup();
    let mut signed = BTreeMap::new();
    for id in ids {
        let per_run: Vec<Vector2<f64>> = runs.iter().filter_map(|r| mean_signed_error(r, id)).collect();
        if !per_run.is_empty() {
            let m = per_run.iter().sum::<Vector2<f64>>() / per_run.len() as f64;
            signed.insert(id.0, [m.x, m.y]);
        }
    }
    Some(Summary {
        n_runs: runs.len(),
        mean_error_m: grand,
        three_sigma_m: three_sigma,
        run_mean_errors_m: run_means,
        median_cov_det_m4: median(dets).unwrap_or(f64::NAN),
        mean_cov_det_m4: mean_det,
        bias_rmse_m: bias_sq.map(f64::sqrt),
        divergences: runs.iter().flatten().filter(|r| r.diverged).count(),
        mean_signed_error_m: signed,
    })
}
