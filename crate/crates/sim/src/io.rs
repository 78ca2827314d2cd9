//! CSV exchange formats: metrics, bias tracks, measurement logs, bias priors.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! yields bit-identical values.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use cmm_core::error_models::PseudorangeMeasurement;
use cmm_core::{SatelliteId, VehicleId};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::metrics::{MetricsRecord, VehicleMetrics};
use crate::simulate::{satellite_from_position, Epoch, MeasurementLog, TruthSample};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("log rows are not sorted by time (row {row})")]
    Unsorted { row: usize },
    #[error("log holds {0} epoch(s); at least two are needed to infer the time step")]
    TooShort(usize),
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub time: f64,
    pub vehicle_id: u32,
    pub est_x: f64,
    pub est_y: f64,
    pub err_horizontal_m: Option<f64>,
    pub cov_det_m4: f64,
    pub n_sats_used: usize,
    pub n_flagged: f64,
    #[serde(default)]
    pub truth_x: Option<f64>,
    #[serde(default)]
    pub truth_y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub time: f64,
    pub sat_id: u32,
    pub bias_est_m: f64,
    pub bias_true_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub time_s: f64,
    pub vehicle_id: u32,
    pub sat_id: u32,
    pub pseudorange_m: f64,
    #[serde(default)]
    pub sat_x_m: Option<f64>,
    #[serde(default)]
    pub sat_y_m: Option<f64>,
    #[serde(default)]
    pub sat_z_m: Option<f64>,
    #[serde(default)]
    pub truth_x_m: Option<f64>,
    #[serde(default)]
    pub truth_y_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasPriorRow {
    pub sat_id: u32,
    pub bias_prior_m: f64,
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: impl IntoIterator<Item = T>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>, csv::Error> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input)
        .deserialize()
        .collect()
}

fn write_file<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    write_rows(std::io::BufWriter::new(f), rows).map_err(csv_err(path))
}

fn read_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IoError> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    read_rows(std::io::BufReader::new(f)).map_err(csv_err(path))
}

pub fn metrics_rows(records: &[MetricsRecord]) -> Vec<MetricsRow> {
    records
        .iter()
        .flat_map(|r| {
            r.vehicles.iter().map(move |v| MetricsRow {
                time: r.time,
                vehicle_id: v.vehicle_id.0,
                est_x: v.estimate.x,
                est_y: v.estimate.y,
                err_horizontal_m: v.horizontal_error(),
                cov_det_m4: v.cov_det,
                n_sats_used: v.n_sats_used,
                n_flagged: v.n_flagged,
                truth_x: v.truth.map(|t| t.x),
                truth_y: v.truth.map(|t| t.y),
            })
        })
        .collect()
}

/// Regroup metrics rows into records (vehicle metrics only).
pub fn records_from_rows(rows: &[MetricsRow]) -> Vec<MetricsRecord> {
    let mut out: Vec<MetricsRecord> = Vec::new();
    for row in rows {
        if out.last().is_none_or(|r| r.time != row.time) {
            out.push(MetricsRecord {
                time: row.time,
                vehicles: Vec::new(),
                biases: Vec::new(),
                n_blocked: 0,
                diverged: false,
            });
        }
        let truth = match (row.truth_x, row.truth_y) {
            (Some(x), Some(y)) => Some(Vector2::new(x, y)),
            _ => None,
        };
        out.last_mut().expect("pushed above").vehicles.push(VehicleMetrics {
            vehicle_id: VehicleId(row.vehicle_id),
            estimate: Vector2::new(row.est_x, row.est_y),
            truth,
            cov_det: row.cov_det_m4,
            n_sats_used: row.n_sats_used,
            n_flagged: row.n_flagged,
        });
    }
    out
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<(), IoError> {
    write_file(path, metrics_rows(records))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, IoError> {
    read_file(path)
}

pub fn write_bias_csv(path: &Path, records: &[MetricsRecord]) -> Result<(), IoError> {
    write_file(
        path,
        records.iter().flat_map(|r| {
            r.biases.iter().map(move |b| BiasRow {
                time: r.time,
                sat_id: b.satellite_id.0,
                bias_est_m: b.estimate,
                bias_true_m: b.truth,
            })
        }),
    )
}

pub fn log_rows(log: &MeasurementLog) -> Vec<LogRow> {
    log.epochs
        .iter()
        .flat_map(|e| {
            e.measurements.iter().map(move |m| {
                let sat = e.satellites.iter().find(|s| s.satellite_id == m.satellite_id);
                let truth = e.truth_of(m.vehicle_id);
                LogRow {
                    time_s: e.time,
                    vehicle_id: m.vehicle_id.0,
                    sat_id: m.satellite_id.0,
                    pseudorange_m: m.range,
                    sat_x_m: sat.map(|s| s.position.0.x),
                    sat_y_m: sat.map(|s| s.position.0.y),
                    sat_z_m: sat.map(|s| s.position.0.z),
                    truth_x_m: truth.map(|t| t.x),
                    truth_y_m: truth.map(|t| t.y),
                }
            })
        })
        .collect()
}

pub fn write_log_csv(path: &Path, log: &MeasurementLog) -> Result<(), IoError> {
    write_file(path, log_rows(log))
}

/// Median spacing of the epoch times, rounded to the microsecond so that
/// e.g. a 5 Hz log yields exactly `0.2`.
pub fn infer_delta_t(times: &[f64]) -> Option<f64> {
    let mut d: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    Some((med * 1e6).round() / 1e6)
}

/// Group time-sorted log rows into epochs. Rows without a satellite position
/// are skipped with a warning.
pub fn log_from_rows(rows: &[LogRow]) -> Result<MeasurementLog, IoError> {
    let mut epochs: Vec<Epoch> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        match epochs.last() {
            Some(e) if row.time_s < e.time => return Err(IoError::Unsorted { row: i + 1 }),
            Some(e) if row.time_s == e.time => {}
            _ => epochs.push(Epoch {
                time: row.time_s,
                measurements: Vec::new(),
                satellites: Vec::new(),
                truth: Vec::new(),
                truth_biases: BTreeMap::new(),
                n_blocked: 0,
                n_reflected: 0,
            }),
        }
        let e = epochs.last_mut().expect("pushed above");
        let sat_id = SatelliteId(row.sat_id);
        let vehicle_id = VehicleId(row.vehicle_id);
        if let (Some(x), Some(y)) = (row.truth_x_m, row.truth_y_m) {
            if e.truth_of(vehicle_id).is_none() {
                e.truth.push(TruthSample {
                    vehicle_id,
                    position: Vector2::new(x, y),
                });
            }
        }
        let (Some(x), Some(y), Some(z)) = (row.sat_x_m, row.sat_y_m, row.sat_z_m) else {
            log::warn!(
                "t = {}: no position for satellite {sat_id}; measurement skipped",
                row.time_s
            );
            continue;
        };
        if !e.satellites.iter().any(|s| s.satellite_id == sat_id) {
            e.satellites
                .push(satellite_from_position(sat_id, Vector3::new(x, y, z)));
        }
        e.measurements.push(PseudorangeMeasurement {
            time: row.time_s,
            vehicle_id,
            satellite_id: sat_id,
            range: row.pseudorange_m,
        });
    }
    for e in &mut epochs {
        e.satellites.sort_by_key(|s| s.satellite_id);
    }
    let times: Vec<f64> = epochs.iter().map(|e| e.time).collect();
    let delta_t = infer_delta_t(&times).ok_or(IoError::TooShort(epochs.len()))?;
    Ok(MeasurementLog { epochs, delta_t })
}

pub fn read_log_csv(path: &Path) -> Result<MeasurementLog, IoError> {
    log_from_rows(&read_file::<LogRow>(path)?)
}

pub fn write_bias_prior_csv(path: &Path, prior: &BTreeMap<SatelliteId, f64>) -> Result<(), IoError> {
    write_file(
        path,
        prior.iter().map(|(id, b)| BiasPriorRow {
            sat_id: id.0,
            bias_prior_m: *b,
        }),
    )
}

pub fn read_bias_prior_csv(path: &Path) -> Result<BTreeMap<SatelliteId, f64>, IoError> {
    Ok(read_file::<BiasPriorRow>(path)?
        .into_iter()
        .map(|r| (SatelliteId(r.sat_id), r.bias_prior_m))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_hertz_step() {
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.2).collect();
        assert_eq!(infer_delta_t(&times), Some(0.2));
        let times: Vec<f64> = (0..50).map(|k| 1e5 + k as f64 * 0.1).collect();
        assert_eq!(infer_delta_t(&times), Some(0.1));
        assert_eq!(infer_delta_t(&[3.0]), None);
    }

    #[test]
    fn float_round_trip_is_exact() {
        let rows = vec![LogRow {
            time_s: 0.1 * 3.0,
            vehicle_id: 1,
            sat_id: 7,
            pseudorange_m: 20_123_456.789_012_345,
            sat_x_m: Some(-1.0 / 3.0),
            sat_y_m: Some(1e-300),
            sat_z_m: Some(std::f64::consts::PI * 1e7),
            truth_x_m: None,
            truth_y_m: Some(-0.0),
        }];
        let mut buf = Vec::new();
        write_rows(&mut buf, rows.iter()).unwrap();
        let back: Vec<LogRow> = read_rows(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn optional_columns_may_be_absent() {
        let text = "time_s,vehicle_id,sat_id,pseudorange_m,sat_x_m,sat_y_m,sat_z_m\n\
                    0.0,0,1,2.0e7,1,2,3\n0.0,0,2,2.0e7,4,5,6\n0.2,0,1,2.0e7,1,2,3\n0.2,0,2,2.0e7,,,\n";
        let rows: Vec<LogRow> = read_rows(text.as_bytes()).unwrap();
        let log = log_from_rows(&rows).unwrap();
        assert_eq!(log.delta_t, 0.2);
        assert_eq!(log.epochs.len(), 2);
        assert!(log.epochs[0].truth.is_empty());
        // the row without a satellite position is dropped
        assert_eq!(log.epochs[1].measurements.len(), 1);
    }

    #[test]
    fn unsorted_rows_are_rejected() {
        let text = "time_s,vehicle_id,sat_id,pseudorange_m,sat_x_m,sat_y_m,sat_z_m\n\
                    0.2,0,1,2.0e7,1,2,3\n0.0,0,2,2.0e7,4,5,6\n";
        let rows: Vec<LogRow> = read_rows(text.as_bytes()).unwrap();
        assert!(matches!(log_from_rows(&rows), Err(IoError::Unsorted { row: 2 })));
    }
}
