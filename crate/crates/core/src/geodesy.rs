//! Frames, Keplerian constellation emulation and satellite geometry.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use libm::{atan2, cos, sin, sqrt};
use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::SatelliteId;

/// WGS-84 semi-major axis, m.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 first eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);
/// Earth gravitational parameter, m^3/s^2.
pub const GM_EARTH: f64 = 3.986_004_418e14;

const KEPLER_TOLERANCE: f64 = 1e-12;
const KEPLER_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum GeodesyError {
    #[error("invalid orbital elements: {0}")]
    InvalidElements(&'static str),
    #[error("Kepler's equation did not converge (M = {mean_anomaly}, e = {eccentricity})")]
    KeplerNonConvergence { mean_anomaly: f64, eccentricity: f64 },
    #[error("receiver and satellite positions coincide")]
    CoincidentPoints,
    #[error("need at least 4 satellites, got {0}")]
    TooFewSatellites(usize),
    #[error("satellite geometry is degenerate")]
    DegenerateGeometry,
}

/// Earth-centred Earth-fixed position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcefPosition(pub Vector3<f64>);

/// East-North-Up position in meters, relative to the origin of some [`LocalFrame`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnuPosition(pub Vector3<f64>);

impl EcefPosition {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }
}

impl EnuPosition {
    pub fn new(east: f64, north: f64, up: f64) -> Self {
        Self(Vector3::new(east, north, up))
    }
}

/// Geodetic coordinates on the WGS-84 ellipsoid (radians, meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geodetic {
    pub latitude: f64,
    pub longitude: f64,
    pub height: f64,
}

impl Geodetic {
    pub fn from_degrees(latitude_deg: f64, longitude_deg: f64, height: f64) -> Self {
        Self {
            latitude: latitude_deg.to_radians(),
            longitude: longitude_deg.to_radians(),
            height,
        }
    }

    pub fn to_ecef(&self) -> EcefPosition {
        let (slat, clat) = (sin(self.latitude), cos(self.latitude));
        let (slon, clon) = (sin(self.longitude), cos(self.longitude));
        let n = WGS84_A / sqrt(1.0 - WGS84_E2 * slat * slat);
        EcefPosition::new(
            (n + self.height) * clat * clon,
            (n + self.height) * clat * slon,
            (n * (1.0 - WGS84_E2) + self.height) * slat,
        )
    }

    /// Iterative inverse; converges to well below a micrometre in a few rounds
    /// for terrestrial and orbital heights.
    pub fn from_ecef(p: &EcefPosition) -> Self {
        let (x, y, z) = (p.0.x, p.0.y, p.0.z);
        let longitude = atan2(y, x);
        let rho = sqrt(x * x + y * y);
        let mut latitude = atan2(z, rho * (1.0 - WGS84_E2));
        let mut height = 0.0;
        for _ in 0..10 {
            let slat = sin(latitude);
            let n = WGS84_A / sqrt(1.0 - WGS84_E2 * slat * slat);
            height = if cos(latitude).abs() > 1e-10 {
                rho / cos(latitude) - n
            } else {
                z.abs() / slat.abs() - n * (1.0 - WGS84_E2)
            };
            let next = atan2(z, rho * (1.0 - WGS84_E2 * n / (n + height)));
            let done = (next - latitude).abs() < 1e-15;
            latitude = next;
            if done {
                break;
            }
        }
        Self {
            latitude,
            longitude,
            height,
        }
    }
}

/// A local tangent (ENU) frame anchored at a geodetic origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    origin: Geodetic,
    origin_ecef: EcefPosition,
    /// Rows are the east, north and up unit vectors expressed in ECEF.
    rotation: Matrix3<f64>,
}

fn enu_rotation(latitude: f64, longitude: f64) -> Matrix3<f64> {
    let (slat, clat) = (sin(latitude), cos(latitude));
    let (slon, clon) = (sin(longitude), cos(longitude));
    Matrix3::new(
        -slon,
        clon,
        0.0,
        -slat * clon,
        -slat * slon,
        clat,
        clat * clon,
        clat * slon,
        slat,
    )
}

impl LocalFrame {
    pub fn new(origin: Geodetic) -> Self {
        Self {
            origin,
            origin_ecef: origin.to_ecef(),
            rotation: enu_rotation(origin.latitude, origin.longitude),
        }
    }

    pub fn origin(&self) -> Geodetic {
        self.origin
    }

    pub fn origin_ecef(&self) -> EcefPosition {
        self.origin_ecef
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn to_enu(&self, p: &EcefPosition) -> EnuPosition {
        EnuPosition(self.rotation * (p.0 - self.origin_ecef.0))
    }

    pub fn to_ecef(&self, p: &EnuPosition) -> EcefPosition {
        EcefPosition(self.rotation.transpose() * p.0 + self.origin_ecef.0)
    }
}

/// Convert `p` into the ENU frame anchored at `origin`.
pub fn ecef_to_enu(p: &EcefPosition, origin: &Geodetic) -> EnuPosition {
    LocalFrame::new(*origin).to_enu(p)
}

/// Inverse of [`ecef_to_enu`].
pub fn enu_to_ecef(p: &EnuPosition, origin: &Geodetic) -> EcefPosition {
    LocalFrame::new(*origin).to_ecef(p)
}

/// Classical orbital elements. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeplerianElements {
    pub semi_major_axis: f64,
    pub eccentricity: f64,
    pub inclination: f64,
    pub raan: f64,
    pub arg_perigee: f64,
    pub mean_anomaly_epoch: f64,
    pub epoch: f64,
    pub gravitational_parameter: f64,
}

impl KeplerianElements {
    pub fn validate(&self) -> Result<(), GeodesyError> {
        if !(self.semi_major_axis > 0.0) || !self.semi_major_axis.is_finite() {
            return Err(GeodesyError::InvalidElements("semi-major axis must be positive"));
        }
        if !(0.0..1.0).contains(&self.eccentricity) {
            return Err(GeodesyError::InvalidElements("eccentricity must lie in [0, 1)"));
        }
        let angles = [
            self.inclination,
            self.raan,
            self.arg_perigee,
            self.mean_anomaly_epoch,
            self.epoch,
        ];
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(GeodesyError::InvalidElements("angles and epoch must be finite"));
        }
        if !(self.gravitational_parameter > 0.0) {
            return Err(GeodesyError::InvalidElements(
                "gravitational parameter must be positive",
            ));
        }
        Ok(())
    }

    /// Mean motion, rad/s.
    pub fn mean_motion(&self) -> f64 {
        sqrt(self.gravitational_parameter / (self.semi_major_axis * self.semi_major_axis * self.semi_major_axis))
    }

    pub fn period(&self) -> f64 {
        TAU / self.mean_motion()
    }
}

/// One constellation entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteOrbit {
    pub id: SatelliteId,
    pub elements: KeplerianElements,
}

/// Satellite position and its look angles from a particular receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteState {
    pub satellite_id: SatelliteId,
    pub position: EnuPosition,
    pub elevation: f64,
    pub azimuth: f64,
}

fn wrap_pi(angle: f64) -> f64 {
    let mut a = libm::fmod(angle + PI, TAU);
    if a < 0.0 {
        a += TAU;
    }
    a - PI
}

/// Solve `M = E - e sin E` for the eccentric anomaly `E`.
///
/// Newton iteration safeguarded by the bracket `[M - e, M + e]`; steps that
/// leave the bracket fall back to bisection.
pub fn solve_kepler(mean_anomaly: f64, eccentricity: f64) -> Result<f64, GeodesyError> {
    if !(0.0..1.0).contains(&eccentricity) || !mean_anomaly.is_finite() {
        return Err(GeodesyError::InvalidElements("eccentricity must lie in [0, 1)"));
    }
    let m = wrap_pi(mean_anomaly);
    let residual = |e_anom: f64| e_anom - eccentricity * sin(e_anom) - m;
    let (mut lo, mut hi) = (m - eccentricity, m + eccentricity);
    let mut e_anom = if eccentricity > 0.8 { m.signum() * PI } else { m };
    e_anom = e_anom.clamp(lo, hi);
    for _ in 0..KEPLER_MAX_ITER {
        let f = residual(e_anom);
        if f.abs() < KEPLER_TOLERANCE {
            return Ok(e_anom + (mean_anomaly - m));
        }
        if f > 0.0 {
            hi = e_anom;
        } else {
            lo = e_anom;
        }
        let step = f / (1.0 - eccentricity * cos(e_anom));
        let next = e_anom - step;
        e_anom = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    Err(GeodesyError::KeplerNonConvergence {
        mean_anomaly,
        eccentricity,
    })
}

/// Satellite position at time `t` (seconds, same scale as `epoch`).
///
/// The orbit frame is treated as Earth-fixed: Earth rotation is not applied,
/// which over a scenario of tens of seconds only shifts the geometry by a
/// negligible amount.
pub fn kepler_to_ecef(elements: &KeplerianElements, t: f64) -> Result<EcefPosition, GeodesyError> {
    elements.validate()?;
    let e = elements.eccentricity;
    let mean_anomaly = elements.mean_anomaly_epoch + elements.mean_motion() * (t - elements.epoch);
    let ecc_anomaly = solve_kepler(mean_anomaly, e)?;
    let (se, ce) = (sin(ecc_anomaly), cos(ecc_anomaly));
    let true_anomaly = atan2(sqrt(1.0 - e * e) * se, ce - e);
    let radius = elements.semi_major_axis * (1.0 - e * ce);
    let arg_latitude = elements.arg_perigee + true_anomaly;
    let (xp, yp) = (radius * cos(arg_latitude), radius * sin(arg_latitude));
    let (so, co) = (sin(elements.raan), cos(elements.raan));
    let (si, ci) = (sin(elements.inclination), cos(elements.inclination));
    Ok(EcefPosition::new(
        xp * co - yp * ci * so,
        xp * so + yp * ci * co,
        yp * si,
    ))
}

/// Elevation and azimuth (radians) of the unit line of sight `los` given in
/// the receiver's local ENU frame. Azimuth is clockwise from north in `[0, 2π)`.
pub fn look_angles(los_enu: &Vector3<f64>) -> Result<(f64, f64), GeodesyError> {
    let norm = los_enu.norm();
    if !(norm > 0.0) {
        return Err(GeodesyError::CoincidentPoints);
    }
    let u = los_enu / norm;
    let elevation = libm::asin(u.z.clamp(-1.0, 1.0));
    let mut azimuth = atan2(u.x, u.y);
    if azimuth < 0.0 {
        azimuth += TAU;
    }
    Ok((elevation, azimuth))
}

/// Elevation and azimuth of `sat` as seen from `receiver`, both in ECEF.
pub fn elevation_azimuth(receiver: &EcefPosition, sat: &EcefPosition) -> Result<(f64, f64), GeodesyError> {
    let los = sat.0 - receiver.0;
    if los.norm() == 0.0 {
        return Err(GeodesyError::CoincidentPoints);
    }
    let geo = Geodetic::from_ecef(receiver);
    let los_enu = enu_rotation(geo.latitude, geo.longitude) * los;
    look_angles(&los_enu)
}

/// Horizontal dilution of precision from receiver-to-satellite unit vectors
/// expressed in ENU.
pub fn hdop_from_directions(directions: &[Vector3<f64>]) -> Result<f64, GeodesyError> {
    if directions.len() < 4 {
        return Err(GeodesyError::TooFewSatellites(directions.len()));
    }
    let mut normal = Matrix4::<f64>::zeros();
    for d in directions {
        let u = d.normalize();
        let row = nalgebra::RowVector4::new(-u.x, -u.y, -u.z, 1.0);
        normal += row.transpose() * row;
    }
    let inv = normal
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(GeodesyError::DegenerateGeometry)?;
    let h = inv[(0, 0)] + inv[(1, 1)];
    if !(h.is_finite() && h > 0.0) || inv.iter().any(|v| !v.is_finite()) {
        return Err(GeodesyError::DegenerateGeometry);
    }
    Ok(sqrt(h))
}

/// HDOP for a receiver given satellite positions in a shared ECEF frame.
pub fn hdop(receiver: &EcefPosition, sats: &[EcefPosition]) -> Result<f64, GeodesyError> {
    let geo = Geodetic::from_ecef(receiver);
    let rot = enu_rotation(geo.latitude, geo.longitude);
    let mut dirs = Vec::with_capacity(sats.len());
    for s in sats {
        let los = s.0 - receiver.0;
        if los.norm() == 0.0 {
            return Err(GeodesyError::CoincidentPoints);
        }
        dirs.push(rot * los);
    }
    hdop_from_directions(&dirs)
}

/// Default scenario origin: a downtown Ann Arbor intersection.
pub fn default_origin() -> Geodetic {
    Geodetic::from_degrees(42.2808, -83.7430, 250.0)
}

/// Six circular GPS-like orbits (55° inclination) placed so that, from
/// [`default_origin`] at t = 0, they sit at azimuth/elevation (60°, 55°),
/// (71°, 64°), (99°, 29°), (174°, 58°), (185°, 25°) and (213°, 35°): a sky
/// open to the south and east, HDOP about 2.85 at the origin.
pub fn default_constellation() -> Vec<SatelliteOrbit> {
    const SETS: [(f64, f64, f64); 6] = [
        // inclination, raan, mean anomaly (deg)
        (55.0, 257.381425, 69.438390),
        (55.0, 258.148394, 60.655849),
        (55.0, 313.595218, 25.642267),
        (55.0, 266.015052, 21.716124),
        (55.0, 279.370003, 347.690352),
        (55.0, 251.824152, 4.032492),
    ];
    SETS.iter()
        .enumerate()
        .map(|(k, &(inc, raan, m0))| SatelliteOrbit {
            id: SatelliteId(k as u32 + 1),
            elements: KeplerianElements {
                semi_major_axis: 26_560_000.0,
                eccentricity: 0.0,
                inclination: inc.to_radians(),
                raan: raan.to_radians(),
                arg_perigee: 0.0,
                mean_anomaly_epoch: m0.to_radians(),
                epoch: 0.0,
                gravitational_parameter: GM_EARTH,
            },
        })
        .collect()
}
