//! Scenario files: what to simulate and how to filter it.

use std::fmt;
use std::path::{Path, PathBuf};

use cmm_core::baselines::StaticCmmConfig;
use cmm_core::error_models::NoiseConfig;
use cmm_core::filter::FilterConfig;
use cmm_core::geodesy::{default_constellation, Geodetic, KeplerianElements, LocalFrame, SatelliteOrbit, GM_EARTH};
use cmm_core::map_constraints::{Lane, LaneMap, Polygon};
use cmm_core::multipath::{Block, BuildingMap, DllModel};
use cmm_core::{SatelliteId, VehicleId};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

const FIG2_INTERSECTION: &str = include_str!("../data/fig2_intersection.json");
const MULTIPATH: &str = include_str!("../data/multipath.json");
const BLOCKAGE: &str = include_str!("../data/blockage.json");

/// Names accepted by [`load_scenario`] in place of a path.
pub const BUILTIN_SCENARIOS: [&str; 3] = ["fig2_intersection", "multipath", "blockage"];

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: at `{field}`: {message}")]
    Parse {
        path: String,
        field: String,
        message: String,
    },
    #[error("invalid scenario: `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl fmt::Display) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    /// Constant velocity from `start` along `heading_deg` (counter-clockwise
    /// from east).
    Straight {
        start: [f64; 2],
        heading_deg: f64,
        speed: f64,
    },
    /// Constant speed along a polyline; the vehicle stops at the last point.
    Waypoints { points: Vec<[f64; 2]>, speed: f64 },
}

impl Trajectory {
    /// Position and velocity at time `t` ≥ 0.
    pub fn state_at(&self, t: f64) -> (Vector2<f64>, Vector2<f64>) {
        match self {
            Trajectory::Straight {
                start,
                heading_deg,
                speed,
            } => {
                let dir = Vector2::new(heading_deg.to_radians().cos(), heading_deg.to_radians().sin());
                (Vector2::new(start[0], start[1]) + dir * (speed * t), dir * *speed)
            }
            Trajectory::Waypoints { points, speed } => {
                let mut remaining = speed * t;
                for w in points.windows(2) {
                    let (a, b) = (Vector2::new(w[0][0], w[0][1]), Vector2::new(w[1][0], w[1][1]));
                    let len = (b - a).norm();
                    if remaining <= len && len > 0.0 {
                        let dir = (b - a) / len;
                        return (a + dir * remaining, dir * *speed);
                    }
                    remaining -= len;
                }
                let last = points[points.len() - 1];
                (Vector2::new(last[0], last[1]), Vector2::zeros())
            }
        }
    }

    /// Initial direction of travel, radians counter-clockwise from east.
    pub fn heading(&self) -> f64 {
        match self {
            Trajectory::Straight { heading_deg, .. } => heading_deg.to_radians(),
            Trajectory::Waypoints { points, .. } => {
                let d = Vector2::new(points[1][0] - points[0][0], points[1][1] - points[0][1]);
                d.y.atan2(d.x)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: VehicleId,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneSource {
    /// Two crossing two-lane roads centred on the origin.
    Intersection { lane_width: f64, half_length: f64 },
    /// Inline polygons.
    Polygons(Vec<LanePolygon>),
    /// JSON file holding a list of polygons, relative to the scenario file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanePolygon {
    pub vertices: Vec<[f64; 2]>,
    #[serde(default)]
    pub altitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildingSource {
    Blocks(Vec<BlockSpec>),
    File(PathBuf),
}

/// Keplerian elements as stored in ephemeris files, angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitRecord {
    pub id: SatelliteId,
    pub semi_major_axis_m: f64,
    pub eccentricity: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub arg_perigee_deg: f64,
    pub mean_anomaly_deg: f64,
    #[serde(default)]
    pub epoch_s: f64,
}

impl OrbitRecord {
    pub fn to_orbit(&self) -> SatelliteOrbit {
        SatelliteOrbit {
            id: self.id,
            elements: KeplerianElements {
                semi_major_axis: self.semi_major_axis_m,
                eccentricity: self.eccentricity,
                inclination: self.inclination_deg.to_radians(),
                raan: self.raan_deg.to_radians(),
                arg_perigee: self.arg_perigee_deg.to_radians(),
                mean_anomaly_epoch: self.mean_anomaly_deg.to_radians(),
                epoch: self.epoch_s,
                gravitational_parameter: GM_EARTH,
            },
        }
    }

    pub fn from_orbit(o: &SatelliteOrbit) -> Self {
        let e = &o.elements;
        Self {
            id: o.id,
            semi_major_axis_m: e.semi_major_axis,
            eccentricity: e.eccentricity,
            inclination_deg: e.inclination.to_degrees(),
            raan_deg: e.raan.to_degrees(),
            arg_perigee_deg: e.arg_perigee.to_degrees(),
            mean_anomaly_deg: e.mean_anomaly_epoch.to_degrees(),
            epoch_s: e.epoch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EphemerisSource {
    /// The bundled six-satellite constellation.
    #[default]
    Default,
    Orbits(Vec<OrbitRecord>),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toggles {
    /// Buildings reflect and block signals.
    pub multipath: bool,
    /// Apply the `blocked` satellite lists.
    pub blockage: bool,
    /// Simulate the receiver clock random walk.
    pub clock: bool,
    pub adaptive_noise: bool,
}

/// Satellites withheld from one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockedSatellites {
    pub vehicle: VehicleId,
    pub satellites: Vec<SatelliteId>,
}

/// Uncertainty of the EKF start beyond the first fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub velocity_std: f64,
    pub clock_drift_std: f64,
    /// Multiplies the first fix's position covariance.
    pub position_cov_scale: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            velocity_std: 5.0,
            clock_drift_std: 1.0,
            position_cov_scale: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticCmmSettings {
    pub n_candidates: usize,
    pub prior_std: f64,
}

impl Default for StaticCmmSettings {
    fn default() -> Self {
        let d = StaticCmmConfig::default();
        Self {
            n_candidates: d.n_candidates,
            prior_std: d.prior_std,
        }
    }
}

impl From<StaticCmmSettings> for StaticCmmConfig {
    fn from(s: StaticCmmSettings) -> Self {
        StaticCmmConfig {
            n_candidates: s.n_candidates,
            prior_std: s.prior_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub steps: usize,
    /// Truth-side noise; also handed to the filter (the filter's own `noise`
    /// entry is overwritten).
    pub noise: NoiseConfig,
    pub filter: FilterConfig,
    pub static_cmm: StaticCmmSettings,
    pub init: InitConfig,
    /// Latitude (deg), longitude (deg), height (m) of the ENU origin.
    pub origin: [f64; 3],
    pub vehicles: Vec<VehicleSpec>,
    pub lanes: LaneSource,
    pub buildings: Option<BuildingSource>,
    pub ephemeris: EphemerisSource,
    pub toggles: Toggles,
    pub blocked: Vec<BlockedSatellites>,
    /// Std of the true common biases at the start, m.
    pub common_bias_std: f64,
    pub elevation_mask_deg: f64,
    /// Reflected-to-direct amplitude ratio of the code-tracking model.
    pub reflection_amplitude: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            seed: 0,
            steps: 300,
            noise: NoiseConfig::default(),
            filter: FilterConfig::default(),
            static_cmm: StaticCmmSettings::default(),
            init: InitConfig::default(),
            origin: [42.2808, -83.7430, 250.0],
            vehicles: fig2_vehicles(),
            lanes: LaneSource::Intersection {
                lane_width: 3.5,
                half_length: 200.0,
            },
            buildings: None,
            ephemeris: EphemerisSource::Default,
            toggles: Toggles::default(),
            blocked: Vec::new(),
            common_bias_std: 5.0,
            elevation_mask_deg: 5.0,
            reflection_amplitude: 0.5,
        }
    }
}

/// Four vehicles on lane centres driving towards the junction at 5 m/s.
pub fn fig2_vehicles() -> Vec<VehicleSpec> {
    let straight = |x: f64, y: f64, h: f64| Trajectory::Straight {
        start: [x, y],
        heading_deg: h,
        speed: 5.0,
    };
    vec![
        VehicleSpec {
            id: VehicleId(0),
            trajectory: straight(-160.0, -1.75, 0.0),
        },
        VehicleSpec {
            id: VehicleId(1),
            trajectory: straight(160.0, 1.75, 180.0),
        },
        VehicleSpec {
            id: VehicleId(2),
            trajectory: straight(1.75, -160.0, 90.0),
        },
        VehicleSpec {
            id: VehicleId(3),
            trajectory: straight(-1.75, 160.0, 270.0),
        },
    ]
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.steps < 1 {
            return Err(invalid("steps", "must be at least 1"));
        }
        self.noise.validate().map_err(|m| invalid("noise", m))?;
        let mut f = self.filter.clone();
        f.noise = self.noise;
        f.validate().map_err(|e| invalid("filter", e))?;
        if self.vehicles.is_empty() {
            return Err(invalid("vehicles", "at least one vehicle required"));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if self.vehicles[..i].iter().any(|w| w.id == v.id) {
                return Err(invalid(format!("vehicles[{i}].id"), "duplicate vehicle id"));
            }
            match &v.trajectory {
                Trajectory::Straight { speed, .. } | Trajectory::Waypoints { speed, .. }
                    if speed.is_nan() || *speed < 0.0 =>
                {
                    return Err(invalid(
                        format!("vehicles[{i}].trajectory.speed"),
                        "must be non-negative",
                    ));
                }
                Trajectory::Waypoints { points, .. } if points.len() < 2 => {
                    return Err(invalid(
                        format!("vehicles[{i}].trajectory.points"),
                        "need at least 2 points",
                    ));
                }
                _ => {}
            }
        }
        if self.common_bias_std.is_nan() || self.common_bias_std < 0.0 {
            return Err(invalid("common_bias_std", "must be non-negative"));
        }
        if !(-90.0..90.0).contains(&self.elevation_mask_deg) {
            return Err(invalid("elevation_mask_deg", "must lie in [-90, 90)"));
        }
        if !(self.reflection_amplitude >= 0.0 && self.reflection_amplitude < 1.0) {
            return Err(invalid("reflection_amplitude", "must lie in [0, 1)"));
        }
        if self.static_cmm.n_candidates == 0 {
            return Err(invalid("static_cmm.n_candidates", "must be positive"));
        }
        if !(self.init.velocity_std > 0.0 && self.init.clock_drift_std > 0.0 && self.init.position_cov_scale > 0.0) {
            return Err(invalid("init", "standard deviations and scale must be positive"));
        }
        Ok(())
    }

    /// Filter settings with the scenario's noise and toggles folded in.
    pub fn filter_config(&self) -> FilterConfig {
        let mut f = self.filter.clone();
        f.noise = self.noise;
        f.adaptive_noise = self.toggles.adaptive_noise;
        f
    }

    pub fn dll(&self) -> DllModel {
        DllModel {
            reflection_amplitude: self.reflection_amplitude,
            ..DllModel::default()
        }
    }
}

/// A scenario with every referenced file loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub frame: LocalFrame,
    pub lanes: LaneMap,
    pub buildings: BuildingMap,
    pub orbits: Vec<SatelliteOrbit>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
        path: origin.to_string(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse scenario JSON; relative file references resolve against `base_dir`.
pub fn parse_scenario(text: &str, origin: &str, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let config: ScenarioConfig = parse_json(text, origin)?;
    resolve(config, base_dir)
}

/// Load a scenario from a path, or a bundled one by name.
pub fn load_scenario(path_or_name: &str) -> Result<Scenario, ScenarioError> {
    match path_or_name {
        "fig2_intersection" => parse_scenario(FIG2_INTERSECTION, path_or_name, None),
        "multipath" => parse_scenario(MULTIPATH, path_or_name, None),
        "blockage" => parse_scenario(BLOCKAGE, path_or_name, None),
        p => {
            let path = Path::new(p);
            parse_scenario(&read(path)?, p, path.parent())
        }
    }
}

fn resolve_path(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

fn lane_from(p: &LanePolygon, field: &str) -> Result<Lane, ScenarioError> {
    let vertices = p.vertices.iter().map(|v| Vector2::new(v[0], v[1])).collect();
    Ok(Lane {
        polygon: Polygon::new(vertices).map_err(|e| invalid(field, e))?,
        altitude: p.altitude,
    })
}

/// Validate the configuration and load the maps and ephemeris it points to.
pub fn resolve(config: ScenarioConfig, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let lanes = match &config.lanes {
        LaneSource::Intersection {
            lane_width,
            half_length,
        } => {
            if !(*lane_width > 0.0 && half_length > lane_width) {
                return Err(invalid("lanes.intersection", "need 0 < lane_width < half_length"));
            }
            LaneMap::intersection(*lane_width, *half_length)
        }
        LaneSource::Polygons(polys) => LaneMap::new(
            polys
                .iter()
                .enumerate()
                .map(|(i, p)| lane_from(p, &format!("lanes.polygons[{i}]")))
                .collect::<Result<_, _>>()?,
        ),
        LaneSource::File(p) => {
            let path = resolve_path(base_dir, p);
            let polys: Vec<LanePolygon> = parse_json(&read(&path)?, &path.display().to_string())?;
            LaneMap::new(
                polys
                    .iter()
                    .enumerate()
                    .map(|(i, p)| lane_from(p, &format!("lanes.file[{i}]")))
                    .collect::<Result<_, _>>()?,
            )
        }
    };
    let blocks: Vec<BlockSpec> = match &config.buildings {
        None => Vec::new(),
        Some(BuildingSource::Blocks(b)) => b.clone(),
        Some(BuildingSource::File(p)) => {
            let path = resolve_path(base_dir, p);
            parse_json(&read(&path)?, &path.display().to_string())?
        }
    };
    let buildings = BuildingMap::new(
        blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                Block::new(Vector3::from(b.min), Vector3::from(b.max))
                    .map_err(|e| invalid(format!("buildings[{i}]"), e))
            })
            .collect::<Result<_, _>>()?,
    );
    let orbits = match &config.ephemeris {
        EphemerisSource::Default => default_constellation(),
        EphemerisSource::Orbits(o) => o.iter().map(OrbitRecord::to_orbit).collect(),
        EphemerisSource::File(p) => {
            let path = resolve_path(base_dir, p);
            let recs: Vec<OrbitRecord> = parse_json(&read(&path)?, &path.display().to_string())?;
            recs.iter().map(OrbitRecord::to_orbit).collect()
        }
    };
    for (i, o) in orbits.iter().enumerate() {
        o.elements
            .validate()
            .map_err(|e| invalid(format!("ephemeris[{i}]"), e))?;
    }
    let frame = LocalFrame::new(Geodetic::from_degrees(
        config.origin[0],
        config.origin[1],
        config.origin[2],
    ));
    Ok(Scenario {
        config,
        frame,
        lanes,
        buildings,
        orbits,
    })
}
