//! Block city model, line-of-sight tests, single-bounce ray tracing and the
//! code-tracking (DLL) multipath range error.
//!
//! Buildings are axis-aligned boxes in the scenario ENU frame. Only the four
//! vertical faces of each box reflect; ground reflections and double bounces
//! are ignored. A satellite whose direct path is blocked is dropped even if a
//! reflected copy reaches the receiver.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use libm::cos;
use nalgebra::Vector3;

use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum MultipathError {
    #[error("block has non-positive extent on some axis")]
    DegenerateBlock,
    #[error("reflected path ({reflected} m) must be longer than the direct path ({direct} m)")]
    NonPositiveDelay { direct: f64, reflected: f64 },
    #[error("invalid DLL model: {0}")]
    InvalidDll(&'static str),
    #[error("discriminator has no zero within two half-chips of the direct delay")]
    NoDiscriminatorZero,
}

/// Axis-aligned rectangular block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Block {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self, MultipathError> {
        if (0..3).any(|k| !(max[k] > min[k]) || !min[k].is_finite() || !max[k].is_finite()) {
            return Err(MultipathError::DegenerateBlock);
        }
        Ok(Self { min, max })
    }

    pub fn contains_strict(&self, p: &Vector3<f64>, margin: f64) -> bool {
        (0..3).all(|k| p[k] > self.min[k] + margin && p[k] < self.max[k] - margin)
    }

    /// Whether the segment `a -> b` passes through the open interior.
    pub fn segment_hits_interior(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        let d = b - a;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for k in 0..3 {
            if d[k] == 0.0 {
                if a[k] <= self.min[k] || a[k] >= self.max[k] {
                    return false;
                }
            } else {
                let inv = 1.0 / d[k];
                let (mut lo, mut hi) = ((self.min[k] - a[k]) * inv, (self.max[k] - a[k]) * inv);
                if lo > hi {
                    core::mem::swap(&mut lo, &mut hi);
                }
                t0 = t0.max(lo);
                t1 = t1.min(hi);
                if t0 >= t1 {
                    return false;
                }
            }
        }
        // grazing a face or an edge is not an interior crossing
        let mid = a + d * (0.5 * (t0 + t1));
        self.contains_strict(&mid, 1e-9)
    }
}

/// City model: a list of rectangular blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildingMap {
    pub blocks: Vec<Block>,
}

impl BuildingMap {
    pub fn new(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    fn segment_clear(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        !self.blocks.iter().any(|blk| blk.segment_hits_interior(a, b))
    }
}

/// True iff the segment `rx -> sat` crosses the interior of any block.
pub fn los_blocked(map: &BuildingMap, rx: &Vector3<f64>, sat: &Vector3<f64>) -> bool {
    !map.segment_clear(rx, sat)
}

/// One single-bounce path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflection {
    pub length: f64,
    pub point: Vector3<f64>,
    pub block: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayTraceResult {
    pub los_blocked: bool,
    pub direct_length: f64,
    pub reflections: Vec<Reflection>,
}

impl RayTraceResult {
    pub fn reflected_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.reflections.iter().map(|r| r.length)
    }

    /// Shortest reflected path, i.e. the one the model treats as dominant.
    pub fn strongest(&self) -> Option<&Reflection> {
        self.reflections.iter().min_by(|a, b| a.length.total_cmp(&b.length))
    }
}

/// Image-method search over every vertical block face.
pub fn trace_single_reflections(map: &BuildingMap, rx: &Vector3<f64>, sat: &Vector3<f64>) -> RayTraceResult {
    let direct_length = (sat - rx).norm();
    let los_blocked = los_blocked(map, rx, sat);
    let mut reflections = Vec::new();
    for (index, blk) in map.blocks.iter().enumerate() {
        for axis in 0..2 {
            let other = 1 - axis;
            for (plane, outward) in [(blk.min[axis], -1.0), (blk.max[axis], 1.0)] {
                // both ends must face the front of the wall
                if outward * (rx[axis] - plane) <= 0.0 || outward * (sat[axis] - plane) <= 0.0 {
                    continue;
                }
                let mut image = *rx;
                image[axis] = 2.0 * plane - rx[axis];
                let t = (plane - image[axis]) / (sat[axis] - image[axis]);
                let hit = image + (sat - image) * t;
                if hit[other] < blk.min[other] || hit[other] > blk.max[other] || hit.z < blk.min.z || hit.z > blk.max.z
                {
                    continue;
                }
                if !map.segment_clear(rx, &hit) || !map.segment_clear(&hit, sat) {
                    continue;
                }
                let length = (hit - rx).norm() + (sat - hit).norm();
                if length > direct_length {
                    reflections.push(Reflection {
                        length,
                        point: hit,
                        block: index,
                    });
                }
            }
        }
    }
    RayTraceResult {
        los_blocked,
        direct_length,
        reflections,
    }
}

/// Code-tracking loop with a triangular code autocorrelation and a coherent
/// early-minus-late discriminator spaced `±t_c` around the prompt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DllModel {
    /// Carrier angular frequency ω₀, rad/s.
    pub carrier_angular_freq: f64,
    /// Half-chip time t_c, s. The chip lasts `2 t_c`.
    pub chip_half_time: f64,
    /// Reflected-to-direct amplitude ratio.
    pub reflection_amplitude: f64,
    pub direct_amplitude: f64,
}

impl Default for DllModel {
    /// GPS L1 C/A: 1575.42 MHz carrier, 1.023 Mcps code, half-chip spacing.
    fn default() -> Self {
        Self {
            carrier_angular_freq: TAU * 1575.42e6,
            chip_half_time: 0.5 / 1.023e6,
            reflection_amplitude: 0.5,
            direct_amplitude: 1.0,
        }
    }
}

impl DllModel {
    pub fn validate(&self) -> Result<(), MultipathError> {
        if !(self.chip_half_time > 0.0) {
            return Err(MultipathError::InvalidDll("chip half time must be positive"));
        }
        if !(self.direct_amplitude > 0.0) || !(self.reflection_amplitude >= 0.0) {
            return Err(MultipathError::InvalidDll(
                "amplitudes must be non-negative, direct positive",
            ));
        }
        if self.reflection_amplitude >= 1.0 {
            return Err(MultipathError::InvalidDll(
                "reflection must be weaker than the direct signal",
            ));
        }
        Ok(())
    }

    /// Carrier wavelength, m.
    pub fn wavelength(&self) -> f64 {
        TAU * SPEED_OF_LIGHT / self.carrier_angular_freq
    }

    /// Multipath phase `φ_d = ω₀ t_d + π`; the `π` is the phase flip on reflection.
    pub fn multipath_phase(&self, delay: f64) -> f64 {
        libm::fmod(self.carrier_angular_freq * delay, TAU) + PI
    }

    fn correlation(&self, lag: f64) -> f64 {
        (1.0 - lag.abs() / (2.0 * self.chip_half_time)).max(0.0)
    }

    /// Discriminator `D = R_E − R_L` at prompt offset `tau = t_p − t_0`.
    pub fn discriminator(&self, tau: f64, delay: Option<f64>) -> f64 {
        let tc = self.chip_half_time;
        let mut d = self.correlation(tau - tc) - self.correlation(tau + tc);
        if let Some(td) = delay {
            let k = self.reflection_amplitude * cos(self.multipath_phase(td));
            d += k * (self.correlation(tau - td - tc) - self.correlation(tau - td + tc));
        }
        self.direct_amplitude * d
    }
}

fn checked_delay(direct: f64, reflected: f64) -> Result<f64, MultipathError> {
    if !(reflected > direct) {
        return Err(MultipathError::NonPositiveDelay { direct, reflected });
    }
    Ok((reflected - direct) / SPEED_OF_LIGHT)
}

/// Pseudo-range error `c (t_p − t_0)` caused by one reflected copy.
///
/// For short delays this is `cos φ_d / (2 + cos φ_d) · c t_d` (half-amplitude
/// echo). Once the late correlator of the echo leaves the linear part of the
/// triangle (delays beyond about half a chip) the zero moves along the second
/// linear piece, `a cos φ (3 t_c − t_d) / (2 − a cos φ)`, and vanishes for
/// delays of 1.5 chips and more.
pub fn multipath_range_error(d_direct: f64, d_reflected: f64, dll: &DllModel) -> Result<f64, MultipathError> {
    dll.validate()?;
    let td = checked_delay(d_direct, d_reflected)?;
    Ok(SPEED_OF_LIGHT * tracking_offset(td, dll))
}

fn tracking_offset(td: f64, dll: &DllModel) -> f64 {
    let tc = dll.chip_half_time;
    if td >= 3.0 * tc {
        return 0.0;
    }
    let k = dll.reflection_amplitude * cos(dll.multipath_phase(td));
    let near = k * td / (1.0 + k);
    if near - td >= -tc {
        return near;
    }
    let far = k * (3.0 * tc - td) / (2.0 - k);
    if far - td >= -3.0 * tc {
        far
    } else {
        0.0
    }
}

/// Locate the DLL lock point `t_p` numerically by scanning the discriminator
/// outward from the direct delay and bisecting the first sign change.
///
/// `d_reflected = None` models a clean signal.
pub fn dll_discriminator_zero(d_direct: f64, d_reflected: Option<f64>, dll: &DllModel) -> Result<f64, MultipathError> {
    dll.validate()?;
    let t0 = d_direct / SPEED_OF_LIGHT;
    let delay = match d_reflected {
        Some(dm) => Some(checked_delay(d_direct, dm)?),
        None => None,
    };
    let f = |tau: f64| dll.discriminator(tau, delay);
    let at_zero = f(0.0);
    if at_zero == 0.0 {
        return Ok(t0);
    }
    let tc = dll.chip_half_time;
    let dir = if at_zero > 0.0 { -1.0 } else { 1.0 };
    let h = tc / 4000.0;
    let (mut a, mut fa) = (0.0, at_zero);
    let mut bracket = None;
    for k in 1..=8000 {
        let b = dir * h * k as f64;
        let fb = f(b);
        if fb == 0.0 {
            return Ok(t0 + b);
        }
        if fb.signum() != fa.signum() {
            bracket = Some((a, b));
            break;
        }
        a = b;
        fa = fb;
    }
    let (mut lo, mut hi) = bracket.ok_or(MultipathError::NoDiscriminatorZero)?;
    if f(lo) > 0.0 {
        core::mem::swap(&mut lo, &mut hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() < 1e-19 {
            break;
        }
    }
    Ok(t0 + 0.5 * (lo + hi))
}

/// Outcome of [`total_multipath_error`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultipathOutcome {
    pub visible: bool,
    pub error: f64,
    pub reflections: usize,
}

/// Range error for one receiver/satellite pair. Blocked line of sight means
/// the measurement is not used at all (`visible = false`).
pub fn total_multipath_error(
    map: &BuildingMap,
    rx: &Vector3<f64>,
    sat: &Vector3<f64>,
    dll: &DllModel,
) -> MultipathOutcome {
    let trace = trace_single_reflections(map, rx, sat);
    if trace.los_blocked {
        return MultipathOutcome {
            visible: false,
            error: 0.0,
            reflections: trace.reflections.len(),
        };
    }
    let error = trace
        .strongest()
        .and_then(|r| multipath_range_error(trace.direct_length, r.length, dll).ok())
        .unwrap_or(0.0);
    MultipathOutcome {
        visible: true,
        error,
        reflections: trace.reflections.len(),
    }
}
