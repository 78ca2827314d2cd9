//! Cooperative map matching for connected vehicles.
//!
//! A Rao-Blackwellized particle filter samples the per-satellite common
//! pseudo-range biases while each particle carries one extended Kalman filter
//! per vehicle, conditioned on that particle's biases. Lane constraints
//! reweight the particles, so the group of vehicles pins down the biases that
//! none of them could observe alone.
//!
//! The crate is `no_std` with `alloc`. It also contains everything needed to
//! emulate the measurements (Keplerian constellation, error processes, a
//! single-bounce ray tracer with a code-tracking loop model) and the
//! comparison baselines. File formats, the simulation loop and the CLI live in
//! the `cmm-sim` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]
// `!(x > 0.0)` deliberately rejects NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod error_models;
pub mod filter;
pub mod geodesy;
pub mod map_constraints;
pub mod multipath;
pub mod rng;
pub mod stats;

mod ids;

pub use ids::{SatelliteId, VehicleId};

/// Nominal speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
