//! Coherence spectroscopy of superconducting qubits.
//!
//! A CW tone swept across the qubit control port populates any cavity mode
//! the qubit couples to; the photon-number fluctuations dephase the qubit.
//! This crate models that dephasing, checks the model against a master
//! equation integration, generates synthetic sweeps, fits mode parameters
//! back out of them and classifies the detected modes.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dephasing;
pub mod detect;
pub mod error;
pub mod fit;
pub mod io;
pub mod lindblad;
mod peaks;
pub mod stats;
pub mod sweep;
pub mod units;

pub use dephasing::{
    dephasing_spectral_density, measurement_dephasing_rate, occupancy, photon_numbers,
    photons_to_temperature, power_to_amplitude, quality_factor, stark_shift, total_dephasing_rate,
    Drive, Environment, Mode, QubitBaseline,
};
pub use error::{Error, Result};
pub use units::AngularFrequency;
