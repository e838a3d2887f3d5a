//! Frequency units and physical constants.
//!
//! Physics code works in angular frequency (rad/s); files and the CLI speak
//! ordinary frequency in Hz. The value is held in Hz so that reading and
//! writing files never perturbs it.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Reduced Planck constant, J·s (exact SI value).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K (exact SI value).
pub const K_B: f64 = 1.380_649e-23;

/// An angular frequency. Serializes as Hz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngularFrequency(f64);

impl AngularFrequency {
    pub const ZERO: AngularFrequency = AngularFrequency(0.0);

    pub fn from_rad_per_s(value: f64) -> Self {
        Self(value / TAU)
    }

    pub const fn from_hz(hz: f64) -> Self {
        Self(hz)
    }

    pub fn from_khz(khz: f64) -> Self {
        Self::from_hz(khz * 1e3)
    }

    pub fn from_mhz(mhz: f64) -> Self {
        Self::from_hz(mhz * 1e6)
    }

    pub fn from_ghz(ghz: f64) -> Self {
        Self::from_hz(ghz * 1e9)
    }

    pub fn rad_per_s(self) -> f64 {
        self.0 * TAU
    }

    pub const fn hz(self) -> f64 {
        self.0
    }

    pub fn ghz(self) -> f64 {
        self.hz() / 1e9
    }

    pub fn abs(self) -> Self {
        Self(self.0.abs())
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl std::ops::Add for AngularFrequency {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl std::ops::Sub for AngularFrequency {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self(self.0 - rhs.0)
    }
}

impl std::ops::Neg for AngularFrequency {
    type Output = Self;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl std::ops::Mul<f64> for AngularFrequency {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self(self.0 * rhs)
    }
}

impl fmt::Display for AngularFrequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2π × {} Hz", self.hz())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ghz_helpers() {
        let w = AngularFrequency::from_ghz(7.24);
        assert_eq!(w.ghz(), 7.24);
        assert!((w.rad_per_s() - 7.24e9 * TAU).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn hz_round_trip_is_exact(hz in -1e12f64..1e12) {
            prop_assert_eq!(AngularFrequency::from_hz(hz).hz(), hz);
        }
    }
}
