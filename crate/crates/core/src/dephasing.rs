//! Analytic measurement-induced dephasing of a qubit dispersively coupled
//! to cavity modes under a continuous-wave drive.
//!
//! For a mode with bare frequency ω_c, decay rate κ and dispersive shift χ,
//! driven at ω_d with amplitude ε, the detuning is Δ = ω_d − ω_c and
//!
//! ```text
//! n±  = ε² / (κ²/4 + (Δ ± χ)²)
//! D_s = 2 (n+ + n−) χ² / (κ²/4 + χ² + Δ²)
//! Γ_m = κ D_s / 2
//! ```
//!
//! `n+` is the steady-state photon number with the qubit excited, `n−` with
//! the qubit in its ground state.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::units::{AngularFrequency, HBAR, K_B};

/// One electromagnetic mode seen by the qubit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub label: String,
    pub omega_bare: AngularFrequency,
    pub kappa: AngularFrequency,
    /// Signed dispersive shift.
    pub chi: AngularFrequency,
}

impl Mode {
    pub fn new(
        label: impl Into<String>,
        omega_bare: AngularFrequency,
        kappa: AngularFrequency,
        chi: AngularFrequency,
    ) -> Result<Self> {
        let mode = Self {
            label: label.into(),
            omega_bare,
            kappa,
            chi,
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("omega_bare", self.omega_bare.rad_per_s())?;
        ensure_finite("kappa", self.kappa.rad_per_s())?;
        ensure_finite("chi", self.chi.rad_per_s())?;
        if self.kappa.rad_per_s() <= 0.0 {
            return Err(Error::Domain(format!(
                "mode {:?}: kappa must be positive",
                self.label
            )));
        }
        if self.omega_bare.rad_per_s() <= 0.0 {
            return Err(Error::Domain(format!(
                "mode {:?}: bare frequency must be positive",
                self.label
            )));
        }
        Ok(())
    }
}

/// A continuous-wave tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub omega_d: AngularFrequency,
    pub epsilon_rf: AngularFrequency,
}

impl Drive {
    pub fn new(omega_d: AngularFrequency, epsilon_rf: AngularFrequency) -> Result<Self> {
        let drive = Self {
            omega_d,
            epsilon_rf,
        };
        drive.validate()?;
        Ok(drive)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("omega_d", self.omega_d.rad_per_s())?;
        ensure_finite("epsilon_rf", self.epsilon_rf.rad_per_s())?;
        if self.epsilon_rf.rad_per_s() < 0.0 {
            return Err(Error::Domain("epsilon_rf must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitBaseline {
    pub omega_q: AngularFrequency,
    /// 1/T2 with the CW tone off, in 1/s.
    pub gamma2_intrinsic: f64,
    /// Energy relaxation time, seconds.
    pub t1: f64,
}

impl QubitBaseline {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("omega_q", self.omega_q.rad_per_s())?;
        ensure_finite("gamma2_intrinsic", self.gamma2_intrinsic)?;
        ensure_finite("t1", self.t1)?;
        if self.t1 <= 0.0 {
            return Err(Error::Domain("t1 must be positive".into()));
        }
        // T2 <= 2 T1, with a little slack for values typed in as T2 = 2 T1.
        if self.gamma2_intrinsic < (1.0 - 1e-12) / (2.0 * self.t1) {
            return Err(Error::Domain(format!(
                "gamma2_intrinsic {} is below 1/(2 T1) = {}",
                self.gamma2_intrinsic,
                1.0 / (2.0 * self.t1)
            )));
        }
        Ok(())
    }
}

/// The qubit plus every mode it couples to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub qubit: QubitBaseline,
    pub modes: Vec<Mode>,
}

impl Environment {
    pub fn new(qubit: QubitBaseline, modes: Vec<Mode>) -> Result<Self> {
        let env = Self { qubit, modes };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        self.qubit.validate()?;
        let mut seen = HashSet::new();
        for mode in &self.modes {
            mode.validate()?;
            if !seen.insert(mode.label.as_str()) {
                return Err(Error::Domain(format!(
                    "duplicate mode label {:?}",
                    mode.label
                )));
            }
        }
        Ok(())
    }
}

/// A mode and drive reduced to the quantities the rate formulas need, all
/// in rad/s. Working from the detuning directly avoids cancellation in
/// ω_d − ω_c when the fitter moves the bare frequency by sub-linewidth steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detuned {
    pub delta: f64,
    pub kappa: f64,
    pub chi: f64,
    pub epsilon: f64,
}

impl Detuned {
    pub fn new(mode: &Mode, drive: &Drive) -> Self {
        Self {
            delta: drive.omega_d.rad_per_s() - mode.omega_bare.rad_per_s(),
            kappa: mode.kappa.rad_per_s(),
            chi: mode.chi.rad_per_s(),
            epsilon: drive.epsilon_rf.rad_per_s(),
        }
    }

    fn check(&self) -> Result<()> {
        ensure_finite("detuning", self.delta)?;
        ensure_finite("kappa", self.kappa)?;
        ensure_finite("chi", self.chi)?;
        ensure_finite("epsilon_rf", self.epsilon)?;
        if self.kappa <= 0.0 {
            return Err(Error::Domain("kappa must be positive".into()));
        }
        Ok(())
    }

    /// `(n+, n−)`.
    pub fn photon_numbers(&self) -> (f64, f64) {
        let half_k2 = 0.25 * self.kappa * self.kappa;
        let e2 = self.epsilon * self.epsilon;
        let dp = self.delta + self.chi;
        let dm = self.delta - self.chi;
        (e2 / (half_k2 + dp * dp), e2 / (half_k2 + dm * dm))
    }

    pub fn spectral_density(&self) -> f64 {
        let (n_plus, n_minus) = self.photon_numbers();
        self.weighted_density(n_plus, n_minus)
    }

    fn denominator(&self) -> f64 {
        0.25 * self.kappa * self.kappa + self.chi * self.chi + self.delta * self.delta
    }

    fn weighted_density(&self, n_plus: f64, n_minus: f64) -> f64 {
        2.0 * (n_plus + n_minus) * self.chi * self.chi / self.denominator()
    }

    /// Γ_m with the excited/ground branches weighted by `2w` and `2(1 − w)`.
    /// No range check on `w`.
    pub fn dephasing_rate(&self, asymmetry_w: f64) -> f64 {
        let (n_plus, n_minus) = self.photon_numbers();
        let weighted_plus = (2.0 * asymmetry_w) * n_plus;
        let weighted_minus = (2.0 * (1.0 - asymmetry_w)) * n_minus;
        0.5 * self.kappa * self.weighted_density(weighted_plus, weighted_minus)
    }

    /// Qubit frequency pull in rad/s: 2χ Re(α+ α−*), with α± the steady
    /// coherent amplitudes of the two qubit branches.
    pub fn stark_shift(&self) -> f64 {
        let half_k2 = 0.25 * self.kappa * self.kappa;
        let e2 = self.epsilon * self.epsilon;
        let dp = self.delta + self.chi;
        let dm = self.delta - self.chi;
        let product = (half_k2 + dp * dp) * (half_k2 + dm * dm);
        2.0 * self.chi * e2 * (half_k2 + self.delta * self.delta - self.chi * self.chi) / product
    }
}

/// Steady-state photon numbers `(n+, n−)` for the excited and ground qubit
/// states.
pub fn photon_numbers(mode: &Mode, drive: &Drive) -> Result<(f64, f64)> {
    let d = Detuned::new(mode, drive);
    d.check()?;
    Ok(d.photon_numbers())
}

pub fn dephasing_spectral_density(mode: &Mode, drive: &Drive) -> Result<f64> {
    let d = Detuned::new(mode, drive);
    d.check()?;
    Ok(d.spectral_density())
}

fn check_asymmetry(asymmetry_w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&asymmetry_w) {
        return Err(Error::Domain(format!(
            "asymmetry_w must lie in [0, 1], got {asymmetry_w}"
        )));
    }
    Ok(())
}

/// Measurement-induced dephasing rate Γ_m in 1/s. `asymmetry_w = 0.5`
/// weights both qubit branches equally.
pub fn measurement_dephasing_rate(mode: &Mode, drive: &Drive, asymmetry_w: f64) -> Result<f64> {
    check_asymmetry(asymmetry_w)?;
    let d = Detuned::new(mode, drive);
    d.check()?;
    Ok(d.dephasing_rate(asymmetry_w))
}

/// Intrinsic Γ2 plus the independent contribution of every mode.
pub fn total_dephasing_rate(env: &Environment, drive: &Drive, asymmetry_w: f64) -> Result<f64> {
    check_asymmetry(asymmetry_w)?;
    drive.validate()?;
    let mut total = env.qubit.gamma2_intrinsic;
    for mode in &env.modes {
        let d = Detuned::new(mode, drive);
        d.check()?;
        total += d.dephasing_rate(asymmetry_w);
    }
    Ok(total)
}

/// AC Stark shift of the qubit transition caused by the driven mode.
///
/// Reduces to 2χ·n̄ when |χ| ≪ κ or |χ| ≪ |Δ|.
pub fn stark_shift(mode: &Mode, drive: &Drive) -> Result<AngularFrequency> {
    let d = Detuned::new(mode, drive);
    d.check()?;
    Ok(AngularFrequency::from_rad_per_s(d.stark_shift()))
}

pub fn quality_factor(mode: &Mode) -> f64 {
    mode.omega_bare.rad_per_s() / mode.kappa.rad_per_s()
}

/// Bose–Einstein occupancy of a mode at temperature `kelvin`.
pub fn occupancy(kelvin: f64, omega: AngularFrequency) -> f64 {
    if kelvin <= 0.0 {
        return 0.0;
    }
    let x = HBAR * omega.rad_per_s() / (K_B * kelvin);
    1.0 / x.exp_m1()
}

/// Inverts [`occupancy`]: the temperature at which a mode at `omega` holds
/// `n_bar` thermal photons.
pub fn photons_to_temperature(n_bar: f64, omega: AngularFrequency) -> Result<f64> {
    ensure_finite("n_bar", n_bar)?;
    ensure_finite("omega", omega.rad_per_s())?;
    if n_bar <= 0.0 {
        return Err(Error::Domain(format!(
            "photon number must be positive to define a temperature, got {n_bar}"
        )));
    }
    if omega.rad_per_s() <= 0.0 {
        return Err(Error::Domain("omega must be positive".into()));
    }
    let energy_ratio = (1.0 / n_bar).ln_1p();
    Ok(HBAR * omega.rad_per_s() / (K_B * energy_ratio))
}

/// Drive amplitude for an applied power: ε = sqrt(conversion · power).
pub fn power_to_amplitude(power: f64, conversion: f64) -> Result<AngularFrequency> {
    ensure_finite("power", power)?;
    ensure_finite("conversion", conversion)?;
    if power < 0.0 {
        return Err(Error::Domain(format!(
            "power must be non-negative, got {power}"
        )));
    }
    if conversion <= 0.0 {
        return Err(Error::Domain("conversion must be positive".into()));
    }
    Ok(AngularFrequency::from_rad_per_s(
        (conversion * power).sqrt(),
    ))
}
