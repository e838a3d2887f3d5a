//! Fit of Γ2(ω_d) = Γ_baseline + Γ_m(ω_d; ω_c, κ, χ, ε, w) to one windowed
//! feature of a coherence-spectroscopy sweep.
//!
//! The model is invariant under (χ, w) → (−χ, 1 − w); results are always
//! reported with χ ≥ 0.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{lm_minimize, FitProblem, FitResult, LmOptions};
use crate::dephasing::{Detuned, Mode};
use crate::error::{Error, Result};
use crate::peaks::{find_peaks, interp};
use crate::stats::{median, robust_sigma};
use crate::sweep::SweepRecord;
use crate::units::AngularFrequency;

/// Parameter order of [`FitResult`] vectors returned by the mode fit.
pub const PARAM_NAMES: [&str; 6] = [
    "freq_bare_hz",
    "kappa_hz",
    "chi_hz",
    "epsilon_rf_hz",
    "asymmetry_w",
    "gamma2_baseline_per_s",
];

const CHI_SIGN_CONVENTION: &str = "chi >= 0; (chi, w) and (-chi, 1 - w) describe the same spectrum";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeFitParams {
    pub omega_bare: AngularFrequency,
    pub kappa: AngularFrequency,
    pub chi: AngularFrequency,
    pub epsilon_rf: AngularFrequency,
    pub asymmetry_w: f64,
    /// Γ2 away from the mode, 1/s.
    pub gamma2_baseline: f64,
}

impl ModeFitParams {
    pub fn mode(&self, label: impl Into<String>) -> Mode {
        Mode {
            label: label.into(),
            omega_bare: self.omega_bare,
            kappa: self.kappa,
            chi: self.chi,
        }
    }

    /// Model Γ2 at drive frequency `omega_d`.
    pub fn gamma2_at(&self, omega_d: AngularFrequency) -> f64 {
        let d = Detuned {
            delta: omega_d.rad_per_s() - self.omega_bare.rad_per_s(),
            kappa: self.kappa.rad_per_s(),
            chi: self.chi.rad_per_s(),
            epsilon: self.epsilon_rf.rad_per_s(),
        };
        self.gamma2_baseline + d.dephasing_rate(self.asymmetry_w)
    }

    /// The mirror-equivalent parameter set with χ ≥ 0.
    pub fn canonical(self) -> Self {
        if self.chi.rad_per_s() < 0.0 {
            Self {
                chi: -self.chi,
                asymmetry_w: 1.0 - self.asymmetry_w,
                ..self
            }
        } else {
            self
        }
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega_bare.rad_per_s() / self.kappa.rad_per_s()
    }

    /// Branch-averaged photon number with the drive on the bare resonance.
    pub fn n_bar_on_resonance(&self) -> f64 {
        let d = Detuned {
            delta: 0.0,
            kappa: self.kappa.rad_per_s(),
            chi: self.chi.rad_per_s(),
            epsilon: self.epsilon_rf.rad_per_s(),
        };
        let (p, m) = d.photon_numbers();
        0.5 * (p + m)
    }

    /// Values in [`PARAM_NAMES`] order (frequencies in Hz).
    pub fn to_vector(&self) -> [f64; 6] {
        [
            self.omega_bare.hz(),
            self.kappa.hz(),
            self.chi.hz(),
            self.epsilon_rf.hz(),
            self.asymmetry_w,
            self.gamma2_baseline,
        ]
    }

    pub fn from_vector(v: &[f64; 6]) -> Self {
        Self {
            omega_bare: AngularFrequency::from_hz(v[0]),
            kappa: AngularFrequency::from_hz(v[1]),
            chi: AngularFrequency::from_hz(v[2]),
            epsilon_rf: AngularFrequency::from_hz(v[3]),
            asymmetry_w: v[4],
            gamma2_baseline: v[5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Weight by 1/σ(Γ2) when every record carries a positive `t2_err`.
    #[default]
    Auto,
    Unweighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeFitOptions {
    /// Frequency unit the optimiser works in, in Hz. Only rounding depends on it.
    pub freq_unit_hz: f64,
    /// Hold w at this value instead of fitting it.
    pub fixed_asymmetry: Option<f64>,
    pub weighting: Weighting,
    pub lm: LmOptions,
}

impl Default for ModeFitOptions {
    fn default() -> Self {
        Self {
            freq_unit_hz: 1e6,
            fixed_asymmetry: None,
            weighting: Weighting::Auto,
            lm: LmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeFit {
    pub params: ModeFitParams,
    /// Optimiser output converted to [`PARAM_NAMES`] order and units.
    /// Held parameters have zero variance.
    pub result: FitResult,
    pub guess: ModeFitParams,
    pub q_factor: f64,
    pub q_factor_err: f64,
    pub n_bar_on_resonance: f64,
    pub weighted: bool,
    pub chi_sign_convention: String,
    /// Names of parameters that ended on a bound.
    pub at_bound: Vec<String>,
}

fn gamma_values(sweep: &[SweepRecord]) -> Vec<f64> {
    sweep.iter().map(|r| r.gamma2).collect()
}

/// Heuristic starting point from the two-peak shape of one feature.
pub fn initial_guess(sweep: &[SweepRecord]) -> Result<ModeFitParams> {
    if sweep.len() < 10 {
        return Err(Error::Domain(format!(
            "initial guess needs at least 10 sweep points, got {}",
            sweep.len()
        )));
    }
    let freqs: Vec<f64> = sweep.iter().map(|r| r.drive_freq.hz()).collect();
    let gamma = gamma_values(sweep);

    let mut sorted = gamma.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let quartile = &sorted[..(sorted.len() / 4).max(1)];
    let baseline = median(quartile);
    let scatter = robust_sigma(&sorted[..sorted.len() / 2]);
    let excess: Vec<f64> = gamma.iter().map(|g| g - baseline).collect();
    let top = excess.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 3.0 * scatter) || top <= 1e-12 * baseline.abs() {
        return Err(Error::NoFeature(format!(
            "largest excursion {top:.3e} /s does not exceed 3x baseline scatter {scatter:.3e} /s"
        )));
    }

    let mut peaks = find_peaks(&excess);
    peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
    let Some(&tallest) = peaks.first() else {
        return Err(Error::NoFeature("excursion lies on the window edge".into()));
    };
    let threshold = (5.0 * scatter).max(0.02 * tallest.prominence);
    let partner = peaks[1..]
        .iter()
        .find(|p| p.prominence >= threshold)
        .copied();

    let width_hz =
        |p: &crate::peaks::Peak| interp(&freqs, p.right_half) - interp(&freqs, p.left_half);
    let kappa_hz = width_hz(&tallest).max(f64::MIN_POSITIVE);

    let (center_hz, chi_hz, w) = match partner {
        Some(other) => {
            let (lo, hi) = if freqs[tallest.index] < freqs[other.index] {
                (tallest, other)
            } else {
                (other, tallest)
            };
            let center = 0.5 * (freqs[lo.index] + freqs[hi.index]);
            let chi = 0.5 * (freqs[hi.index] - freqs[lo.index]);
            // Heights at Δ = −χ (excited branch) and Δ = +χ (ground branch).
            let ratio = lo.height / hi.height;
            let k2 = 0.25 * kappa_hz * kappa_hz;
            let on = 1.0 / k2;
            let off = 1.0 / (k2 + 4.0 * chi * chi);
            let w = ((off - ratio * on) / ((ratio + 1.0) * (off - on))).clamp(0.0, 1.0);
            (center, chi, w)
        }
        None => (freqs[tallest.index], 0.5 * kappa_hz, 0.5),
    };

    let delta = AngularFrequency::from_hz(freqs[tallest.index] - center_hz).rad_per_s();
    let unit_drive = Detuned {
        delta,
        kappa: AngularFrequency::from_hz(kappa_hz).rad_per_s(),
        chi: AngularFrequency::from_hz(chi_hz).rad_per_s(),
        epsilon: 1.0,
    };
    let per_eps2 = unit_drive.dephasing_rate(w);
    let epsilon = if per_eps2 > 0.0 {
        (tallest.height / per_eps2).sqrt()
    } else {
        0.0
    };

    Ok(ModeFitParams {
        omega_bare: AngularFrequency::from_hz(center_hz),
        kappa: AngularFrequency::from_hz(kappa_hz),
        chi: AngularFrequency::from_hz(chi_hz),
        epsilon_rf: AngularFrequency::from_rad_per_s(epsilon),
        asymmetry_w: w,
        gamma2_baseline: baseline.max(0.0),
    })
}

pub fn fit_single_mode(sweep: &[SweepRecord], guess: Option<&ModeFitParams>) -> Result<ModeFit> {
    fit_single_mode_with(sweep, guess, &ModeFitOptions::default())
}

pub fn fit_single_mode_with(
    sweep: &[SweepRecord],
    guess: Option<&ModeFitParams>,
    options: &ModeFitOptions,
) -> Result<ModeFit> {
    let guess = match guess {
        Some(g) => *g,
        None => initial_guess(sweep)?,
    };
    if sweep.len() < 7 {
        return Err(Error::Domain(
            "fit needs more points than parameters".into(),
        ));
    }
    let unit = options.freq_unit_hz;
    if !(unit > 0.0 && unit.is_finite()) {
        return Err(Error::Domain("freq_unit_hz must be positive".into()));
    }
    if let Some(w) = options.fixed_asymmetry {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Domain("fixed asymmetry must lie in [0, 1]".into()));
        }
    }

    let ref_hz = guess.omega_bare.hz();
    let detuning: Vec<f64> = sweep
        .iter()
        .map(|r| (r.drive_freq.hz() - ref_hz) / unit)
        .collect();
    let observed = gamma_values(sweep);
    let weighted = options.weighting == Weighting::Auto
        && sweep
            .iter()
            .all(|r| r.t2_err > 0.0 && r.t2_err.is_finite() && r.t2 > 0.0);
    let sigma: Vec<f64> = if weighted {
        sweep.iter().map(|r| r.t2_err / (r.t2 * r.t2)).collect()
    } else {
        vec![1.0; sweep.len()]
    };

    // Full parameter vector, in optimiser units:
    // [ω_c − ω_ref, κ, χ, ε, w, Γ_baseline]; the first four are ordinary
    // frequencies in multiples of `unit`.
    let to_units = |w: AngularFrequency| w.hz() / unit;
    let mut full0 = [
        0.0,
        to_units(guess.kappa),
        to_units(guess.chi),
        to_units(guess.epsilon_rf),
        options.fixed_asymmetry.unwrap_or(guess.asymmetry_w),
        guess.gamma2_baseline,
    ];
    let (d_min, d_max) = detuning
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        });
    let span = (d_max - d_min).max(f64::MIN_POSITIVE);
    let kappa0 = full0[1].max(span * 1e-6);
    let lower = [d_min - span, kappa0 * 1e-3, -10.0 * span, 0.0, 0.0, 0.0];
    let upper = [
        d_max + span,
        kappa0 * 1e3,
        10.0 * span,
        full0[3].max(kappa0) * 1e3,
        1.0,
        f64::INFINITY,
    ];
    let floors = [
        kappa0,
        kappa0,
        kappa0,
        full0[3].max(kappa0),
        1.0,
        full0[5].max(1.0),
    ];
    for i in 0..6 {
        full0[i] = full0[i].clamp(lower[i], upper[i]);
    }

    let free: Vec<usize> = (0..6)
        .filter(|&i| !(i == 4 && options.fixed_asymmetry.is_some()))
        .collect();
    let pick = |a: &[f64; 6]| DVector::from_iterator(free.len(), free.iter().map(|&i| a[i]));
    let expand = |p: &DVector<f64>| {
        let mut full = full0;
        for (k, &i) in free.iter().enumerate() {
            full[i] = p[k];
        }
        full
    };
    let rate_scale = TAU * unit;
    let residual = |p: &DVector<f64>| {
        let f = expand(p);
        DVector::from_iterator(
            detuning.len(),
            detuning
                .iter()
                .zip(&observed)
                .zip(&sigma)
                .map(|((&d, &obs), &s)| {
                    let model = Detuned {
                        delta: d - f[0],
                        kappa: f[1],
                        chi: f[2],
                        epsilon: f[3],
                    }
                    .dephasing_rate(f[4]);
                    (f[5] + rate_scale * model - obs) / s
                }),
        )
    };

    let mut lm = options.lm;
    lm.scale_covariance = !weighted;
    let problem = FitProblem {
        residual,
        initial: pick(&full0),
        lower_bounds: pick(&lower),
        upper_bounds: pick(&upper),
        scale_floor: pick(&floors),
        options: lm,
    };
    let raw = lm_minimize(&problem)?;

    // Back to physical units, then to the χ ≥ 0 representative.
    let best = expand(&raw.params);
    let mut phys = [
        ref_hz + best[0] * unit,
        best[1] * unit,
        best[2] * unit,
        best[3] * unit,
        best[4],
        best[5],
    ];
    let unit_scale = [unit, unit, unit, unit, 1.0, 1.0];
    let mut sign = [1.0; 6];
    if phys[2] < 0.0 {
        phys[2] = -phys[2];
        phys[4] = 1.0 - phys[4];
        sign[2] = -1.0;
        sign[4] = -1.0;
    }
    let mut covariance = DMatrix::zeros(6, 6);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            covariance[(i, j)] =
                raw.covariance[(a, b)] * unit_scale[i] * unit_scale[j] * sign[i] * sign[j];
        }
    }
    let std_errors = DVector::from_fn(6, |i, _| covariance[(i, i)].max(0.0).sqrt());
    let mut at_bound_flags = vec![false; 6];
    for (k, &i) in free.iter().enumerate() {
        at_bound_flags[i] = raw.at_bound[k];
    }
    let at_bound = at_bound_flags
        .iter()
        .zip(PARAM_NAMES)
        .filter(|(&b, _)| b)
        .map(|(_, name)| name.to_string())
        .collect();

    let params = ModeFitParams::from_vector(&phys);
    let q_factor = phys[0] / phys[1];
    let rel_var = covariance[(0, 0)] / (phys[0] * phys[0])
        + covariance[(1, 1)] / (phys[1] * phys[1])
        - 2.0 * covariance[(0, 1)] / (phys[0] * phys[1]);
    let q_factor_err = q_factor * rel_var.max(0.0).sqrt();

    let result = FitResult {
        params: DVector::from_row_slice(&phys),
        covariance,
        std_errors,
        at_bound: at_bound_flags,
        ..raw
    };
    if !result.converged {
        return Err(Error::NonConvergence(Box::new(result)));
    }
    Ok(ModeFit {
        params,
        n_bar_on_resonance: params.n_bar_on_resonance(),
        result,
        guess,
        q_factor,
        q_factor_err,
        weighted,
        chi_sign_convention: CHI_SIGN_CONVENTION.to_string(),
        at_bound,
    })
}
