//! Feature detection over full sweeps, classification against a catalog of
//! designed and simulation-predicted modes, and per-mode reports.

use serde::{Deserialize, Serialize};

use crate::dephasing::photons_to_temperature;
use crate::error::{Error, Result};
use crate::fit::ModeFit;
use crate::peaks::{find_peaks, interp};
use crate::stats::{linear_regression, median, robust_sigma};
use crate::sweep::{PowerPoint, SweepRecord};
use crate::units::{AngularFrequency, HBAR, K_B};

/// Default catalog match tolerance (2.5 %).
pub const DEFAULT_REL_TOLERANCE: f64 = 0.025;
/// Rolling-median baseline window as a fraction of the sweep span.
pub const BASELINE_WINDOW_FRACTION: f64 = 0.05;
/// A feature must rise this many robust standard deviations of the
/// baseline-subtracted sweep above the baseline.
pub const NOISE_GATE: f64 = 5.0;
const HARMONICS: [u32; 2] = [2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Designed,
    EmSimulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub label: String,
    pub frequency: AngularFrequency,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCatalog {
    pub entries: Vec<CatalogEntry>,
    pub rel_tolerance: f64,
}

impl ModeCatalog {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance <= 0.1) {
            return Err(Error::Domain(format!(
                "rel_tolerance must lie in (0, 0.1], got {}",
                self.rel_tolerance
            )));
        }
        let mut labels = std::collections::HashSet::new();
        for e in &self.entries {
            if !(e.frequency.rad_per_s() > 0.0 && e.frequency.is_finite()) {
                return Err(Error::Domain(format!(
                    "catalog entry {:?} needs a positive frequency",
                    e.label
                )));
            }
            if !labels.insert(e.label.as_str()) {
                return Err(Error::Domain(format!(
                    "duplicate catalog label {:?}",
                    e.label
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Designed,
    Harmonic,
    Spurious,
    /// Another qubit on the same chip.
    Neighbor,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedFeature {
    pub center_freq: AngularFrequency,
    /// Peak Γ2 above the rolling baseline, 1/s.
    pub depth: f64,
    pub prominence: f64,
    /// Full width at half prominence.
    pub width: AngularFrequency,
    pub classification: Classification,
    pub matched_label: Option<String>,
    pub match_error_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScan {
    pub features: Vec<DetectedFeature>,
    /// Excursions with at least half the required prominence that did not
    /// reach it. Reported, never classified.
    pub unconfirmed: Vec<DetectedFeature>,
}

/// Rolling median of `values` over ±`half_window` in `x`.
fn rolling_median(x: &[f64], values: &[f64], half_window: f64) -> Vec<f64> {
    let mut lo = 0;
    let mut hi = 0;
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        while x[i] - x[lo] > half_window {
            lo += 1;
        }
        while hi + 1 < n && x[hi + 1] - x[i] <= half_window {
            hi += 1;
        }
        let (a, b) = if hi - lo < 2 {
            (i.saturating_sub(1), (i + 1).min(n - 1))
        } else {
            (lo, hi)
        };
        out.push(median(&values[a..=b]));
    }
    out
}

fn excess_over_baseline(sweep: &[SweepRecord]) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = sweep.iter().map(|r| r.drive_freq.rad_per_s()).collect();
    let gamma: Vec<f64> = sweep.iter().map(|r| r.gamma2).collect();
    let span = x[x.len() - 1] - x[0];
    let baseline = rolling_median(&x, &gamma, 0.5 * BASELINE_WINDOW_FRACTION * span);
    let excess = gamma.iter().zip(&baseline).map(|(g, b)| g - b).collect();
    (x, excess)
}

fn check_sweep(sweep: &[SweepRecord]) -> Result<()> {
    if sweep.len() < 10 {
        return Err(Error::Domain(format!(
            "feature detection needs at least 10 points, got {}",
            sweep.len()
        )));
    }
    if sweep.windows(2).any(|w| w[1].drive_freq <= w[0].drive_freq) {
        return Err(Error::Domain(
            "sweep must be sorted by strictly increasing frequency".into(),
        ));
    }
    Ok(())
}

/// Prominence threshold used when the caller has none: five robust standard
/// deviations of the baseline-subtracted sweep, and never below 5 % of the
/// median Γ2.
pub fn default_min_prominence(sweep: &[SweepRecord]) -> Result<f64> {
    check_sweep(sweep)?;
    let (_, excess) = excess_over_baseline(sweep);
    let gamma: Vec<f64> = sweep.iter().map(|r| r.gamma2).collect();
    Ok((5.0 * robust_sigma(&excess)).max(0.05 * median(&gamma).abs()))
}

pub fn detect_features(
    sweep: &[SweepRecord],
    min_prominence: f64,
    min_separation: AngularFrequency,
) -> Result<Vec<DetectedFeature>> {
    Ok(scan_features(sweep, min_prominence, min_separation)?.features)
}

/// Prominence-based peak search on Γ2 minus a rolling-median baseline.
/// Peaks closer than `min_separation` are merged, keeping the deeper one.
/// Peaks less than [`NOISE_GATE`] robust standard deviations above the
/// baseline are treated as scatter and dropped.
pub fn scan_features(
    sweep: &[SweepRecord],
    min_prominence: f64,
    min_separation: AngularFrequency,
) -> Result<FeatureScan> {
    check_sweep(sweep)?;
    if !(min_prominence >= 0.0) {
        return Err(Error::Domain("min_prominence must be non-negative".into()));
    }
    let (x, excess) = excess_over_baseline(sweep);
    let to_feature = |p: &crate::peaks::Peak| DetectedFeature {
        center_freq: AngularFrequency::from_rad_per_s(x[p.index]),
        depth: p.height,
        prominence: p.prominence,
        width: AngularFrequency::from_rad_per_s(interp(&x, p.right_half) - interp(&x, p.left_half)),
        classification: Classification::Unknown,
        matched_label: None,
        match_error_rel: None,
    };

    let gate = NOISE_GATE * robust_sigma(&excess);
    let mut peaks: Vec<_> = find_peaks(&excess)
        .into_iter()
        .filter(|p| p.height > 0.0 && p.height >= gate && p.prominence > 0.0)
        .collect();
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.index.cmp(&b.index)));

    let sep = min_separation.rad_per_s();
    let mut kept: Vec<crate::peaks::Peak> = Vec::new();
    let mut unconfirmed = Vec::new();
    for p in &peaks {
        if p.prominence >= min_prominence {
            if kept.iter().all(|k| (x[k.index] - x[p.index]).abs() >= sep) {
                kept.push(*p);
            }
        } else if p.prominence >= 0.5 * min_prominence {
            unconfirmed.push(*p);
        }
    }
    kept.sort_by_key(|p| p.index);
    unconfirmed.sort_by_key(|p| p.index);
    Ok(FeatureScan {
        features: kept.iter().map(to_feature).collect(),
        unconfirmed: unconfirmed.iter().map(to_feature).collect(),
    })
}

fn rel_error(f: f64, reference: f64) -> f64 {
    (f - reference).abs() / reference
}

/// One-to-one greedy assignment of features to entries of one origin, in
/// order of increasing match error (ties go to the lower entry frequency).
fn assign(
    features: &mut [DetectedFeature],
    taken: &mut [bool],
    catalog: &ModeCatalog,
    origin: Origin,
    class: Classification,
) {
    let mut pairs = Vec::new();
    for (fi, f) in features.iter().enumerate() {
        if f.matched_label.is_some() {
            continue;
        }
        for (ei, e) in catalog.entries.iter().enumerate() {
            if e.origin != origin {
                continue;
            }
            let err = rel_error(f.center_freq.rad_per_s(), e.frequency.rad_per_s());
            if err <= catalog.rel_tolerance {
                pairs.push((err, e.frequency.rad_per_s(), fi, ei));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    for (err, _, fi, ei) in pairs {
        if taken[ei] || features[fi].matched_label.is_some() {
            continue;
        }
        taken[ei] = true;
        let f = &mut features[fi];
        f.classification = class;
        f.matched_label = Some(catalog.entries[ei].label.clone());
        f.match_error_rel = Some(err);
    }
}

/// Labels every feature exactly once.
///
/// Order of precedence: designed entries, then simulation-predicted entries
/// (spurious with a label), then 2×/3× multiples of designed entries, then
/// neighbouring qubit frequencies. Catalog entries are matched one-to-one,
/// so a designed entry already claimed by a closer feature is not reused.
/// Anything left is `Unknown`.
pub fn classify(
    features: &[DetectedFeature],
    catalog: &ModeCatalog,
    qubit_freqs: &[AngularFrequency],
) -> Result<Vec<DetectedFeature>> {
    catalog.validate()?;
    let tol = catalog.rel_tolerance;
    let mut out: Vec<DetectedFeature> = features
        .iter()
        .cloned()
        .map(|mut f| {
            f.classification = Classification::Unknown;
            f.matched_label = None;
            f.match_error_rel = None;
            f
        })
        .collect();
    let mut taken = vec![false; catalog.entries.len()];
    assign(
        &mut out,
        &mut taken,
        catalog,
        Origin::Designed,
        Classification::Designed,
    );
    assign(
        &mut out,
        &mut taken,
        catalog,
        Origin::EmSimulated,
        Classification::Spurious,
    );

    for f in out.iter_mut().filter(|f| f.matched_label.is_none()) {
        let freq = f.center_freq.rad_per_s();
        let mut best: Option<(f64, f64, String)> = None;
        for e in catalog
            .entries
            .iter()
            .filter(|e| e.origin == Origin::Designed)
        {
            for m in HARMONICS {
                let target = e.frequency.rad_per_s() * m as f64;
                let err = rel_error(freq, target);
                let better = match &best {
                    None => true,
                    Some((b, t, _)) => err < *b || (err == *b && target < *t),
                };
                if err <= tol && better {
                    best = Some((err, target, format!("{}x{}", e.label, m)));
                }
            }
        }
        if let Some((err, _, label)) = best {
            f.classification = Classification::Harmonic;
            f.matched_label = Some(label);
            f.match_error_rel = Some(err);
            continue;
        }
        let neighbor = qubit_freqs
            .iter()
            .enumerate()
            .map(|(i, q)| (rel_error(freq, q.rad_per_s()), q.rad_per_s(), i))
            .filter(|(err, _, _)| *err <= tol)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        if let Some((err, _, i)) = neighbor {
            f.classification = Classification::Neighbor;
            f.matched_label = Some(format!("qubit{i}"));
            f.match_error_rel = Some(err);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Occupancy {
    /// Positive residual photon number at zero power.
    Thermal {
        n_bar: f64,
        t0_kelvin: f64,
        t0_err_kelvin: f64,
    },
    /// Intercept not above zero; only an upper bound is available.
    ConsistentWithZero {
        n_bar_upper: f64,
        t0_upper_kelvin: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonCalibration {
    pub slope: f64,
    pub slope_err: f64,
    pub intercept: f64,
    pub intercept_err: f64,
    pub r_squared: f64,
    pub occupancy: Occupancy,
    /// Intercept below zero by more than one standard error.
    pub calibration_suspect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub freq_bare_hz: f64,
    pub kappa_hz: f64,
    pub chi_hz: f64,
    pub q_factor: f64,
    pub q_factor_err: f64,
    pub n_bar_on_resonance: f64,
    pub photon_calibration: Option<PhotonCalibration>,
}

/// Quality factor with propagated uncertainty and, given photon number
/// against power, the zero-power occupancy and its temperature.
pub fn mode_report(fit: &ModeFit, power_data: Option<&[PowerPoint]>) -> Result<ModeReport> {
    let photon_calibration = match power_data {
        Some(points) => Some(photon_calibration(points, fit.params.omega_bare)?),
        None => None,
    };
    Ok(ModeReport {
        freq_bare_hz: fit.params.omega_bare.hz(),
        kappa_hz: fit.params.kappa.hz(),
        chi_hz: fit.params.chi.hz(),
        q_factor: fit.q_factor,
        q_factor_err: fit.q_factor_err,
        n_bar_on_resonance: fit.n_bar_on_resonance,
        photon_calibration,
    })
}

/// Linear regression of n̄ against power and T0 from the intercept.
pub fn photon_calibration(
    points: &[PowerPoint],
    omega: AngularFrequency,
) -> Result<PhotonCalibration> {
    let power: Vec<f64> = points.iter().map(|p| p.power).collect();
    let n_bar: Vec<f64> = points.iter().map(|p| p.n_bar).collect();
    let line = linear_regression(&power, &n_bar)?;
    let scale = n_bar.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-12 * scale;
    let intercept = line.intercept;
    let se = line.intercept_se;

    let occupancy = if intercept > floor {
        let t0 = photons_to_temperature(intercept, omega)?;
        let a = HBAR * omega.rad_per_s() / K_B;
        let l = (1.0 / intercept).ln_1p();
        let dt_dn = a / (l * l) / (intercept * (intercept + 1.0));
        Occupancy::Thermal {
            n_bar: intercept,
            t0_kelvin: t0,
            t0_err_kelvin: dt_dn * se,
        }
    } else {
        let upper = intercept.max(0.0) + se;
        let t0_upper = if upper > 0.0 {
            photons_to_temperature(upper, omega)?
        } else {
            0.0
        };
        Occupancy::ConsistentWithZero {
            n_bar_upper: upper,
            t0_upper_kelvin: t0_upper,
        }
    };
    Ok(PhotonCalibration {
        slope: line.slope,
        slope_err: line.slope_se,
        intercept,
        intercept_err: se,
        r_squared: line.r_squared,
        occupancy,
        calibration_suspect: intercept < -se.max(floor),
    })
}
