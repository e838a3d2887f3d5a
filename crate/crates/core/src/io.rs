//! File formats: sweep/trace/oracle/power CSV, run configuration, fit and
//! catalog JSON. Frequencies in files are plain Hz.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dephasing::{Environment, Mode, QubitBaseline};
use crate::detect::{
    CatalogEntry, Classification, DetectedFeature, ModeCatalog, Origin, DEFAULT_REL_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::fit::{FitResult, ModeFit, ModeFitParams, Termination, PARAM_NAMES};
use crate::lindblad::OracleSample;
use crate::sweep::{Generation, NoiseModel, PowerPoint, SweepRecord, Trace, TraceKind};
use crate::units::AngularFrequency;

fn write_rows<W: Write, T: Serialize>(
    writer: W,
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(reader: R, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Parse(format!(
            "expected CSV header {:?}, found {:?}",
            header.join(","),
            found.join(",")
        )));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Parse(format!("row {}: {e}", i + 2))))
        .collect()
}

/// Serializable rows as CSV under `header`, which is written even when
/// there are no rows.
pub fn csv_bytes<T: Serialize>(
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_rows(&mut buf, header, rows)?;
    Ok(buf)
}

#[derive(Serialize, Deserialize)]
struct SweepRow {
    drive_freq_hz: f64,
    t2_s: f64,
    t2_err_s: f64,
    gamma2_per_s: f64,
}

pub const SWEEP_HEADER: [&str; 4] = ["drive_freq_hz", "t2_s", "t2_err_s", "gamma2_per_s"];

pub fn write_sweep_csv<W: Write>(writer: W, records: &[SweepRecord]) -> Result<()> {
    write_rows(
        writer,
        &SWEEP_HEADER,
        records.iter().map(|r| SweepRow {
            drive_freq_hz: r.drive_freq.hz(),
            t2_s: r.t2,
            t2_err_s: r.t2_err,
            gamma2_per_s: r.gamma2,
        }),
    )
}

pub fn sweep_csv_bytes(records: &[SweepRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, records)?;
    Ok(buf)
}

pub fn read_sweep_csv<R: Read>(reader: R) -> Result<Vec<SweepRecord>> {
    let rows: Vec<SweepRow> = read_rows(reader, &SWEEP_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| SweepRecord {
            drive_freq: AngularFrequency::from_hz(r.drive_freq_hz),
            t2: r.t2_s,
            t2_err: r.t2_err_s,
            gamma2: r.gamma2_per_s,
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    delay_s: f64,
    signal: f64,
}

pub const TRACE_HEADER: [&str; 2] = ["delay_s", "signal"];

pub fn trace_csv_bytes(trace: &Trace) -> Result<Vec<u8>> {
    csv_bytes(
        &TRACE_HEADER,
        trace
            .delays
            .iter()
            .zip(&trace.signal)
            .map(|(&delay_s, &signal)| TraceRow { delay_s, signal }),
    )
}

/// Reads `delay_s,signal`; the trace kind is not stored in the file.
pub fn read_trace_csv<R: Read>(
    reader: R,
    kind: TraceKind,
    ramsey_detuning: Option<AngularFrequency>,
) -> Result<Trace> {
    let rows: Vec<TraceRow> = read_rows(reader, &TRACE_HEADER)?;
    Ok(Trace {
        delays: rows.iter().map(|r| r.delay_s).collect(),
        signal: rows.iter().map(|r| r.signal).collect(),
        kind,
        ramsey_detuning,
    })
}

#[derive(Serialize, Deserialize)]
struct OracleRow {
    t_s: f64,
    rho01_abs: f64,
    rho01_phase_rad: f64,
    n_photon: f64,
}

pub const ORACLE_HEADER: [&str; 4] = ["t_s", "rho01_abs", "rho01_phase_rad", "n_photon"];

pub fn oracle_csv_bytes(samples: &[OracleSample]) -> Result<Vec<u8>> {
    csv_bytes(
        &ORACLE_HEADER,
        samples.iter().map(|s| OracleRow {
            t_s: s.t,
            rho01_abs: s.rho01_abs,
            rho01_phase_rad: s.rho01_phase,
            n_photon: s.photon_number,
        }),
    )
}

pub fn read_oracle_csv<R: Read>(reader: R) -> Result<Vec<OracleSample>> {
    let rows: Vec<OracleRow> = read_rows(reader, &ORACLE_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| OracleSample {
            t: r.t_s,
            rho01_abs: r.rho01_abs,
            rho01_phase: r.rho01_phase_rad,
            photon_number: r.n_photon,
        })
        .collect())
}

pub const POWER_HEADER: [&str; 2] = ["power", "n_bar"];

pub fn power_csv_bytes(points: &[PowerPoint]) -> Result<Vec<u8>> {
    csv_bytes(&POWER_HEADER, points)
}

pub fn read_power_csv<R: Read>(reader: R) -> Result<Vec<PowerPoint>> {
    read_rows(reader, &POWER_HEADER)
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn config_error(e: serde_json::Error) -> Error {
    Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
}

// ---------------------------------------------------------------------------
// Run configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitSpec {
    pub freq_hz: f64,
    pub t2_s: f64,
    pub t1_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub label: String,
    pub freq_hz: f64,
    pub kappa_hz: f64,
    pub chi_hz: f64,
}

/// Either `epsilon_hz` (ε/2π) or `power` with `conversion_hz2`, where
/// (ε/2π)² = conversion_hz2 · power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversion_hz2: Option<f64>,
}

/// Either `start_hz`/`stop_hz`/`step_hz` or an explicit `points_hz` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_hz: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub readout_sigma: f64,
    #[serde(default)]
    pub t2_jitter_rel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    #[default]
    Direct,
    ViaTraces,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata_json: Option<String>,
}

fn default_w() -> f64 {
    0.5
}

fn default_trace_points() -> usize {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub qubit: QubitSpec,
    #[serde(default)]
    pub modes: Vec<ModeSpec>,
    pub drive: DriveSpec,
    #[serde(default = "default_w")]
    pub asymmetry_w: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub generation: GenerationMode,
    #[serde(default = "default_trace_points")]
    pub trace_points: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

const MAX_GRID_POINTS: usize = 10_000_000;

impl RunConfig {
    /// Parses and validates; errors carry line/column or the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(config_error)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::Config(format!("{name}: {e}"));
        self.environment().map_err(|e| field("qubit/modes", e))?;
        self.epsilon_rf().map_err(|e| field("drive", e))?;
        self.grid().map_err(|e| field("grid", e))?;
        if !(0.0..=1.0).contains(&self.asymmetry_w) {
            return Err(Error::Config(format!(
                "asymmetry_w: must lie in [0, 1], got {}",
                self.asymmetry_w
            )));
        }
        self.noise_model(self.seed)
            .validate()
            .map_err(|e| field("noise", e))?;
        if self.generation == GenerationMode::ViaTraces && self.trace_points < 8 {
            return Err(Error::Config("trace_points: at least 8 required".into()));
        }
        Ok(())
    }

    pub fn environment(&self) -> Result<Environment> {
        let q = &self.qubit;
        if !(q.t2_s > 0.0) {
            return Err(Error::Domain("qubit.t2_s must be positive".into()));
        }
        let qubit = QubitBaseline {
            omega_q: AngularFrequency::from_hz(q.freq_hz),
            gamma2_intrinsic: 1.0 / q.t2_s,
            t1: q.t1_s,
        };
        let modes = self
            .modes
            .iter()
            .map(|m| {
                Mode::new(
                    m.label.clone(),
                    AngularFrequency::from_hz(m.freq_hz),
                    AngularFrequency::from_hz(m.kappa_hz),
                    AngularFrequency::from_hz(m.chi_hz),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let env = Environment { qubit, modes };
        env.validate()?;
        Ok(env)
    }

    pub fn epsilon_rf(&self) -> Result<AngularFrequency> {
        let d = &self.drive;
        let hz = match (d.epsilon_hz, d.power, d.conversion_hz2) {
            (Some(eps), None, None) => eps,
            (None, Some(p), Some(c)) => {
                if !(p >= 0.0 && c > 0.0) {
                    return Err(Error::Domain(
                        "power must be >= 0 and conversion_hz2 > 0".into(),
                    ));
                }
                (c * p).sqrt()
            }
            _ => {
                return Err(Error::Domain(
                    "give either epsilon_hz, or both power and conversion_hz2".into(),
                ))
            }
        };
        if !(hz >= 0.0 && hz.is_finite()) {
            return Err(Error::Domain(format!(
                "drive amplitude must be finite and >= 0, got {hz}"
            )));
        }
        Ok(AngularFrequency::from_hz(hz))
    }

    /// Grid points in Hz; point `i` of a range is `start + i·step`.
    pub fn grid_hz(&self) -> Result<Vec<f64>> {
        let g = &self.grid;
        let points = match (g.start_hz, g.stop_hz, g.step_hz, &g.points_hz) {
            (Some(start), Some(stop), Some(step), None) => {
                if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
                    return Err(Error::Domain(
                        "need finite start_hz <= stop_hz and step_hz > 0".into(),
                    ));
                }
                let n = ((stop - start) / step).round() + 1.0;
                if n > MAX_GRID_POINTS as f64 {
                    return Err(Error::Domain(format!(
                        "grid has {n} points, limit {MAX_GRID_POINTS}"
                    )));
                }
                (0..n as usize).map(|i| start + i as f64 * step).collect()
            }
            (None, None, None, Some(points)) => points.clone(),
            _ => {
                return Err(Error::Domain(
                    "give either start_hz, stop_hz and step_hz, or points_hz".into(),
                ))
            }
        };
        if points.is_empty() {
            return Err(Error::Domain("grid is empty".into()));
        }
        if points.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Domain(
                "grid frequencies must be finite and positive".into(),
            ));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("grid must be strictly increasing".into()));
        }
        Ok(points)
    }

    pub fn grid(&self) -> Result<Vec<AngularFrequency>> {
        Ok(self
            .grid_hz()?
            .into_iter()
            .map(AngularFrequency::from_hz)
            .collect())
    }

    pub fn noise_model(&self, seed: u64) -> NoiseModel {
        NoiseModel {
            readout_sigma: self.noise.readout_sigma,
            t2_jitter_rel: self.noise.t2_jitter_rel,
            seed,
        }
    }

    pub fn generation(&self) -> Generation {
        match self.generation {
            GenerationMode::Direct => Generation::Direct,
            GenerationMode::ViaTraces => Generation::ViaTraces {
                points: self.trace_points,
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Fit JSON

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedJson {
    pub q_factor: f64,
    pub q_factor_err: f64,
    pub n_bar_on_resonance: f64,
}

/// Serialized form of a single-mode fit. Frequencies are Hz, covariance is
/// row-major in `param_order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitJson {
    pub params: BTreeMap<String, f64>,
    pub std_errors: BTreeMap<String, f64>,
    pub param_order: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    pub reduced_chi2: f64,
    pub converged: bool,
    pub iterations: usize,
    pub damping_increases: usize,
    pub termination: Termination,
    pub final_residual_norm: f64,
    pub derived: DerivedJson,
    pub guess: BTreeMap<String, f64>,
    pub weighted: bool,
    pub chi_sign_convention: String,
    pub at_bound: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_hz: Option<[f64; 2]>,
}

fn named(values: &[f64]) -> BTreeMap<String, f64> {
    PARAM_NAMES
        .iter()
        .map(|n| n.to_string())
        .zip(values.iter().copied())
        .collect()
}

fn unnamed(map: &BTreeMap<String, f64>, what: &str) -> Result<[f64; 6]> {
    let mut out = [0.0; 6];
    for (slot, name) in out.iter_mut().zip(PARAM_NAMES) {
        *slot = *map
            .get(name)
            .ok_or_else(|| Error::Parse(format!("{what} is missing {name:?}")))?;
    }
    if let Some(extra) = map.keys().find(|k| !PARAM_NAMES.contains(&k.as_str())) {
        return Err(Error::Parse(format!(
            "{what} has unknown parameter {extra:?}"
        )));
    }
    Ok(out)
}

impl FitJson {
    pub fn from_fit(fit: &ModeFit, window_hz: Option<[f64; 2]>) -> Self {
        let r = &fit.result;
        FitJson {
            params: named(&fit.params.to_vector()),
            std_errors: named(r.std_errors.as_slice()),
            param_order: PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
            covariance: (0..r.covariance.nrows())
                .map(|i| r.covariance.row(i).iter().copied().collect())
                .collect(),
            reduced_chi2: r.reduced_chi2,
            converged: r.converged,
            iterations: r.iterations,
            damping_increases: r.damping_increases,
            termination: r.termination,
            final_residual_norm: r.final_residual_norm,
            derived: DerivedJson {
                q_factor: fit.q_factor,
                q_factor_err: fit.q_factor_err,
                n_bar_on_resonance: fit.n_bar_on_resonance,
            },
            guess: named(&fit.guess.to_vector()),
            weighted: fit.weighted,
            chi_sign_convention: fit.chi_sign_convention.clone(),
            at_bound: fit.at_bound.clone(),
            window_hz,
        }
    }

    /// Rebuilds the fit. The per-step cost history is not stored.
    pub fn to_fit(&self) -> Result<ModeFit> {
        let params = unnamed(&self.params, "params")?;
        let std_errors = unnamed(&self.std_errors, "std_errors")?;
        let guess = unnamed(&self.guess, "guess")?;
        if self.param_order.iter().map(String::as_str).ne(PARAM_NAMES) {
            return Err(Error::Parse(format!("param_order must be {PARAM_NAMES:?}")));
        }
        if self.covariance.len() != 6 || self.covariance.iter().any(|row| row.len() != 6) {
            return Err(Error::Parse("covariance must be 6x6".into()));
        }
        let covariance = DMatrix::from_fn(6, 6, |i, j| self.covariance[i][j]);
        let at_bound = PARAM_NAMES
            .iter()
            .map(|n| self.at_bound.iter().any(|b| b == n))
            .collect();
        Ok(ModeFit {
            params: ModeFitParams::from_vector(&params),
            result: FitResult {
                params: DVector::from_row_slice(&params),
                covariance,
                std_errors: DVector::from_row_slice(&std_errors),
                reduced_chi2: self.reduced_chi2,
                iterations: self.iterations,
                damping_increases: self.damping_increases,
                converged: self.converged,
                termination: self.termination,
                final_residual_norm: self.final_residual_norm,
                cost_history: Vec::new(),
                at_bound,
            },
            guess: ModeFitParams::from_vector(&guess),
            q_factor: self.derived.q_factor,
            q_factor_err: self.derived.q_factor_err,
            n_bar_on_resonance: self.derived.n_bar_on_resonance,
            weighted: self.weighted,
            chi_sign_convention: self.chi_sign_convention.clone(),
            at_bound: self.at_bound.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("fit JSON: {e}")))
    }
}

/// A starting point for a fit: either a bare named-parameter object or any
/// object with a `params` member (such as a previous fit).
pub fn parse_guess(text: &str) -> Result<ModeFitParams> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum GuessFile {
        Wrapped { params: BTreeMap<String, f64> },
        Bare(BTreeMap<String, f64>),
    }
    let file: GuessFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("guess JSON: {e}")))?;
    let map = match file {
        GuessFile::Wrapped { params } => params,
        GuessFile::Bare(map) => map,
    };
    Ok(ModeFitParams::from_vector(&unnamed(&map, "guess")?))
}

// ---------------------------------------------------------------------------
// Catalog and detection JSON

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntryJson {
    pub label: String,
    pub freq_hz: f64,
    pub origin: Origin,
}

fn default_tolerance() -> f64 {
    DEFAULT_REL_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogJson {
    #[serde(default = "default_tolerance")]
    pub rel_tolerance: f64,
    pub entries: Vec<CatalogEntryJson>,
}

impl CatalogJson {
    pub fn to_catalog(&self) -> Result<ModeCatalog> {
        let catalog = ModeCatalog {
            rel_tolerance: self.rel_tolerance,
            entries: self
                .entries
                .iter()
                .map(|e| CatalogEntry {
                    label: e.label.clone(),
                    frequency: AngularFrequency::from_hz(e.freq_hz),
                    origin: e.origin,
                })
                .collect(),
        };
        catalog
            .validate()
            .map_err(|e| Error::Config(format!("catalog: {e}")))?;
        Ok(catalog)
    }

    pub fn from_catalog(catalog: &ModeCatalog) -> Self {
        CatalogJson {
            rel_tolerance: catalog.rel_tolerance,
            entries: catalog
                .entries
                .iter()
                .map(|e| CatalogEntryJson {
                    label: e.label.clone(),
                    freq_hz: e.frequency.hz(),
                    origin: e.origin,
                })
                .collect(),
        }
    }
}

pub fn parse_catalog(text: &str) -> Result<ModeCatalog> {
    let file: CatalogJson = serde_json::from_str(text).map_err(config_error)?;
    file.to_catalog()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureJson {
    pub center_freq_hz: f64,
    pub depth_per_s: f64,
    pub prominence_per_s: f64,
    pub width_hz: f64,
    pub classification: Classification,
    pub matched_label: Option<String>,
    pub match_error_rel: Option<f64>,
}

impl From<&DetectedFeature> for FeatureJson {
    fn from(f: &DetectedFeature) -> Self {
        FeatureJson {
            center_freq_hz: f.center_freq.hz(),
            depth_per_s: f.depth,
            prominence_per_s: f.prominence,
            width_hz: f.width.hz(),
            classification: f.classification,
            matched_label: f.matched_label.clone(),
            match_error_rel: f.match_error_rel,
        }
    }
}

impl From<&FeatureJson> for DetectedFeature {
    fn from(f: &FeatureJson) -> Self {
        DetectedFeature {
            center_freq: AngularFrequency::from_hz(f.center_freq_hz),
            depth: f.depth_per_s,
            prominence: f.prominence_per_s,
            width: AngularFrequency::from_hz(f.width_hz),
            classification: f.classification,
            matched_label: f.matched_label.clone(),
            match_error_rel: f.match_error_rel,
        }
    }
}

/// (ε/2π)² per unit power, from the angular conversion used by the core.
pub fn conversion_hz2(conversion_rad2: f64) -> f64 {
    conversion_rad2 / (4.0 * PI * PI)
}
