use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use modescope_core::detect::{
    classify, default_min_prominence, mode_report, scan_features, ModeCatalog,
    BASELINE_WINDOW_FRACTION, DEFAULT_REL_TOLERANCE,
};
use modescope_core::fit::{
    fit_single_mode_with, ModeFitOptions, ModeFitParams, Weighting, PARAM_NAMES,
};
use modescope_core::io::{
    csv_bytes, oracle_csv_bytes, parse_catalog, parse_guess, read_power_csv, read_sweep_csv,
    sweep_csv_bytes, to_json_bytes, write_atomic, FeatureJson, FitJson, RunConfig,
};
use modescope_core::lindblad::{evolve_dispersive, extract_rate, OracleConfig};
use modescope_core::sweep::{generate_rate_sweep, SweepRecord};
use modescope_core::{
    measurement_dephasing_rate, photon_numbers, stark_shift, AngularFrequency, Drive, Error, Mode,
    Result,
};
use serde::Serialize;

pub const SEED_ENV: &str = "MODESCOPE_SEED";
const PLOT_POINTS: usize = 1001;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn read_sweep(path: &Path) -> Result<Vec<SweepRecord>> {
    read_sweep_csv(open(path)?).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// `<dir>/<stem><suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

fn resolve_seed(config_seed: u64) -> Result<(u64, &'static str)> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(|s| (s, "env"))
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok((config_seed, "config")),
    }
}

#[derive(Serialize)]
struct SimulateMeta<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    seed_source: &'static str,
    config: &'a RunConfig,
    epsilon_rf_hz: f64,
    points: usize,
    min_t2_s: f64,
    max_gamma2_per_s: f64,
}

pub fn simulate(config_path: &Path, out: Option<&Path>) -> Result<()> {
    let mut config = RunConfig::from_json(&read_text(config_path)?)?;
    let (seed, seed_source) = resolve_seed(config.seed)?;
    config.seed = seed;

    let outputs = config.output.clone().unwrap_or_default();
    let sweep_path = match (out, &outputs.sweep_csv) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => {
            return Err(Error::Config(
                "no --out given and config has no output.sweep_csv".into(),
            ))
        }
    };
    let meta_path = outputs
        .metadata_json
        .map(PathBuf::from)
        .unwrap_or_else(|| sibling(&sweep_path, ".meta.json"));

    let env = config.environment()?;
    let epsilon = config.epsilon_rf()?;
    let grid = config.grid()?;
    let records = generate_rate_sweep(
        &env,
        epsilon,
        &grid,
        config.asymmetry_w,
        &config.noise_model(seed),
        config.generation(),
    )?;

    let meta = SimulateMeta {
        tool: "modescope",
        version: env!("CARGO_PKG_VERSION"),
        seed,
        seed_source,
        config: &config,
        epsilon_rf_hz: epsilon.hz(),
        points: records.len(),
        min_t2_s: records.iter().map(|r| r.t2).fold(f64::INFINITY, f64::min),
        max_gamma2_per_s: records.iter().map(|r| r.gamma2).fold(0.0, f64::max),
    };
    write_atomic(&sweep_path, &sweep_csv_bytes(&records)?)?;
    write_json(&meta_path, &meta)
}

fn parse_window(text: &str) -> Result<[f64; 2]> {
    let bad = || {
        Error::Config(format!(
            "--window expects <f_lo_hz>:<f_hi_hz>, got {text:?}"
        ))
    };
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo < hi) {
        return Err(bad());
    }
    Ok([lo, hi])
}

#[derive(Serialize)]
struct FitFailure {
    status: &'static str,
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_residual_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    last_params: Option<std::collections::BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window_hz: Option<[f64; 2]>,
    points: usize,
}

pub fn fit(
    sweep_path: &Path,
    window: Option<&str>,
    guess_path: Option<&Path>,
    fixed_w: Option<f64>,
    unweighted: bool,
    out: &Path,
) -> Result<()> {
    let window = window.map(parse_window).transpose()?;
    let guess = match guess_path {
        Some(p) => Some(parse_guess(&read_text(p)?).map_err(|e| Error::Config(e.to_string()))?),
        None => None,
    };
    let mut sweep = read_sweep(sweep_path)?;
    if let Some([lo, hi]) = window {
        sweep.retain(|r| r.drive_freq.hz() >= lo && r.drive_freq.hz() <= hi);
    }
    let options = ModeFitOptions {
        fixed_asymmetry: fixed_w,
        weighting: if unweighted {
            Weighting::Unweighted
        } else {
            Weighting::Auto
        },
        ..ModeFitOptions::default()
    };

    match fit_single_mode_with(&sweep, guess.as_ref(), &options) {
        Ok(fit) => write_json(out, &FitJson::from_fit(&fit, window)),
        Err(err) => {
            let (kind, iterations, norm, last) = match &err {
                Error::NonConvergence(r) => (
                    "non_convergence",
                    Some(r.iterations),
                    Some(r.final_residual_norm),
                    Some(
                        PARAM_NAMES
                            .iter()
                            .zip(r.params.iter())
                            .map(|(n, v)| (n.to_string(), *v))
                            .collect(),
                    ),
                ),
                Error::NoFeature(_) => ("no_feature", None, None, None),
                Error::Io(_) => return Err(err),
                _ => ("invalid_input", None, None, None),
            };
            let diag = FitFailure {
                status: "failed",
                error: kind,
                message: err.to_string(),
                iterations,
                final_residual_norm: norm,
                last_params: last,
                window_hz: window,
                points: sweep.len(),
            };
            write_json(out, &diag)?;
            Err(err)
        }
    }
}

#[derive(Serialize)]
struct DetectSettings {
    min_prominence_per_s: f64,
    min_separation_hz: f64,
    baseline_window_fraction: f64,
    rel_tolerance: f64,
    qubit_freqs_hz: Vec<f64>,
}

#[derive(Serialize)]
struct DetectReport {
    settings: DetectSettings,
    features: Vec<FeatureJson>,
    unconfirmed: Vec<FeatureJson>,
}

pub fn detect(
    sweep_path: &Path,
    catalog_path: Option<&Path>,
    qubit_freq_hz: &[f64],
    min_prominence: Option<f64>,
    min_separation_hz: Option<f64>,
    out: &Path,
) -> Result<()> {
    let catalog = match catalog_path {
        Some(p) => parse_catalog(&read_text(p)?)?,
        None => ModeCatalog {
            entries: Vec::new(),
            rel_tolerance: DEFAULT_REL_TOLERANCE,
        },
    };
    let sweep = read_sweep(sweep_path)?;
    let min_prominence = match min_prominence {
        Some(p) => p,
        None => default_min_prominence(&sweep)?,
    };
    let min_separation_hz = match min_separation_hz {
        Some(s) => s,
        None if sweep.len() >= 2 => {
            let span = sweep[sweep.len() - 1].drive_freq.hz() - sweep[0].drive_freq.hz();
            10.0 * span / (sweep.len() - 1) as f64
        }
        None => 0.0,
    };
    let scan = scan_features(
        &sweep,
        min_prominence,
        AngularFrequency::from_hz(min_separation_hz),
    )?;
    let qubits: Vec<_> = qubit_freq_hz
        .iter()
        .map(|&f| AngularFrequency::from_hz(f))
        .collect();
    let features = classify(&scan.features, &catalog, &qubits)?;

    let report = DetectReport {
        settings: DetectSettings {
            min_prominence_per_s: min_prominence,
            min_separation_hz,
            baseline_window_fraction: BASELINE_WINDOW_FRACTION,
            rel_tolerance: catalog.rel_tolerance,
            qubit_freqs_hz: qubit_freq_hz.to_vec(),
        },
        features: features.iter().map(FeatureJson::from).collect(),
        unconfirmed: scan.unconfirmed.iter().map(FeatureJson::from).collect(),
    };
    write_json(out, &report)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleArgs {
    pub mode_freq_hz: f64,
    pub mode_kappa_hz: f64,
    pub mode_chi_hz: f64,
    pub epsilon_hz: f64,
    pub detuning_hz: f64,
    pub cutoff: usize,
    pub t_max_kappa: f64,
    pub dt_kappa: f64,
    pub samples: usize,
}

#[derive(Serialize)]
struct OracleComparison<'a> {
    parameters: &'a OracleArgs,
    analytic_gamma_per_s: f64,
    oracle_gamma_per_s: f64,
    rel_deviation: f64,
    analytic_stark_shift_rad_per_s: f64,
    oracle_phase_slope_rad_per_s: f64,
    analytic_mean_photons: f64,
    oracle_final_photons: f64,
    max_top_population: f64,
}

pub fn oracle(args: &OracleArgs, out: &Path) -> Result<()> {
    let mode = Mode::new(
        "oracle",
        AngularFrequency::from_hz(args.mode_freq_hz),
        AngularFrequency::from_hz(args.mode_kappa_hz),
        AngularFrequency::from_hz(args.mode_chi_hz),
    )?;
    let drive = Drive::new(
        mode.omega_bare + AngularFrequency::from_hz(args.detuning_hz),
        AngularFrequency::from_hz(args.epsilon_hz),
    )?;
    let kappa = mode.kappa.rad_per_s();
    let config = OracleConfig {
        fock_cutoff: args.cutoff,
        dt: args.dt_kappa / kappa,
        t_max: args.t_max_kappa / kappa,
        samples: args.samples,
        ..OracleConfig::for_mode(&mode)
    };
    let series = evolve_dispersive(&mode, &drive, &config)?;
    let rate = extract_rate(&series.samples, config.transient_fraction)?;
    let analytic = measurement_dephasing_rate(&mode, &drive, 0.5)?;
    let (n_plus, n_minus) = photon_numbers(&mode, &drive)?;

    let comparison = OracleComparison {
        parameters: args,
        analytic_gamma_per_s: analytic,
        oracle_gamma_per_s: rate.gamma,
        rel_deviation: if analytic != 0.0 {
            (rate.gamma - analytic).abs() / analytic
        } else {
            rate.gamma.abs()
        },
        analytic_stark_shift_rad_per_s: stark_shift(&mode, &drive)?.rad_per_s(),
        oracle_phase_slope_rad_per_s: rate.freq_shift,
        analytic_mean_photons: 0.5 * (n_plus + n_minus),
        oracle_final_photons: series.final_state.photon_number(),
        max_top_population: series.max_top_population,
    };
    write_atomic(out, &oracle_csv_bytes(&series.samples)?)?;
    write_json(&sibling(out, ".comparison.json"), &comparison)
}

#[derive(Serialize)]
struct PlotRow {
    kind: &'static str,
    drive_freq_hz: f64,
    gamma2_per_s: f64,
}

fn plot_window(params: &ModeFitParams, stored: Option<[f64; 2]>) -> [f64; 2] {
    stored.unwrap_or_else(|| {
        let half = 5.0 * (params.chi.hz().abs() + params.kappa.hz());
        [params.omega_bare.hz() - half, params.omega_bare.hz() + half]
    })
}

pub fn report(
    fit_path: &Path,
    power_path: Option<&Path>,
    sweep_path: Option<&Path>,
    out: &Path,
    plot: Option<&Path>,
) -> Result<()> {
    let fit_json = FitJson::from_json(&read_text(fit_path)?)?;
    let fit = fit_json.to_fit()?;
    if !fit.result.converged {
        return Err(Error::Config("report needs a converged fit".into()));
    }
    let power = match power_path {
        Some(p) => Some(read_power_csv(open(p)?)?),
        None => None,
    };
    let report = mode_report(&fit, power.as_deref())?;

    let [lo, hi] = plot_window(&fit.params, fit_json.window_hz);
    let mut rows: Vec<PlotRow> = (0..PLOT_POINTS)
        .map(|i| {
            let f = lo + (hi - lo) * i as f64 / (PLOT_POINTS - 1) as f64;
            PlotRow {
                kind: "model",
                drive_freq_hz: f,
                gamma2_per_s: fit.params.gamma2_at(AngularFrequency::from_hz(f)),
            }
        })
        .collect();
    if let Some(p) = sweep_path {
        rows.extend(read_sweep(p)?.iter().map(|r| PlotRow {
            kind: "data",
            drive_freq_hz: r.drive_freq.hz(),
            gamma2_per_s: r.gamma2,
        }));
    }
    let plot_bytes = csv_bytes(&["kind", "drive_freq_hz", "gamma2_per_s"], &rows)?;
    let plot_path = plot
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sibling(out, ".plot.csv"));
    write_json(out, &report)?;
    write_atomic(&plot_path, &plot_bytes)
}
