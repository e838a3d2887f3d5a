//! Synthetic coherence-spectroscopy data: echo and Ramsey traces under a CW
//! tone, T2 extraction from traces, and full frequency sweeps.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dephasing::{
    photon_numbers, power_to_amplitude, stark_shift, total_dephasing_rate, Drive, Environment, Mode,
};
use crate::error::{Error, Result};
use crate::fit::{lm_minimize, FitProblem};
use crate::units::AngularFrequency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Echo,
    Ramsey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Free-evolution delays, seconds, strictly increasing.
    pub delays: Vec<f64>,
    pub signal: Vec<f64>,
    pub kind: TraceKind,
    /// Deliberate fringe detuning; Ramsey traces only.
    pub ramsey_detuning: Option<AngularFrequency>,
}

/// One point of a coherence-spectroscopy sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub drive_freq: AngularFrequency,
    pub t2: f64,
    pub t2_err: f64,
    pub gamma2: f64,
}

impl SweepRecord {
    pub fn from_t2(drive_freq: AngularFrequency, t2: f64, t2_err: f64) -> Self {
        Self {
            drive_freq,
            t2,
            t2_err,
            gamma2: 1.0 / t2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Additive Gaussian noise per trace point.
    pub readout_sigma: f64,
    /// Relative Gaussian scatter applied to T2 in direct sweeps.
    pub t2_jitter_rel: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.readout_sigma >= 0.0 && self.readout_sigma.is_finite()) {
            return Err(Error::Domain("readout_sigma must be non-negative".into()));
        }
        if !(self.t2_jitter_rel >= 0.0 && self.t2_jitter_rel.is_finite()) {
            return Err(Error::Domain("t2_jitter_rel must be non-negative".into()));
        }
        Ok(())
    }

    /// Random stream for sweep point `index`; independent of evaluation order.
    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

fn check_delays(delays: &[f64]) -> Result<()> {
    if delays.is_empty() {
        return Err(Error::Domain("delay list is empty".into()));
    }
    if delays.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::Domain(
            "delays must be finite and non-negative".into(),
        ));
    }
    if delays.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("delays must be strictly increasing".into()));
    }
    Ok(())
}

fn add_readout_noise(signal: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma is finite");
        for s in signal.iter_mut() {
            *s += normal.sample(rng);
        }
    }
}

fn echo_trace(gamma2: f64, delays: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Trace {
    let mut signal: Vec<f64> = delays.iter().map(|&t| (-gamma2 * t).exp()).collect();
    add_readout_noise(&mut signal, sigma, rng);
    Trace {
        delays: delays.to_vec(),
        signal,
        kind: TraceKind::Echo,
        ramsey_detuning: None,
    }
}

/// Spin-echo trace: the echo refocuses the static Stark shift, leaving
/// exp(−Γ2·τ).
pub fn simulate_echo_trace(
    env: &Environment,
    drive: &Drive,
    asymmetry_w: f64,
    delays: &[f64],
    noise: &NoiseModel,
) -> Result<Trace> {
    check_delays(delays)?;
    noise.validate()?;
    let gamma2 = total_dephasing_rate(env, drive, asymmetry_w)?;
    Ok(echo_trace(
        gamma2,
        delays,
        noise.readout_sigma,
        &mut noise.rng(0),
    ))
}

/// Ramsey trace: exp(−Γ2·τ)·cos((δ + Σ Stark shifts)·τ).
pub fn simulate_ramsey_trace(
    env: &Environment,
    drive: &Drive,
    asymmetry_w: f64,
    delays: &[f64],
    fringe_detuning: AngularFrequency,
    noise: &NoiseModel,
) -> Result<Trace> {
    check_delays(delays)?;
    noise.validate()?;
    ramsey_trace(
        env,
        drive,
        asymmetry_w,
        delays,
        fringe_detuning,
        noise.readout_sigma,
        &mut noise.rng(0),
    )
}

fn ramsey_trace(
    env: &Environment,
    drive: &Drive,
    asymmetry_w: f64,
    delays: &[f64],
    fringe_detuning: AngularFrequency,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Trace> {
    let gamma2 = total_dephasing_rate(env, drive, asymmetry_w)?;
    let mut shift = fringe_detuning.rad_per_s();
    for mode in &env.modes {
        shift += stark_shift(mode, drive)?.rad_per_s();
    }
    let mut signal: Vec<f64> = delays
        .iter()
        .map(|&t| (-gamma2 * t).exp() * (shift * t).cos())
        .collect();
    add_readout_noise(&mut signal, sigma, rng);
    Ok(Trace {
        delays: delays.to_vec(),
        signal,
        kind: TraceKind::Ramsey,
        ramsey_detuning: Some(fringe_detuning),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2Estimate {
    /// Seconds. A lower bound when `unresolved` is set.
    pub t2: f64,
    pub t2_err: f64,
    /// Ramsey fringe angular frequency (always reported as |ω|).
    pub fringe_freq: Option<AngularFrequency>,
    /// The decay is too slow for the delay span: T2 > 10 × the last delay.
    pub unresolved: bool,
}

const UNRESOLVED_FACTOR: f64 = 10.0;

/// Least-squares amplitude and offset for a fixed basis, returning the
/// coefficients and the residual sum of squares.
fn linear_lsq(columns: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let a = DMatrix::from_fn(y.len(), columns.len(), |r, c| columns[c][r]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&b, 1e-12).ok()?;
    let rss = (&a * &coef - &b).norm_squared();
    Some((coef.iter().cloned().collect(), rss))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
}

/// Fits T2 (and the fringe frequency for Ramsey traces) with the
/// Levenberg–Marquardt minimiser.
///
/// Echo: `A·exp(−τ/T2) + B`. Ramsey: `A·exp(−τ/T2)·cos(ωτ + φ) + B`.
pub fn extract_t2(trace: &Trace) -> Result<T2Estimate> {
    if trace.delays.len() != trace.signal.len() {
        return Err(Error::Domain("delays and signal differ in length".into()));
    }
    if trace.delays.len() < 8 {
        return Err(Error::Domain(format!(
            "T2 extraction needs at least 8 points, got {}",
            trace.delays.len()
        )));
    }
    check_delays(&trace.delays)?;
    let t_max = *trace.delays.last().unwrap();
    if t_max <= 0.0 {
        return Err(Error::Domain("delay span is zero".into()));
    }
    // Work in s = τ / τ_max so the decay parameter k = τ_max / T2 is O(1).
    let s: Vec<f64> = trace.delays.iter().map(|t| t / t_max).collect();
    let y = &trace.signal;

    let (params, std_errors, k_index, fringe_index) = match trace.kind {
        TraceKind::Echo => fit_echo(&s, y)?,
        TraceKind::Ramsey => fit_ramsey(&s, y)?,
    };
    let k = params[k_index];
    let k_err = std_errors[k_index];
    let fringe_freq =
        fringe_index.map(|i| AngularFrequency::from_rad_per_s(params[i].abs() / t_max));
    if k < 1.0 / UNRESOLVED_FACTOR {
        return Ok(T2Estimate {
            t2: UNRESOLVED_FACTOR * t_max,
            t2_err: f64::INFINITY,
            fringe_freq,
            unresolved: true,
        });
    }
    Ok(T2Estimate {
        t2: t_max / k,
        t2_err: t_max * k_err / (k * k),
        fringe_freq,
        unresolved: false,
    })
}

type DecayFit = (DVector<f64>, DVector<f64>, usize, Option<usize>);

fn run_decay_fit<F>(problem: FitProblem<F>) -> Result<(DVector<f64>, DVector<f64>)>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    let fit = lm_minimize(&problem)?;
    if !fit.converged {
        return Err(Error::Extraction(format!(
            "decay fit did not converge (final residual norm {:.6e})",
            fit.final_residual_norm
        )));
    }
    Ok((fit.params, fit.std_errors))
}

fn fit_echo(s: &[f64], y: &[f64]) -> Result<DecayFit> {
    let ones = vec![1.0; s.len()];
    let mut best: Option<(f64, [f64; 3])> = None;
    for k in std::iter::once(0.0).chain(log_grid(1e-3, 1e3, 241)) {
        let decay: Vec<f64> = s.iter().map(|v| (-k * v).exp()).collect();
        if let Some((c, rss)) = linear_lsq(&[decay, ones.clone()], y) {
            if best.is_none_or(|(b, _)| rss < b) {
                best = Some((rss, [c[0], k, c[1]]));
            }
        }
    }
    let (_, start) =
        best.ok_or_else(|| Error::Extraction("no starting point for echo fit".into()))?;
    let (s_owned, y_owned) = (s.to_vec(), y.to_vec());
    let residual = move |p: &DVector<f64>| {
        DVector::from_iterator(
            s_owned.len(),
            s_owned
                .iter()
                .zip(&y_owned)
                .map(|(&t, &v)| p[0] * (-p[1] * t).exp() + p[2] - v),
        )
    };
    let mut problem = FitProblem::new(residual, DVector::from_row_slice(&start)).with_bounds(
        DVector::from_vec(vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY]),
        DVector::from_vec(vec![f64::INFINITY, 1e4, f64::INFINITY]),
    );
    problem.scale_floor = DVector::from_vec(vec![1.0, 1.0, 1.0]);
    let (params, errs) = run_decay_fit(problem)?;
    Ok((params, errs, 1, None))
}

fn fit_ramsey(s: &[f64], y: &[f64]) -> Result<DecayFit> {
    let n = s.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    // Periodogram over ω up to the mean-spacing Nyquist limit.
    let nyquist = std::f64::consts::PI * (n - 1) as f64;
    let candidates = 8 * n;
    let mut omega0 = 0.0;
    let mut best_power = f64::NEG_INFINITY;
    for i in 0..=candidates {
        let w = nyquist * i as f64 / candidates as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (&t, &v) in s.iter().zip(y) {
            re += (v - mean) * (w * t).cos();
            im += (v - mean) * (w * t).sin();
        }
        let power = re * re + im * im;
        if power > best_power {
            best_power = power;
            omega0 = w;
        }
    }

    let ones = vec![1.0; n];
    let mut best: Option<(f64, [f64; 5])> = None;
    for k in std::iter::once(0.0).chain(log_grid(1e-3, 1e3, 241)) {
        let env: Vec<f64> = s.iter().map(|v| (-k * v).exp()).collect();
        let c: Vec<f64> = s
            .iter()
            .zip(&env)
            .map(|(t, e)| e * (omega0 * t).cos())
            .collect();
        let sn: Vec<f64> = s
            .iter()
            .zip(&env)
            .map(|(t, e)| e * (omega0 * t).sin())
            .collect();
        if let Some((coef, rss)) = linear_lsq(&[c, sn, ones.clone()], y) {
            if best.is_none_or(|(b, _)| rss < b) {
                let amp = coef[0].hypot(coef[1]);
                let phase = (-coef[1]).atan2(coef[0]);
                best = Some((rss, [amp, k, omega0, phase, coef[2]]));
            }
        }
    }
    let (_, start) =
        best.ok_or_else(|| Error::Extraction("no starting point for Ramsey fit".into()))?;
    let (s_owned, y_owned) = (s.to_vec(), y.to_vec());
    let residual = move |p: &DVector<f64>| {
        DVector::from_iterator(
            s_owned.len(),
            s_owned
                .iter()
                .zip(&y_owned)
                .map(|(&t, &v)| p[0] * (-p[1] * t).exp() * (p[2] * t + p[3]).cos() + p[4] - v),
        )
    };
    let mut problem = FitProblem::new(residual, DVector::from_row_slice(&start)).with_bounds(
        DVector::from_vec(vec![0.0, 0.0, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]),
        DVector::from_vec(vec![
            f64::INFINITY,
            1e4,
            2.0 * nyquist,
            f64::INFINITY,
            f64::INFINITY,
        ]),
    );
    problem.scale_floor = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 1.0]);
    let (params, errs) = run_decay_fit(problem)?;
    Ok((params, errs, 1, Some(2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generation {
    /// Analytic Γ2 with relative T2 jitter.
    Direct,
    /// Simulate an echo trace per point (delays 0..3·T2) and re-extract T2.
    ViaTraces { points: usize },
}

fn check_grid(freq_grid: &[AngularFrequency]) -> Result<()> {
    if freq_grid.is_empty() {
        return Err(Error::Domain("frequency grid is empty".into()));
    }
    if freq_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "frequency grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn sweep_point(
    env: &Environment,
    epsilon_rf: AngularFrequency,
    omega_d: AngularFrequency,
    asymmetry_w: f64,
    noise: &NoiseModel,
    generation: Generation,
    index: usize,
) -> Result<SweepRecord> {
    let drive = Drive::new(omega_d, epsilon_rf)?;
    let gamma2 = total_dephasing_rate(env, &drive, asymmetry_w)?;
    let mut rng = noise.rng(index as u64);
    match generation {
        Generation::Direct => {
            let t2_true = 1.0 / gamma2;
            if noise.t2_jitter_rel > 0.0 {
                let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
                let t2 = t2_true * (1.0 + noise.t2_jitter_rel * z).max(1e-3);
                Ok(SweepRecord::from_t2(omega_d, t2, noise.t2_jitter_rel * t2))
            } else {
                Ok(SweepRecord::from_t2(omega_d, t2_true, 0.0))
            }
        }
        Generation::ViaTraces { points } => {
            if points < 8 {
                return Err(Error::Domain(
                    "via_traces needs at least 8 delays per trace".into(),
                ));
            }
            let t2_true = 1.0 / gamma2;
            let delays: Vec<f64> = (0..points)
                .map(|i| 3.0 * t2_true * i as f64 / (points - 1) as f64)
                .collect();
            let trace = echo_trace(gamma2, &delays, noise.readout_sigma, &mut rng);
            let est = extract_t2(&trace)?;
            if est.unresolved {
                return Err(Error::Extraction(format!(
                    "T2 unresolved at {} Hz",
                    omega_d.hz()
                )));
            }
            Ok(SweepRecord::from_t2(omega_d, est.t2, est.t2_err))
        }
    }
}

/// Γ2 versus CW drive frequency. Points are independent and evaluated in
/// parallel; point `i` draws from random stream `i` of `noise.seed`, so the
/// output does not depend on scheduling.
pub fn generate_rate_sweep(
    env: &Environment,
    epsilon_rf: AngularFrequency,
    freq_grid: &[AngularFrequency],
    asymmetry_w: f64,
    noise: &NoiseModel,
    generation: Generation,
) -> Result<Vec<SweepRecord>> {
    env.validate()?;
    noise.validate()?;
    check_grid(freq_grid)?;
    freq_grid
        .par_iter()
        .enumerate()
        .map(|(i, &f)| sweep_point(env, epsilon_rf, f, asymmetry_w, noise, generation, i))
        .collect()
}

/// Sequential reference for [`generate_rate_sweep`].
pub fn generate_rate_sweep_sequential(
    env: &Environment,
    epsilon_rf: AngularFrequency,
    freq_grid: &[AngularFrequency],
    asymmetry_w: f64,
    noise: &NoiseModel,
    generation: Generation,
) -> Result<Vec<SweepRecord>> {
    env.validate()?;
    noise.validate()?;
    check_grid(freq_grid)?;
    freq_grid
        .iter()
        .enumerate()
        .map(|(i, &f)| sweep_point(env, epsilon_rf, f, asymmetry_w, noise, generation, i))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub power: f64,
    pub n_bar: f64,
}

/// Branch-averaged photon number against applied power at a fixed drive
/// frequency.
pub fn power_sweep(
    mode: &Mode,
    conversion: f64,
    power_grid: &[f64],
    drive_freq: AngularFrequency,
) -> Result<Vec<PowerPoint>> {
    power_sweep_with_offset(mode, conversion, power_grid, drive_freq, 0.0)
}

/// [`power_sweep`] plus a constant residual (thermal) photon population.
pub fn power_sweep_with_offset(
    mode: &Mode,
    conversion: f64,
    power_grid: &[f64],
    drive_freq: AngularFrequency,
    thermal_photons: f64,
) -> Result<Vec<PowerPoint>> {
    mode.validate()?;
    power_grid
        .iter()
        .map(|&power| {
            let drive = Drive::new(drive_freq, power_to_amplitude(power, conversion)?)?;
            let (p, m) = photon_numbers(mode, &drive)?;
            Ok(PowerPoint {
                power,
                n_bar: 0.5 * (p + m) + thermal_photons,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeRecord {
    pub drive_freq: AngularFrequency,
    pub fringe_freq: AngularFrequency,
    pub t2: f64,
}

/// Ramsey fringe frequency and T2* against CW drive frequency, each point
/// simulated as a trace and re-fitted. Point `i` uses random stream `i`.
pub fn ramsey_fringe_sweep(
    env: &Environment,
    epsilon_rf: AngularFrequency,
    freq_grid: &[AngularFrequency],
    asymmetry_w: f64,
    fringe_detuning: AngularFrequency,
    delays: &[f64],
    noise: &NoiseModel,
) -> Result<Vec<FringeRecord>> {
    env.validate()?;
    noise.validate()?;
    check_grid(freq_grid)?;
    check_delays(delays)?;
    freq_grid
        .par_iter()
        .enumerate()
        .map(|(i, &f)| {
            let drive = Drive::new(f, epsilon_rf)?;
            let mut rng = noise.rng(i as u64);
            let trace = ramsey_trace(
                env,
                &drive,
                asymmetry_w,
                delays,
                fringe_detuning,
                noise.readout_sigma,
                &mut rng,
            )?;
            let est = extract_t2(&trace)?;
            Ok(FringeRecord {
                drive_freq: f,
                fringe_freq: est.fringe_freq.unwrap_or_default(),
                t2: est.t2,
            })
        })
        .collect()
}
