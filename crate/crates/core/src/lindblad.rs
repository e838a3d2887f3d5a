//! Brute-force master-equation oracle for the dispersive dephasing model.
//!
//! Integrates, in the frame rotating at the drive frequency,
//!
//! ```text
//! H = Δ a†a + χ a†a σz + ε (a + a†),     L = √κ a
//! ```
//!
//! on a truncated Fock space. The qubit enters only through σz, so the
//! density matrix splits into four cavity blocks ρ_ij = ⟨i|ρ|j⟩ that evolve
//! independently; ρ_10 = ρ_01† is never integrated.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::dephasing::{Detuned, Drive, Mode};
use crate::error::{Error, Result};
use crate::stats::linear_regression;

type C64 = Complex<f64>;

const TOP_LEVEL_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub fock_cutoff: usize,
    /// Integrator step, seconds.
    pub dt: f64,
    pub t_max: f64,
    pub transient_fraction: f64,
    /// Number of stored samples (approximately; every k-th step is kept).
    pub samples: usize,
}

impl OracleConfig {
    /// Cutoff 20, `dt = 0.005/κ`, `t_max = 200/κ`, 30 % transient.
    pub fn for_mode(mode: &Mode) -> Self {
        let kappa = mode.kappa.rad_per_s();
        Self {
            fock_cutoff: 20,
            dt: 0.005 / kappa,
            t_max: 200.0 / kappa,
            transient_fraction: 0.3,
            samples: 2000,
        }
    }

    pub fn validate(&self, kappa: f64) -> Result<()> {
        if self.fock_cutoff < 4 {
            return Err(Error::Domain(format!(
                "fock_cutoff must be at least 4, got {}",
                self.fock_cutoff
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.t_max > self.dt) {
            return Err(Error::Domain("need 0 < dt < t_max".into()));
        }
        if self.dt * kappa > 0.01 * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "dt·κ = {:.4} exceeds 0.01",
                self.dt * kappa
            )));
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return Err(Error::Domain(
                "transient_fraction must lie in [0, 1)".into(),
            ));
        }
        if self.samples < 2 {
            return Err(Error::Domain("need at least two stored samples".into()));
        }
        Ok(())
    }
}

/// Initial qubit state; the cavity always starts in vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QubitInit {
    /// (|0⟩ + |1⟩)/√2.
    #[default]
    Superposition,
    Ground,
    Excited,
}

/// Qubit⊗cavity density matrix stored as its three independent cavity
/// blocks. Qubit index 0 is the ground state (σz = −1).
#[derive(Debug, Clone)]
pub struct TruncatedState {
    dim_cavity: usize,
    rho00: Vec<C64>,
    rho11: Vec<C64>,
    rho01: Vec<C64>,
}

impl TruncatedState {
    fn new(dim: usize, init: QubitInit) -> Self {
        let zeros = vec![C64::new(0.0, 0.0); dim * dim];
        let (p0, p1, c) = match init {
            QubitInit::Superposition => (0.5, 0.5, 0.5),
            QubitInit::Ground => (1.0, 0.0, 0.0),
            QubitInit::Excited => (0.0, 1.0, 0.0),
        };
        let mut state = Self {
            dim_cavity: dim,
            rho00: zeros.clone(),
            rho11: zeros.clone(),
            rho01: zeros,
        };
        state.rho00[0] = C64::new(p0, 0.0);
        state.rho11[0] = C64::new(p1, 0.0);
        state.rho01[0] = C64::new(c, 0.0);
        state
    }

    pub fn dim_cavity(&self) -> usize {
        self.dim_cavity
    }

    /// Full (2N)×(2N) matrix in the qubit⊗cavity product basis.
    pub fn density_matrix(&self) -> DMatrix<C64> {
        let n = self.dim_cavity;
        DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let (qi, m) = (r / n, r % n);
            let (qj, k) = (c / n, c % n);
            match (qi, qj) {
                (0, 0) => self.rho00[m * n + k],
                (1, 1) => self.rho11[m * n + k],
                (0, 1) => self.rho01[m * n + k],
                _ => self.rho01[k * n + m].conj(),
            }
        })
    }

    pub fn trace(&self) -> f64 {
        let n = self.dim_cavity;
        (0..n)
            .map(|m| self.rho00[m * n + m].re + self.rho11[m * n + m].re)
            .sum()
    }

    /// tr(ρ_01): the qubit coherence.
    pub fn qubit_coherence(&self) -> C64 {
        let n = self.dim_cavity;
        (0..n).map(|m| self.rho01[m * n + m]).sum()
    }

    pub fn photon_number(&self) -> f64 {
        let n = self.dim_cavity;
        (0..n)
            .map(|m| m as f64 * (self.rho00[m * n + m].re + self.rho11[m * n + m].re))
            .sum()
    }

    pub fn top_level_population(&self) -> f64 {
        let n = self.dim_cavity;
        let top = (n - 1) * n + (n - 1);
        self.rho00[top].re + self.rho11[top].re
    }

    /// Largest deviation from Hermiticity over the diagonal blocks.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim_cavity;
        let mut worst = 0.0f64;
        for block in [&self.rho00, &self.rho11] {
            for m in 0..n {
                for k in 0..n {
                    worst = worst.max((block[m * n + k] - block[k * n + m].conj()).norm());
                }
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let rho = self.density_matrix();
        let eig = rho.symmetric_eigen();
        eig.eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Right-hand side of the block master equation for one block
/// ρ_ij with cavity detunings `hd_i` and `hd_j`.
struct Generator {
    n: usize,
    kappa: f64,
    epsilon: f64,
    sqrt: Vec<f64>,
}

impl Generator {
    fn apply(&self, x: &[C64], hd_i: f64, hd_j: f64, out: &mut [C64]) {
        let n = self.n;
        let eps = self.epsilon;
        let minus_i = C64::new(0.0, -1.0);
        for m in 0..n {
            for k in 0..n {
                let idx = m * n + k;
                let xv = x[idx];
                // H_i X
                let mut hx = xv * (hd_i * m as f64);
                if m + 1 < n {
                    hx += x[idx + n] * (eps * self.sqrt[m + 1]);
                }
                if m > 0 {
                    hx += x[idx - n] * (eps * self.sqrt[m]);
                }
                // X H_j
                let mut xh = xv * (hd_j * k as f64);
                if k + 1 < n {
                    xh += x[idx + 1] * (eps * self.sqrt[k + 1]);
                }
                if k > 0 {
                    xh += x[idx - 1] * (eps * self.sqrt[k]);
                }
                let mut dissip = -xv * (0.5 * (m + k) as f64);
                if m + 1 < n && k + 1 < n {
                    dissip += x[idx + n + 1] * (self.sqrt[m + 1] * self.sqrt[k + 1]);
                }
                out[idx] = minus_i * (hx - xh) + dissip * self.kappa;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSample {
    pub t: f64,
    pub rho01_abs: f64,
    /// Unwrapped phase of the qubit coherence, radians.
    pub rho01_phase: f64,
    pub photon_number: f64,
}

#[derive(Debug, Clone)]
pub struct OracleSeries {
    pub samples: Vec<OracleSample>,
    pub max_top_population: f64,
    pub final_state: TruncatedState,
}

/// Integrates the dispersive master equation from (|0⟩+|1⟩)/√2 ⊗ |vac⟩.
pub fn evolve_dispersive(
    mode: &Mode,
    drive: &Drive,
    config: &OracleConfig,
) -> Result<OracleSeries> {
    evolve_dispersive_with(mode, drive, config, QubitInit::Superposition, |_, _| {})
}

/// As [`evolve_dispersive`], with a chosen initial qubit state and a callback
/// invoked on every stored sample.
pub fn evolve_dispersive_with<F>(
    mode: &Mode,
    drive: &Drive,
    config: &OracleConfig,
    init: QubitInit,
    mut observe: F,
) -> Result<OracleSeries>
where
    F: FnMut(f64, &TruncatedState),
{
    mode.validate()?;
    drive.validate()?;
    let d = Detuned::new(mode, drive);
    config.validate(d.kappa)?;

    let n = config.fock_cutoff;
    let generator = Generator {
        n,
        kappa: d.kappa,
        epsilon: d.epsilon,
        sqrt: (0..=n).map(|m| (m as f64).sqrt()).collect(),
    };
    // Cavity detuning seen by each qubit branch: σz = −1 for ground, +1 for excited.
    let hd = [d.delta - d.chi, d.delta + d.chi];
    let block_pairs = [(0usize, 0usize), (1, 1), (0, 1)];

    let steps = (config.t_max / config.dt).round() as usize;
    let stride = (steps / config.samples).max(1);

    let mut state = TruncatedState::new(n, init);
    let zero = vec![C64::new(0.0, 0.0); n * n];
    let mut k = [zero.clone(), zero.clone(), zero.clone(), zero.clone()];
    let mut tmp = zero.clone();
    let mut acc = zero;

    let mut samples = Vec::with_capacity(steps / stride + 2);
    let mut max_top = 0.0f64;
    let mut phase_unwrap = PhaseUnwrap::default();
    let mut record =
        |t: f64, s: &TruncatedState, samples: &mut Vec<OracleSample>, observe: &mut F| {
            let c = s.qubit_coherence();
            samples.push(OracleSample {
                t,
                rho01_abs: c.norm(),
                rho01_phase: phase_unwrap.push(c.arg()),
                photon_number: s.photon_number(),
            });
            observe(t, s);
        };
    record(0.0, &state, &mut samples, &mut observe);

    let dt = config.dt;
    for step in 1..=steps {
        for (b, &(i, j)) in block_pairs.iter().enumerate() {
            let x = match b {
                0 => &mut state.rho00,
                1 => &mut state.rho11,
                _ => &mut state.rho01,
            };
            rk4_step(&generator, x, hd[i], hd[j], dt, &mut k, &mut tmp, &mut acc);
        }
        let top = state.top_level_population();
        max_top = max_top.max(top);
        let t = step as f64 * dt;
        if top > TOP_LEVEL_LIMIT {
            return Err(Error::Cutoff {
                cutoff: n,
                population: top,
                time: t,
            });
        }
        if step % stride == 0 || step == steps {
            record(t, &state, &mut samples, &mut observe);
        }
    }

    Ok(OracleSeries {
        samples,
        max_top_population: max_top,
        final_state: state,
    })
}

#[allow(clippy::too_many_arguments)]
fn rk4_step(
    g: &Generator,
    x: &mut [C64],
    hd_i: f64,
    hd_j: f64,
    dt: f64,
    k: &mut [Vec<C64>; 4],
    tmp: &mut [C64],
    acc: &mut [C64],
) {
    let [k1, k2, k3, k4] = k;
    g.apply(x, hd_i, hd_j, k1);
    for ((t, &xv), &kv) in tmp.iter_mut().zip(x.iter()).zip(k1.iter()) {
        *t = xv + kv * (0.5 * dt);
    }
    g.apply(tmp, hd_i, hd_j, k2);
    for ((t, &xv), &kv) in tmp.iter_mut().zip(x.iter()).zip(k2.iter()) {
        *t = xv + kv * (0.5 * dt);
    }
    g.apply(tmp, hd_i, hd_j, k3);
    for ((t, &xv), &kv) in tmp.iter_mut().zip(x.iter()).zip(k3.iter()) {
        *t = xv + kv * dt;
    }
    g.apply(tmp, hd_i, hd_j, k4);
    for (i, a) in acc.iter_mut().enumerate() {
        *a = k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i];
    }
    for (xv, &a) in x.iter_mut().zip(acc.iter()) {
        *xv += a * (dt / 6.0);
    }
}

#[derive(Default)]
struct PhaseUnwrap {
    last: Option<f64>,
    offset: f64,
}

impl PhaseUnwrap {
    fn push(&mut self, wrapped: f64) -> f64 {
        use std::f64::consts::{PI, TAU};
        if let Some(last) = self.last {
            let jump = wrapped - last;
            if jump > PI {
                self.offset -= TAU;
            } else if jump < -PI {
                self.offset += TAU;
            }
        }
        self.last = Some(wrapped);
        wrapped + self.offset
    }
}

/// Steady-state decay rate and frequency pull read off an oracle run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// −d ln|ρ01|/dt, 1/s.
    pub gamma: f64,
    /// d arg ρ01/dt, rad/s. Positive means the qubit transition moved up.
    pub freq_shift: f64,
}

const MIN_POST_TRANSIENT: usize = 20;

/// Least-squares slopes of ln|ρ01| and of the unwrapped phase after the
/// first `transient_fraction` of the series is discarded.
pub fn extract_rate(series: &[OracleSample], transient_fraction: f64) -> Result<RateEstimate> {
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(Error::Domain(
            "transient_fraction must lie in [0, 1)".into(),
        ));
    }
    let Some(last) = series.last() else {
        return Err(Error::Extraction("empty series".into()));
    };
    let t_cut = series[0].t + transient_fraction * (last.t - series[0].t);
    let tail: Vec<&OracleSample> = series.iter().filter(|s| s.t >= t_cut).collect();
    if tail.len() < MIN_POST_TRANSIENT {
        return Err(Error::Extraction(format!(
            "only {} samples after the transient",
            tail.len()
        )));
    }
    let mut prev = f64::INFINITY;
    for s in &tail {
        if !(s.rho01_abs > 0.0) {
            return Err(Error::Extraction(format!(
                "non-positive coherence {} at t = {}",
                s.rho01_abs, s.t
            )));
        }
        if s.rho01_abs > prev * (1.0 + 1e-9) {
            return Err(Error::Extraction(format!(
                "coherence envelope grows at t = {}",
                s.t
            )));
        }
        prev = s.rho01_abs;
    }
    let t: Vec<f64> = tail.iter().map(|s| s.t).collect();
    let log_env: Vec<f64> = tail.iter().map(|s| s.rho01_abs.ln()).collect();
    let phase: Vec<f64> = tail.iter().map(|s| s.rho01_phase).collect();
    let env_fit = linear_regression(&t, &log_env)?;
    let phase_fit = linear_regression(&t, &phase)?;
    Ok(RateEstimate {
        gamma: -env_fit.slope,
        freq_shift: phase_fit.slope,
    })
}
