//! `modescope`: simulate, fit, detect and report on coherence-spectroscopy
//! sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use modescope_core::Error;

#[derive(Parser)]
#[command(
    name = "modescope",
    version,
    about = "Coherence spectroscopy of superconducting qubits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic T2 sweep from a run configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Sweep CSV; defaults to `output.sweep_csv` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the single-mode dephasing model to a window of a sweep.
    Fit {
        sweep: PathBuf,
        /// `<f_lo_hz>:<f_hi_hz>`; the whole sweep when omitted.
        #[arg(long)]
        window: Option<String>,
        /// Starting parameters (named, Hz), or a previous fit JSON.
        #[arg(long)]
        guess: Option<PathBuf>,
        /// Hold the asymmetry weight at this value.
        #[arg(long)]
        fixed_w: Option<f64>,
        /// Ignore t2_err and use unit weights.
        #[arg(long)]
        unweighted: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find dephasing features in a sweep and classify them.
    Detect {
        sweep: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Frequencies of other qubits on the chip, Hz.
        #[arg(long = "qubit-freq-hz", value_delimiter = ',')]
        qubit_freq_hz: Vec<f64>,
        /// Γ2 prominence threshold, 1/s. Defaults to five robust standard
        /// deviations of the baseline-subtracted sweep.
        #[arg(long)]
        min_prominence: Option<f64>,
        /// Defaults to ten grid steps.
        #[arg(long)]
        min_separation_hz: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate the driven dispersive master equation and compare the
    /// extracted dephasing rate with the analytic one.
    Oracle {
        #[arg(long)]
        mode_kappa_hz: f64,
        #[arg(long)]
        mode_chi_hz: f64,
        #[arg(long)]
        epsilon_hz: f64,
        #[arg(long)]
        detuning_hz: f64,
        #[arg(long, default_value_t = 20)]
        cutoff: usize,
        #[arg(long, default_value_t = 7.0e9)]
        mode_freq_hz: f64,
        /// Integration time in units of 1/κ.
        #[arg(long, default_value_t = 200.0)]
        t_max_kappa: f64,
        /// Time step in units of 1/κ.
        #[arg(long, default_value_t = 0.005)]
        dt_kappa: f64,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mode report (Q, occupancy, T0) and plot-ready model/data CSV.
    Report {
        fit: PathBuf,
        /// `power,n_bar` CSV for the photon-number calibration.
        #[arg(long)]
        power: Option<PathBuf>,
        /// Sweep CSV to include as data points in the plot export.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Plot CSV; defaults to `<out stem>.plot.csv`.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Parse(_) => 2,
        Error::Cutoff { .. }
        | Error::Extraction(_)
        | Error::NonConvergence(_)
        | Error::NoFeature(_) => 3,
        Error::Io(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => commands::simulate(&config, out.as_deref()),
        Command::Fit {
            sweep,
            window,
            guess,
            fixed_w,
            unweighted,
            out,
        } => commands::fit(
            &sweep,
            window.as_deref(),
            guess.as_deref(),
            fixed_w,
            unweighted,
            &out,
        ),
        Command::Detect {
            sweep,
            catalog,
            qubit_freq_hz,
            min_prominence,
            min_separation_hz,
            out,
        } => commands::detect(
            &sweep,
            catalog.as_deref(),
            &qubit_freq_hz,
            min_prominence,
            min_separation_hz,
            &out,
        ),
        Command::Oracle {
            mode_kappa_hz,
            mode_chi_hz,
            epsilon_hz,
            detuning_hz,
            cutoff,
            mode_freq_hz,
            t_max_kappa,
            dt_kappa,
            samples,
            out,
        } => commands::oracle(
            &commands::OracleArgs {
                mode_freq_hz,
                mode_kappa_hz,
                mode_chi_hz,
                epsilon_hz,
                detuning_hz,
                cutoff,
                t_max_kappa,
                dt_kappa,
                samples,
            },
            &out,
        ),
        Command::Report {
            fit,
            power,
            sweep,
            out,
            plot,
        } => commands::report(
            &fit,
            power.as_deref(),
            sweep.as_deref(),
            &out,
            plot.as_deref(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
