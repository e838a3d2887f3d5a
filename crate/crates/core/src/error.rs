use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The truncated Fock space is too small for the requested drive.
    #[error("Fock cutoff too small: top level population {population:.3e} at t = {time:.3e} s (cutoff {cutoff})")]
    Cutoff {
        cutoff: usize,
        population: f64,
        time: f64,
    },

    #[error("rate extraction failed: {0}")]
    Extraction(String),

    #[error("fit did not converge after {} iterations (residual norm {:.6e})", .0.iterations, .0.final_residual_norm)]
    NonConvergence(Box<crate::fit::FitResult>),

    /// No excursion above the baseline scatter was found in a sweep window.
    #[error("no feature: {0}")]
    NoFeature(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.kind() {
            csv::ErrorKind::Io(_) => match err.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            },
            _ => Error::Parse(err.to_string()),
        }
    }
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} is not finite ({value})")))
    }
}
