//! Nonlinear least squares and the single-mode dephasing-spectrum fit.

mod jacobian;
mod lm;
mod mode_fit;

pub use jacobian::finite_difference_jacobian;
pub use lm::{
    covariance_from_jacobian, lm_minimize, FitProblem, FitResult, LmOptions, Termination,
};
pub use mode_fit::{
    fit_single_mode, fit_single_mode_with, initial_guess, ModeFit, ModeFitOptions, ModeFitParams,
    Weighting, PARAM_NAMES,
};
