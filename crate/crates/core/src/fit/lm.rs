//! Box-bounded Levenberg–Marquardt.
//!
//! The damping is chosen through a trust region on the scaled step ‖D·δ‖
//! (Moré's formulation, as in MINPACK's `lmdif`): inside the region the
//! plain Gauss–Newton step is taken, so linear problems finish in a single
//! step. Trial points are projected onto the bounds before evaluation.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use super::jacobian::finite_difference_jacobian;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Scaled gradient tolerance: max_j |(Jᵀr)_j| / (‖J_j‖·‖r‖).
    pub gradient_tolerance: f64,
    /// Relative tolerance on the scaled step.
    pub step_tolerance: f64,
    /// Relative tolerance on the cost reduction.
    pub cost_tolerance: f64,
    /// Initial trust radius as a multiple of ‖D·p0‖ (MINPACK `factor`).
    pub damping_init: f64,
    pub jacobian_rel_step: f64,
    /// Multiply the covariance by the reduced chi-square. Set to `false`
    /// when the residuals are already normalised by known uncertainties.
    pub scale_covariance: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            cost_tolerance: 1e-15,
            damping_init: 100.0,
            jacobian_rel_step: 1e-6,
            scale_covariance: true,
        }
    }
}

pub struct FitProblem<F> {
    pub residual: F,
    pub initial: DVector<f64>,
    pub lower_bounds: DVector<f64>,
    pub upper_bounds: DVector<f64>,
    /// Lower limit on the finite-difference step scale per parameter.
    pub scale_floor: DVector<f64>,
    pub options: LmOptions,
}

impl<F> FitProblem<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    /// Unbounded problem with unit step floors and default options.
    pub fn new(residual: F, initial: DVector<f64>) -> Self {
        let n = initial.len();
        Self {
            residual,
            initial,
            lower_bounds: DVector::from_element(n, f64::NEG_INFINITY),
            upper_bounds: DVector::from_element(n, f64::INFINITY),
            scale_floor: DVector::from_element(n, 1.0),
            options: LmOptions::default(),
        }
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower_bounds = lower;
        self.upper_bounds = upper;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.initial.len();
        if n == 0 {
            return Err(Error::Domain("no parameters to fit".into()));
        }
        if self.lower_bounds.len() != n
            || self.upper_bounds.len() != n
            || self.scale_floor.len() != n
        {
            return Err(Error::Domain(
                "bounds and floors must match the parameter count".into(),
            ));
        }
        for i in 0..n {
            let p = self.initial[i];
            if !p.is_finite() {
                return Err(Error::Domain(format!(
                    "initial parameter {i} is not finite"
                )));
            }
            if !(self.lower_bounds[i] <= p && p <= self.upper_bounds[i]) {
                return Err(Error::Domain(format!(
                    "initial parameter {i} = {p} violates its bounds [{}, {}]",
                    self.lower_bounds[i], self.upper_bounds[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    Cost,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub std_errors: DVector<f64>,
    pub reduced_chi2: f64,
    /// Accepted steps.
    pub iterations: usize,
    /// Times the trust region had to shrink after a rejected trial.
    pub damping_increases: usize,
    pub converged: bool,
    pub termination: Termination,
    pub final_residual_norm: f64,
    /// ½‖r‖² after every accepted step, starting with the initial point.
    pub cost_history: Vec<f64>,
    pub at_bound: Vec<bool>,
}

fn project(p: &mut DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) {
    for i in 0..p.len() {
        p[i] = p[i].clamp(lower[i], upper[i]);
    }
}

/// Solves min ‖r + J·δ‖ subject to ‖D·δ‖ ≤ radius. Returns δ and the
/// multiplier λ that produced it.
fn trust_region_step(
    jac: &DMatrix<f64>,
    r: &DVector<f64>,
    diag: &DVector<f64>,
    radius: f64,
) -> (DVector<f64>, f64) {
    let n = jac.ncols();
    let mut js = jac.clone();
    for (j, mut col) in js.column_iter_mut().enumerate() {
        col /= diag[j];
    }
    let jtj = js.transpose() * &js;
    let g = js.transpose() * r;

    let solve = |lambda: f64| -> Option<DVector<f64>> {
        let mut a = jtj.clone();
        for i in 0..n {
            a[(i, i)] += lambda;
        }
        Cholesky::new(a).map(|c| -c.solve(&g))
    };
    let unscale = |y: DVector<f64>| -> DVector<f64> { y.component_div(diag) };

    if let Some(y) = solve(0.0) {
        if y.iter().all(|v| v.is_finite()) && y.norm() <= 1.1 * radius {
            return (unscale(y), 0.0);
        }
    }

    let g_norm = g.norm();
    if g_norm == 0.0 {
        return (DVector::zeros(n), 0.0);
    }
    // ‖y(λ)‖ ≤ ‖g‖/λ, so λ = ‖g‖/radius is inside the region.
    let mut hi = g_norm / radius;
    let mut lo = hi * 1e-20;
    let mut best = solve(hi).expect("positive-definite after damping");
    let mut best_lambda = hi;
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let Some(y) = solve(mid) else {
            lo = mid;
            continue;
        };
        let len = y.norm();
        if len > radius {
            lo = mid;
        } else {
            hi = mid;
            best = y;
            best_lambda = mid;
        }
        if (len - radius).abs() <= 0.1 * radius && len <= radius {
            break;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    (unscale(best), best_lambda)
}

/// Minimises ½‖r(p)‖² inside the box bounds.
///
/// Running out of iterations is not an error: the result comes back with
/// `converged = false`.
pub fn lm_minimize<F>(problem: &FitProblem<F>) -> Result<FitResult>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    problem.validate()?;
    let opts = &problem.options;
    let lower = &problem.lower_bounds;
    let upper = &problem.upper_bounds;
    let residual = &problem.residual;
    let n = problem.initial.len();

    let mut p = problem.initial.clone();
    let mut r = residual(&p);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "residual is not finite at the initial point".into(),
        ));
    }
    if r.len() < n {
        return Err(Error::Domain(format!(
            "{} residuals cannot determine {} parameters",
            r.len(),
            n
        )));
    }
    let jacobian = |p: &DVector<f64>| {
        finite_difference_jacobian(
            residual,
            p,
            opts.jacobian_rel_step,
            &problem.scale_floor,
            Some((lower, upper)),
        )
    };

    let mut jac = jacobian(&p)?;
    let mut diag = DVector::from_fn(n, |j, _| {
        let c = jac.column(j).norm();
        if c > 0.0 {
            c
        } else {
            1.0
        }
    });
    let mut radius = {
        let dp = p.component_mul(&diag).norm();
        if dp > 0.0 {
            opts.damping_init * dp
        } else {
            opts.damping_init
        }
    };

    let mut cost_history = vec![0.5 * r.norm_squared()];
    let mut iterations = 0usize;
    let mut damping_increases = 0usize;
    let mut first_trial = true;
    let mut termination = Termination::MaxIterations;

    'outer: while iterations < opts.max_iterations {
        let r_norm = r.norm();
        let g = jac.transpose() * &r;
        let mut g_scaled = 0.0f64;
        if r_norm > 0.0 {
            for j in 0..n {
                let blocked = (p[j] <= lower[j] && g[j] > 0.0) || (p[j] >= upper[j] && g[j] < 0.0);
                let c = jac.column(j).norm();
                if !blocked && c > 0.0 {
                    g_scaled = g_scaled.max(g[j].abs() / (c * r_norm));
                }
            }
        }
        if g_scaled <= opts.gradient_tolerance {
            termination = Termination::Gradient;
            break;
        }

        loop {
            let (delta, lambda) = trust_region_step(&jac, &r, &diag, radius);
            let mut trial = &p + &delta;
            project(&mut trial, lower, upper);
            let step = &trial - &p;
            let step_norm = step.component_mul(&diag).norm();
            if first_trial {
                radius = radius.min(step_norm.max(f64::MIN_POSITIVE));
                first_trial = false;
            }

            let r_trial = residual(&trial);
            let trial_norm = r_trial.norm();
            let actual = if trial_norm.is_finite() {
                1.0 - (trial_norm / r_norm).powi(2)
            } else {
                -1.0
            };
            let predicted = 1.0 - ((&r + &jac * &step).norm() / r_norm).powi(2);
            let ratio = if predicted > 0.0 {
                actual / predicted
            } else {
                0.0
            };

            if ratio <= 0.25 {
                radius = 0.5 * radius.min(10.0 * step_norm);
                damping_increases += 1;
            } else if lambda == 0.0 || ratio >= 0.75 {
                radius = 2.0 * step_norm;
            }

            let accepted = ratio >= 1e-4;
            if accepted {
                p = trial;
                r = r_trial;
                iterations += 1;
                cost_history.push(0.5 * r.norm_squared());
            }

            let scaled_p = p.component_mul(&diag).norm();
            if actual.abs() <= opts.cost_tolerance
                && predicted <= opts.cost_tolerance
                && ratio <= 2.0
            {
                termination = Termination::Cost;
                if accepted {
                    jac = jacobian(&p)?;
                }
                break 'outer;
            }
            if radius <= opts.step_tolerance * scaled_p || step_norm == 0.0 {
                termination = Termination::Step;
                if accepted {
                    jac = jacobian(&p)?;
                }
                break 'outer;
            }
            if accepted {
                jac = jacobian(&p)?;
                for j in 0..n {
                    diag[j] = diag[j].max(jac.column(j).norm());
                }
                break;
            }
        }
    }

    let m = r.len();
    let dof = (m - n).max(1) as f64;
    let reduced_chi2 = r.norm_squared() / dof;
    let mut covariance = covariance_from_jacobian(&jac);
    if opts.scale_covariance {
        covariance *= reduced_chi2;
    }
    let std_errors = DVector::from_fn(n, |i, _| covariance[(i, i)].max(0.0).sqrt());
    let at_bound = (0..n)
        .map(|i| p[i] <= lower[i] || p[i] >= upper[i])
        .collect();

    Ok(FitResult {
        params: p,
        covariance,
        std_errors,
        reduced_chi2,
        iterations,
        damping_increases,
        converged: termination != Termination::MaxIterations,
        termination,
        final_residual_norm: r.norm(),
        cost_history,
        at_bound,
    })
}

/// (JᵀJ)⁻¹ through the SVD of J, dropping directions the data do not
/// constrain.
pub fn covariance_from_jacobian(jac: &DMatrix<f64>) -> DMatrix<f64> {
    let n = jac.ncols();
    let svd = SVD::new(jac.clone(), false, true);
    let v_t = svd.v_t.expect("requested V");
    let s_max = svd.singular_values.max();
    let cutoff = s_max * f64::EPSILON * (jac.nrows().max(n) as f64);
    let mut cov = DMatrix::zeros(n, n);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let v = v_t.row(k).transpose();
            cov += (&v * v.transpose()) / (s * s);
        }
    }
    (&cov + cov.transpose()) * 0.5
}
