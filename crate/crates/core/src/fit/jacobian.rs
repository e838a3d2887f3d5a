use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Central-difference Jacobian of `residual` at `params`.
///
/// Parameter `i` is stepped by `rel_step · max(|p_i|, scale_floor_i)`. When
/// `bounds` is given, a probe that would leave the box is replaced by a
/// one-sided difference. Columns are evaluated in parallel; the result is
/// identical to a sequential evaluation.
pub fn finite_difference_jacobian<F>(
    residual: &F,
    params: &DVector<f64>,
    rel_step: f64,
    scale_floor: &DVector<f64>,
    bounds: Option<(&DVector<f64>, &DVector<f64>)>,
) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    if !(rel_step > 0.0) {
        return Err(Error::Domain(format!(
            "rel_step must be positive, got {rel_step}"
        )));
    }
    let n = params.len();
    if scale_floor.len() != n {
        return Err(Error::Domain(
            "scale_floor length differs from params".into(),
        ));
    }
    let columns: Vec<Result<DVector<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let h = rel_step * params[i].abs().max(scale_floor[i]);
            let (mut lo, mut hi) = (params[i] - h, params[i] + h);
            if let Some((lower, upper)) = bounds {
                if hi > upper[i] {
                    hi = params[i];
                }
                if lo < lower[i] {
                    lo = params[i];
                }
            }
            if hi == lo {
                return Err(Error::Domain(format!(
                    "parameter {i} has no room to probe inside its bounds"
                )));
            }
            let mut probe = params.clone();
            probe[i] = hi;
            let r_hi = residual(&probe);
            probe[i] = lo;
            let r_lo = residual(&probe);
            if r_hi.iter().chain(r_lo.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "non-finite residual while probing parameter {i}"
                )));
            }
            Ok((r_hi - r_lo) / (hi - lo))
        })
        .collect();
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    let m = columns.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(m, n, |r, c| columns[c][r]))
}
