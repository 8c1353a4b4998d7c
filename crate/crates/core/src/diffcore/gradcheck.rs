//! Central finite differences for validating reverse-mode gradients.

use super::ParamSet;
use crate::error::Result;

/// Central-difference estimate of `∂f/∂θ` for every scalar of `params`,
/// flattened in parameter order.
pub fn finite_difference<F>(params: &ParamSet, h: f64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    let mut work = params.clone();
    let mut out = Vec::with_capacity(params.num_scalars());
    for id in params.ids() {
        for i in 0..params.get(id).len() {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let plus = f(&work)?;
            work.get_mut(id).data_mut()[i] = orig - h;
            let minus = f(&work)?;
            work.get_mut(id).data_mut()[i] = orig;
            out.push((plus - minus) / (2.0 * h));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest per-entry `|a − n| / max(|a|, |n|, floor)`.
    pub max_relative_error: f64,
    /// `‖a − n‖ / (‖a‖ + ‖n‖)` over the whole vector.
    pub global_relative_error: f64,
    pub checked: usize,
}

/// Entries whose magnitude is below this floor are compared absolutely;
/// central differences at `h = 1e-5` cannot resolve them relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn check_gradients(analytic: &[f64], numeric: &[f64]) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len());
    let mut max_rel: f64 = 0.0;
    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    for (&a, &n) in analytic.iter().zip(numeric) {
        let denom = a.abs().max(n.abs()).max(RELATIVE_FLOOR);
        max_rel = max_rel.max((a - n).abs() / denom);
        diff2 += (a - n) * (a - n);
        a2 += a * a;
        n2 += n * n;
    }
    let denom = a2.sqrt() + n2.sqrt();
    GradCheckReport {
        max_relative_error: max_rel,
        global_relative_error: if denom > 0.0 { diff2.sqrt() / denom } else { 0.0 },
        checked: analytic.len(),
    }
}
