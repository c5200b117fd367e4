//! Central-difference verification of analytic gradients.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Relative errors are measured against `max(|analytic|, |numeric|, GRAD_FLOOR)`
/// so entries with vanishing gradient are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Compares the analytic gradient of a scalar function against central
/// differences `(f(θ+h) − f(θ−h)) / 2h` for every entry of every parameter.
///
/// `f` receives the current parameter values and returns the loss and, when
/// asked, the analytic gradient (one tensor per parameter, same order).
pub fn gradient_check<F>(
    names: &[String],
    params: &[Tensor<f64>],
    mut f: F,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor<f64>], bool) -> Result<(f64, Option<Vec<Tensor<f64>>>)>,
{
    let (base, grads) = f(params, true)?;
    if !base.is_finite() {
        return Err(Error::NumericFault {
            location: "loss at base point".into(),
        });
    }
    let grads = grads.ok_or_else(|| Error::Config("analytic gradient not returned".into()))?;
    if grads.len() != params.len() {
        return Err(Error::Config("gradient count differs from parameter count".into()));
    }
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        tolerance: tol,
    };
    for p in 0..params.len() {
        let name = names.get(p).cloned().unwrap_or_else(|| format!("param{p}"));
        for idx in 0..params[p].len() {
            let orig = params[p].data()[idx];
            work[p].data_mut()[idx] = orig + h;
            let (plus, _) = f(&work, false)?;
            work[p].data_mut()[idx] = orig - h;
            let (minus, _) = f(&work, false)?;
            work[p].data_mut()[idx] = orig;
            let analytic = grads[p].data()[idx];
            if !plus.is_finite() || !minus.is_finite() || !analytic.is_finite() {
                return Err(Error::NumericFault {
                    location: format!("{name}[{idx}]"),
                });
            }
            let numeric = (plus - minus) / (2.0 * h);
            let rel = relative_error(analytic, numeric);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((name.clone(), idx));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}
