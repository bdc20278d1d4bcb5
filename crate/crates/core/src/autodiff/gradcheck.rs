//! Central finite-difference verification of tape gradients.

use super::optim::{Bound, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{AplError, Result};

/// Denominator floor for the relative error, so coordinates whose true
/// derivative is zero are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares autodiff gradients of `f` with `(f(θ+h) − f(θ−h)) / 2h` for every
/// scalar of every parameter in `store`.
///
/// `f` builds a scalar loss on the given tape from the bound parameters and
/// must be deterministic.
pub fn grad_check<F>(store: &mut ParamStore, mut f: F, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &Bound) -> Result<Var>,
{
    let mut eval = |store: &ParamStore, with_grad: bool| -> Result<(f64, Option<ParamStore>)> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let root = f(&mut tape, &bound)?;
        let value = tape.value(root).data()[0];
        if !value.is_finite() {
            return Err(AplError::NonFinite(format!("objective evaluated to {value}")));
        }
        if !with_grad {
            return Ok((value, None));
        }
        tape.backward(root)?;
        let mut grads = store.clone();
        grads.zero_grad();
        grads.accumulate_grads(&tape, &bound);
        Ok((value, Some(grads)))
    };

    let (_, analytic) = eval(store, true)?;
    let analytic = analytic.expect("gradients requested");

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
        tol,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).value().len();
        for k in 0..n {
            let original = store.get(id).value().data()[k];
            store.get_mut(id).value_mut().data_mut()[k] = original + h;
            let (plus, _) = eval(store, false)?;
            store.get_mut(id).value_mut().data_mut()[k] = original - h;
            let (minus, _) = eval(store, false)?;
            store.get_mut(id).value_mut().data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.get(id).grad.data()[k];
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err.max(report.max_rel_error);
                report.worst = Some((store.get(id).name.clone(), k));
            }
        }
    }
    Ok(report)
}
