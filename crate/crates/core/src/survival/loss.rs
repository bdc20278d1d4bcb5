use crate::autodiff::{Tape, Var};
use crate::error::{AplError, Result};

use super::{hazards, risk_score, survival_curve};

/// Lower clamp applied to every probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-case head output derived from the bin logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalOutput {
    pub logits: Vec<f64>,
    pub hazards: Vec<f64>,
    pub survival: Vec<f64>,
    pub risk: f64,
}

impl SurvivalOutput {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let hazards = hazards(&logits);
        let survival = survival_curve(&hazards);
        let risk = risk_score(&logits);
        SurvivalOutput {
            logits,
            hazards,
            survival,
            risk,
        }
    }
}

fn check_bin(bin: usize, n_bins: usize) -> Result<()> {
    if bin >= n_bins {
        return Err(AplError::Data(format!(
            "time bin {bin} out of range for {n_bins} bins"
        )));
    }
    Ok(())
}

/// Censored discrete-time negative log-likelihood on the tape.
///
/// With `h = σ(logits)` and `log S(t) = Σ_{j≤t} log(1 − h_j)`:
/// an observed event in `bin` costs `−log S(bin−1) − log h_bin`, a censored
/// case costs `−(1 − alpha)·log S(bin)`.
pub fn nll_survival_loss(
    tape: &mut Tape,
    logits: Var,
    bin: usize,
    event: bool,
    alpha: f64,
) -> Result<Var> {
    let n_bins = tape.value(logits).len();
    check_bin(bin, n_bins)?;
    let h = tape.sigmoid(logits);
    let one_minus = tape.neg(h);
    let one_minus = tape.add_scalar(one_minus, 1.0);
    let one_minus = tape.clamp_min(one_minus, PROB_FLOOR);
    let log_surv_terms = tape.log(one_minus)?;

    if event {
        let h = tape.clamp_min(h, PROB_FLOOR);
        let log_h = tape.log(h)?;
        let log_h_bin = tape.gather(log_h, &[bin])?;
        let mut total = tape.sum(log_h_bin);
        if bin > 0 {
            let prior: Vec<usize> = (0..bin).collect();
            let terms = tape.gather(log_surv_terms, &prior)?;
            let log_s = tape.sum(terms);
            total = tape.add(total, log_s)?;
        }
        Ok(tape.neg(total))
    } else {
        let upto: Vec<usize> = (0..=bin).collect();
        let terms = tape.gather(log_surv_terms, &upto)?;
        let log_s = tape.sum(terms);
        Ok(tape.mul_scalar(log_s, -(1.0 - alpha)))
    }
}

/// `ln(max(p, PROB_FLOOR))`, letting NaN through.
fn floored_ln(p: f64) -> f64 {
    if p < PROB_FLOOR { PROB_FLOOR.ln() } else { p.ln() }
}

/// The same loss evaluated without a tape.
pub fn nll_survival_value(logits: &[f64], bin: usize, event: bool, alpha: f64) -> Result<f64> {
    check_bin(bin, logits.len())?;
    let h = hazards(logits);
    let log_surv = |upto: usize| -> f64 {
        h[..upto]
            .iter()
            .map(|&hj| floored_ln(1.0 - hj))
            .sum()
    };
    Ok(if event {
        -(log_surv(bin) + floored_ln(h[bin]))
    } else {
        -(1.0 - alpha) * log_surv(bin + 1)
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::autodiff::{relative_error, Tensor};

    const LN2: f64 = std::f64::consts::LN_2;
    // −[log((1−σ(−1))(1−σ(0))) + log σ(1)] evaluated at 40 digits
    const FOUR_BIN_EVENT: f64 = 1.319_670_555_596_390_977_515;

    fn taped(logits: &[f64], bin: usize, event: bool, alpha: f64) -> f64 {
        let mut t = Tape::new();
        let l = t.leaf(Tensor::vector(logits.to_vec()).unwrap(), true);
        let loss = nll_survival_loss(&mut t, l, bin, event, alpha).unwrap();
        t.value(loss).data()[0]
    }

    #[test]
    fn reference_values() {
        assert!((taped(&[0.0], 0, true, 0.0) - LN2).abs() < 1e-12);
        assert!((taped(&[0.0, 0.0], 0, false, 0.0) - LN2).abs() < 1e-12);
        assert!((taped(&[-1.0, 0.0, 1.0, 2.0], 2, true, 0.0) - FOUR_BIN_EVENT).abs() < 1e-12);
        assert!((nll_survival_value(&[-1.0, 0.0, 1.0, 2.0], 2, true, 0.0).unwrap() - FOUR_BIN_EVENT).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_bin() {
        let mut t = Tape::new();
        let l = t.leaf(Tensor::vector(vec![0.0; 4]).unwrap(), true);
        assert!(nll_survival_loss(&mut t, l, 4, true, 0.0).is_err());
        assert!(nll_survival_value(&[0.0; 4], 7, false, 0.0).is_err());
    }

    #[test]
    fn extreme_logits_stay_finite() {
        for &x in &[-800.0, 800.0] {
            for event in [true, false] {
                let v = taped(&[x; 4], 3, event, 0.0);
                assert!(v.is_finite() && v >= 0.0);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = [-0.7, 0.2, 1.3, -0.4];
        let h = 1e-5;
        for (bin, event) in [(0, true), (2, true), (3, true), (1, false), (3, false)] {
            let mut t = Tape::new();
            let l = t.leaf(Tensor::vector(logits.to_vec()).unwrap(), true);
            let loss = nll_survival_loss(&mut t, l, bin, event, 0.25).unwrap();
            t.backward(loss).unwrap();
            let g = t.grad(l).unwrap().data().to_vec();
            for k in 0..4 {
                let mut p = logits;
                let mut m = logits;
                p[k] += h;
                m[k] -= h;
                let num = (nll_survival_value(&p, bin, event, 0.25).unwrap()
                    - nll_survival_value(&m, bin, event, 0.25).unwrap())
                    / (2.0 * h);
                assert!(relative_error(g[k], num) < 1e-6, "bin {bin} event {event} k {k}");
            }
        }
    }
}
