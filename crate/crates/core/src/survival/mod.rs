//! Discrete-time survival head: censored NLL, hazard/survival/risk
//! transforms, and Harrell's concordance index.

mod concordance;
mod loss;

pub use concordance::{c_index, ConcordanceReport};
pub use loss::{nll_survival_loss, nll_survival_value, SurvivalOutput, PROB_FLOOR};

use crate::autodiff::sigmoid;

/// `h_t = σ(logit_t)`.
pub fn hazards(logits: &[f64]) -> Vec<f64> {
    logits.iter().map(|&l| sigmoid(l)).collect()
}

/// `S(t) = Π_{j≤t} (1 − h_j)`.
pub fn survival_curve(hazards: &[f64]) -> Vec<f64> {
    hazards
        .iter()
        .scan(1.0, |s, &h| {
            *s *= 1.0 - h;
            Some(*s)
        })
        .collect()
}

/// Scalar risk `−Σ_t S(t)`; larger means shorter expected survival.
pub fn risk_score(logits: &[f64]) -> f64 {
    -survival_curve(&hazards(logits)).iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn risk_limits() {
        let low = risk_score(&[-30.0; 4]);
        assert!((low + 4.0).abs() < 1e-11, "{low}");
        let high = risk_score(&[30.0; 4]);
        assert!(high < 0.0 && high > -1e-12, "{high}");
    }

    #[test]
    fn risk_strictly_increases_with_any_logit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let b = rng.random_range(1..=6);
            let logits: Vec<f64> = (0..b).map(|_| rng.random_range(-4.0..4.0)).collect();
            let t = rng.random_range(0..b);
            let mut bumped = logits.clone();
            bumped[t] += rng.random_range(0.01..1.0);
            assert!(risk_score(&bumped) > risk_score(&logits));
        }
    }

    #[test]
    fn survival_positive_and_non_increasing() {
        let s = survival_curve(&hazards(&[-1.0, 0.5, 2.0, -3.0]));
        assert!(s.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }
}
