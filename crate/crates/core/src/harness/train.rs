use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamW, Tape};
use crate::data::{CaseRecord, PathwayDefinition};
use crate::error::{AplError, Result};
use crate::model::{AplConfig, AplModel, Mode};
use crate::survival::{c_index, nll_survival_loss, ConcordanceReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Drives fold assignment, shuffling and dropout masks.
    pub seed: u64,
    pub folds: usize,
    /// Down-weighting of censored cases in the loss.
    pub alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-4,
            weight_decay: 1e-3,
            epochs: 50,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            folds: 5,
            alpha: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AplError::Config(m.into()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and non-negative");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.eps.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return bad("eps must be positive");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            lr: self.lr,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub model: AplModel,
    /// Mean per-case training loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// Trains `model` in place and returns the per-epoch mean loss. Every case
/// must already carry a time bin.
pub fn train_model(model: &mut AplModel, cases: &[CaseRecord], tc: &TrainConfig) -> Result<Vec<f64>> {
    tc.validate()?;
    if cases.is_empty() {
        return Err(AplError::EmptyInput { op: "train_model" });
    }
    let bins = cases
        .iter()
        .map(|c| {
            c.bin.ok_or_else(|| AplError::Data(format!("case '{}' has no time bin", c.case_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let optimizer = tc.optimizer();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..cases.len()).collect();
    let mut history = Vec::with_capacity(tc.epochs);
    let mut step = 0u64;

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(tc.batch_size).enumerate() {
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape);
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let case = &cases[i];
                let vars = model.forward_on_tape(&mut tape, &bound, case, &mut Mode::Train(&mut rng))?;
                let loss = nll_survival_loss(&mut tape, vars.logits, bins[i], case.event, tc.alpha)?;
                let value = tape.value(loss).data()[0];
                if !value.is_finite() {
                    return Err(AplError::Diverged {
                        epoch,
                        batch: batch_idx,
                        case_id: case.case_id.clone(),
                        loss: value,
                    });
                }
                epoch_loss += value;
                losses.push(loss);
            }
            let mut total = losses[0];
            for &l in &losses[1..] {
                total = tape.add(total, l)?;
            }
            let mean = tape.mul_scalar(total, 1.0 / batch.len() as f64);
            tape.backward(mean)?;
            model.params.accumulate_grads(&tape, &bound);
            drop(tape);
            step += 1;
            optimizer.step(model.params.iter_mut(), step);
            model.params.zero_grad();
        }
        let mean = epoch_loss / cases.len() as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        history.push(mean);
    }
    Ok(history)
}

/// Builds a fresh model from `apl` and trains it on `train`.
pub fn train_fold(
    train: &[CaseRecord],
    pathways: &[PathwayDefinition],
    apl: &AplConfig,
    tc: &TrainConfig,
) -> Result<TrainedFold> {
    let mut model = AplModel::new(apl.clone(), pathways.to_vec())?;
    let loss_history = train_model(&mut model, train, tc)?;
    Ok(TrainedFold {
        model,
        loss_history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: ConcordanceReport,
    pub risks: Vec<f64>,
}

/// Eval-mode risks for `cases` and their C-index against the observed times.
pub fn evaluate(model: &AplModel, cases: &[CaseRecord]) -> Result<Evaluation> {
    let risks = model.predict_risks(cases)?;
    let times: Vec<f64> = cases.iter().map(|c| c.survival_months).collect();
    let events: Vec<bool> = cases.iter().map(|c| c.event).collect();
    let report = c_index(&risks, &times, &events)?;
    Ok(Evaluation { report, risks })
}
