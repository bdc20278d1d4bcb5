use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CaseRecord;
use crate::error::{AplError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    /// Fold index of each case, aligned with the input order.
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Seeded `k`-fold split stratified by event indicator.
///
/// Events and censored cases are shuffled separately, then dealt round-robin
/// (events first, censored continuing where events stopped), so both the
/// fold sizes and the per-fold event counts differ by at most one.
pub fn make_folds(cases: &[CaseRecord], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 || cases.len() < k {
        return Err(AplError::Config(format!(
            "cannot split {} cases into {k} folds",
            cases.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut events, mut censored): (Vec<usize>, Vec<usize>) =
        (0..cases.len()).partition(|&i| cases[i].event);
    events.shuffle(&mut rng);
    censored.shuffle(&mut rng);

    let mut fold_of = vec![0; cases.len()];
    for (slot, &i) in events.iter().chain(&censored).enumerate() {
        fold_of[i] = slot % k;
    }
    Ok(FoldAssignment { k, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn cases(n: usize, events: usize) -> Vec<CaseRecord> {
        (0..n)
            .map(|i| CaseRecord {
                case_id: format!("c{i}"),
                patch_embeddings: Tensor::zeros(&[1, 1]),
                pathway_inputs: vec![],
                survival_months: i as f64,
                event: i < events,
                bin: None,
            })
            .collect()
    }

    #[test]
    fn ten_cases_five_folds() {
        let f = make_folds(&cases(10, 4), 5, 1).unwrap();
        for k in 0..5 {
            assert_eq!(f.test_indices(k).len(), 2);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let c = cases(37, 12);
        assert_eq!(make_folds(&c, 5, 9).unwrap(), make_folds(&c, 5, 9).unwrap());
        assert_ne!(make_folds(&c, 5, 9).unwrap(), make_folds(&c, 5, 10).unwrap());
    }

    #[test]
    fn stratified_event_counts() {
        let c = cases(100, 30);
        let f = make_folds(&c, 5, 3).unwrap();
        for k in 0..5 {
            let test = f.test_indices(k);
            assert_eq!(test.len(), 20);
            let ev = test.iter().filter(|&&i| c[i].event).count();
            assert!((5..=7).contains(&ev), "fold {k} has {ev} events");
        }
    }

    #[test]
    fn folds_partition_cohort() {
        let c = cases(23, 9);
        let f = make_folds(&c, 4, 0).unwrap();
        let mut all: Vec<usize> = (0..4).flat_map(|k| f.test_indices(k)).collect();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for k in 0..4 {
            assert_eq!(f.train_indices(k).len() + f.test_indices(k).len(), 23);
        }
    }

    #[test]
    fn too_few_cases() {
        assert!(make_folds(&cases(3, 1), 5, 0).is_err());
    }
}
