use serde::{Deserialize, Serialize};

use super::CaseRecord;
use crate::error::{AplError, Result};

/// Time-bin boundaries. `edges` holds the `B − 1` interior cut points; a
/// time `t` falls in bin `#{e ∈ edges : e ≤ t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBins {
    pub edges: Vec<f64>,
}

impl TimeBins {
    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    /// Interior edges at the `k/B` quantiles (linear interpolation) of the
    /// uncensored times.
    pub fn fit(cases: &[CaseRecord], n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(AplError::Config("number of time bins must be at least 1".into()));
        }
        let mut times: Vec<f64> = cases
            .iter()
            .filter(|c| c.event)
            .map(|c| c.survival_months)
            .collect();
        times.sort_by(f64::total_cmp);
        let mut distinct = times.clone();
        distinct.dedup();
        if distinct.len() < n_bins {
            return Err(AplError::Data(format!(
                "{} distinct uncensored times cannot support {n_bins} time bins; use fewer bins",
                distinct.len()
            )));
        }
        let edges = (1..n_bins)
            .map(|k| quantile(&times, k as f64 / n_bins as f64))
            .collect();
        Ok(TimeBins { edges })
    }

    pub fn bin_of(&self, time: f64) -> usize {
        self.edges.partition_point(|&e| e <= time)
    }

    pub fn assign(&self, cases: &mut [CaseRecord]) {
        for c in cases {
            c.bin = Some(self.bin_of(c.survival_months));
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Fits quantile bins on `cases` and assigns every case, censored or not,
/// the bin containing its time.
pub fn discretize_survival(cases: &mut [CaseRecord], n_bins: usize) -> Result<TimeBins> {
    let bins = TimeBins::fit(cases, n_bins)?;
    bins.assign(cases);
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use proptest::prelude::*;

    fn case(t: f64, event: bool) -> CaseRecord {
        CaseRecord {
            case_id: format!("t{t}"),
            patch_embeddings: Tensor::zeros(&[1, 1]),
            pathway_inputs: vec![],
            survival_months: t,
            event,
            bin: None,
        }
    }

    #[test]
    fn four_points_four_bins() {
        let mut cases: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&t| case(t, true)).collect();
        discretize_survival(&mut cases, 4).unwrap();
        let bins: Vec<_> = cases.iter().map(|c| c.bin.unwrap()).collect();
        assert_eq!(bins, vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_bin_is_degenerate() {
        let mut cases = vec![case(5.0, true), case(1.0, false), case(9.0, true)];
        let b = discretize_survival(&mut cases, 1).unwrap();
        assert!(b.edges.is_empty());
        assert!(cases.iter().all(|c| c.bin == Some(0)));
    }

    #[test]
    fn too_few_distinct_times() {
        let mut cases = vec![case(1.0, true), case(1.0, true), case(2.0, false), case(3.0, true)];
        let err = discretize_survival(&mut cases, 3).unwrap_err();
        assert!(err.to_string().contains("fewer bins"));
    }

    #[test]
    fn censored_cases_use_their_censoring_time() {
        let mut cases = vec![case(1.0, true), case(2.0, true), case(3.0, true), case(100.0, false)];
        discretize_survival(&mut cases, 2).unwrap();
        assert_eq!(cases[3].bin, Some(1));
    }

    proptest! {
        #[test]
        fn uncensored_bins_balanced_and_monotone(
            times in prop::collection::hash_set(0u32..100_000, 8..120),
            censored in prop::collection::vec(0.0f64..200.0, 0..40),
            b in 1usize..6,
        ) {
            let mut cases: Vec<_> = times.iter().map(|&t| case(t as f64 / 10.0, true)).collect();
            cases.extend(censored.iter().map(|&t| case(t, false)));
            prop_assume!(times.len() >= b);
            let bins = discretize_survival(&mut cases, b).unwrap();

            let mut counts = vec![0usize; b];
            for c in cases.iter().filter(|c| c.event) {
                counts[c.bin.unwrap()] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "{counts:?}");

            let mut sorted = cases.clone();
            sorted.sort_by(|a, b| a.survival_months.total_cmp(&b.survival_months));
            prop_assert!(sorted.windows(2).all(|w| w[0].bin <= w[1].bin));
            prop_assert!(cases.iter().all(|c| c.bin.unwrap() < bins.n_bins()));
        }
    }
}
