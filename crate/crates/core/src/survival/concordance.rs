//! Harrell's C-index in `O(n log n)`.
//!
//! A pair `(i, j)` is comparable when `time_i < time_j` and case `i` had an
//! observed event. It is concordant when `risk_i > risk_j`; equal risks
//! count one half. Cases are swept in decreasing time order while a Fenwick
//! tree over risk ranks holds every case with a strictly later time.

use serde::{Deserialize, Serialize};

use crate::error::{AplError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceReport {
    pub c_index: f64,
    pub comparable_pairs: u64,
    pub concordant: u64,
    pub tied: u64,
}

impl ConcordanceReport {
    pub fn discordant(&self) -> u64 {
        self.comparable_pairs - self.concordant - self.tied
    }
}

struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick {
            tree: vec![0; n + 1],
        }
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< rank`.
    fn count_below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut total = 0;
        while i > 0 {
            total += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        total
    }
}

pub fn c_index(risks: &[f64], times: &[f64], events: &[bool]) -> Result<ConcordanceReport> {
    let n = risks.len();
    if times.len() != n || events.len() != n {
        return Err(AplError::shape("c_index", &[n], &[times.len(), events.len()]));
    }
    if n < 2 {
        return Err(AplError::Data("C-index needs at least two cases".into()));
    }
    if risks.iter().chain(times).any(|v| !v.is_finite()) {
        return Err(AplError::NonFinite("risk or time passed to c_index".into()));
    }

    // Dense ranks of risk values; equal risks share a rank.
    let mut sorted: Vec<f64> = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let rank_of = |r: f64| sorted.partition_point(|&v| v < r);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    let mut tree = Fenwick::new(sorted.len());
    let mut inserted = 0u64;
    let (mut comparable, mut concordant, mut tied) = (0u64, 0u64, 0u64);

    let mut start = 0;
    while start < n {
        let t = times[order[start]];
        let mut end = start;
        while end < n && times[order[end]] == t {
            end += 1;
        }
        for &i in &order[start..end] {
            if !events[i] {
                continue;
            }
            let rank = rank_of(risks[i]);
            let below = tree.count_below(rank);
            let at_or_below = tree.count_below(rank + 1);
            comparable += inserted;
            concordant += below;
            tied += at_or_below - below;
        }
        for &i in &order[start..end] {
            tree.add(rank_of(risks[i]));
            inserted += 1;
        }
        start = end;
    }

    if comparable == 0 {
        return Err(AplError::UndefinedConcordance);
    }
    Ok(ConcordanceReport {
        c_index: (concordant as f64 + 0.5 * tied as f64) / comparable as f64,
        comparable_pairs: comparable,
        concordant,
        tied,
    })
}
