use serde::{Deserialize, Serialize};

use super::CaseRecord;
use crate::error::{AplError, Result};

/// Per-gene z-scoring of pathway inputs, fit on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayNormalizer {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

impl PathwayNormalizer {
    /// Population statistics over `cases`. Genes with (near) zero spread
    /// get unit scale.
    pub fn fit(cases: &[CaseRecord]) -> Result<Self> {
        let first = cases
            .first()
            .ok_or(AplError::EmptyInput { op: "normalizer fit" })?;
        let n = cases.len() as f64;
        let mut mean: Vec<Vec<f64>> = first.pathway_inputs.iter().map(|p| vec![0.0; p.len()]).collect();
        for c in cases {
            check_layout(&mean, c)?;
            for (m, x) in mean.iter_mut().zip(&c.pathway_inputs) {
                m.iter_mut().zip(x).for_each(|(m, x)| *m += x / n);
            }
        }
        let mut var: Vec<Vec<f64>> = mean.iter().map(|m| vec![0.0; m.len()]).collect();
        for c in cases {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(&c.pathway_inputs) {
                for ((v, m), x) in v.iter_mut().zip(m).zip(x) {
                    *v += (x - m) * (x - m) / n;
                }
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                v.into_iter()
                    .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
                    .collect()
            })
            .collect();
        Ok(PathwayNormalizer { mean, std })
    }

    pub fn apply(&self, cases: &mut [CaseRecord]) -> Result<()> {
        for c in cases {
            check_layout(&self.mean, c)?;
            for ((x, m), s) in c.pathway_inputs.iter_mut().zip(&self.mean).zip(&self.std) {
                for ((x, m), s) in x.iter_mut().zip(m).zip(s) {
                    *x = (*x - m) / s;
                }
            }
        }
        Ok(())
    }
}

fn check_layout(reference: &[Vec<f64>], case: &CaseRecord) -> Result<()> {
    let ok = reference.len() == case.pathway_inputs.len()
        && reference.iter().zip(&case.pathway_inputs).all(|(a, b)| a.len() == b.len());
    if ok {
        Ok(())
    } else {
        Err(AplError::Data(format!(
            "case '{}' pathway layout differs from the normalizer's",
            case.case_id
        )))
    }
}
