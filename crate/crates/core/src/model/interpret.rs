use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{AplModel, Mode};
use crate::autodiff::Tensor;
use crate::data::CaseRecord;
use crate::error::{AplError, Result};

/// One prototype's attention over its input tokens.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrototypeAttention {
    pub prototype: usize,
    /// Attention weight per token, in token order.
    pub weights: Vec<f64>,
    /// Token indices of the `k` largest weights, largest first.
    pub top: Vec<usize>,
}

impl PrototypeAttention {
    /// All token indices ordered by weight, largest first, ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        rank(&self.weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpretationReport {
    pub case_id: String,
    pub patch_names: Vec<String>,
    pub pathway_names: Vec<String>,
    pub k_patches: usize,
    pub k_pathways: usize,
    pub hist: Vec<PrototypeAttention>,
    pub gene: Vec<PrototypeAttention>,
}

fn rank(weights: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx
}

fn clamp_k(k: usize, n: usize, what: &str) -> usize {
    if k > n {
        log::warn!("requested top-{k} {what} but only {n} exist; using {n}");
        n
    } else {
        k
    }
}

fn rows(attn: &Tensor, k: usize) -> Vec<PrototypeAttention> {
    let (n_q, _) = attn.dims2().expect("attention is rank 2");
    (0..n_q)
        .map(|j| {
            let weights = attn.row(j).to_vec();
            let mut top = rank(&weights);
            top.truncate(k);
            PrototypeAttention {
                prototype: j,
                weights,
                top,
            }
        })
        .collect()
}

pub fn patch_name(index: usize) -> String {
    format!("patch_{index:05}")
}

/// Cross-attention maps of every prototype for one case, with the top
/// patches and pathways per prototype. `k` larger than the token count is
/// clamped with a warning.
pub fn export_interpretation(
    model: &AplModel,
    case: &CaseRecord,
    k_patches: usize,
    k_pathways: usize,
) -> Result<InterpretationReport> {
    let ab = model.config.ablation;
    if !(ab.use_hist_prototypes || ab.use_gene_prototypes) {
        return Err(AplError::Config(
            "model has no prototype branch to interpret".into(),
        ));
    }
    let out = model.forward(case, Mode::Eval)?;
    let k_patches = clamp_k(k_patches, case.n_patches(), "patches");
    let k_pathways = clamp_k(k_pathways, model.pathways.len(), "pathways");
    Ok(InterpretationReport {
        case_id: case.case_id.clone(),
        patch_names: (0..case.n_patches()).map(patch_name).collect(),
        pathway_names: model.pathways.iter().map(|p| p.name.clone()).collect(),
        k_patches,
        k_pathways,
        hist: out.hist_attention.map(|a| rows(&a, k_patches)).unwrap_or_default(),
        gene: out.gene_attention.map(|a| rows(&a, k_pathways)).unwrap_or_default(),
    })
}

impl InterpretationReport {
    /// Writes `hist_prototype_NNN.csv` / `gene_prototype_NNN.csv` (full
    /// ranking with a `top_k` flag) and `summary.csv` (top-k only) into
    /// `dir`. Returns the paths written.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| AplError::file(dir, e.to_string()))?;
        let mut written = Vec::new();
        let summary_path = dir.join("summary.csv");
        let mut summary = csv::Writer::from_path(&summary_path)?;
        summary.write_record(["case_id", "modality", "prototype", "rank", "token_index", "token_name", "weight"])?;

        let sets = [
            ("hist", &self.hist, &self.patch_names),
            ("gene", &self.gene, &self.pathway_names),
        ];
        for (modality, protos, names) in sets {
            for p in protos {
                let path = dir.join(format!("{modality}_prototype_{:03}.csv", p.prototype));
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["rank", "token_index", "token_name", "weight", "top_k"])?;
                for (r, &i) in p.ranking().iter().enumerate() {
                    let in_top = if r < p.top.len() { "1" } else { "0" };
                    w.write_record([
                        (r + 1).to_string(),
                        i.to_string(),
                        names[i].clone(),
                        format!("{:.17e}", p.weights[i]),
                        in_top.to_string(),
                    ])?;
                }
                w.flush()?;
                written.push(path);
                for (r, &i) in p.top.iter().enumerate() {
                    summary.write_record([
                        self.case_id.clone(),
                        modality.to_string(),
                        p.prototype.to_string(),
                        (r + 1).to_string(),
                        i.to_string(),
                        names[i].clone(),
                        format!("{:.17e}", p.weights[i]),
                    ])?;
                }
            }
        }
        summary.flush()?;
        written.push(summary_path);
        Ok(written)
    }
}
