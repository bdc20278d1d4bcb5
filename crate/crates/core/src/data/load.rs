use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::formats::{read_embedding, read_expression, read_pathways, ExpressionMatrix};
use super::{CaseRecord, Cohort, PathwayDefinition};
use crate::error::{AplError, Result};

/// Expression matrix file expected next to the manifest.
pub const EXPRESSION_FILE: &str = "expression.csv";
/// Pathway file expected next to the manifest.
pub const PATHWAY_FILE: &str = "pathways.tsv";
pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: String,
    pub embedding_path: String,
    pub survival_months: f64,
    pub event: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative embedding paths resolve against.
    pub root: PathBuf,
    pub expression_path: PathBuf,
    pub pathway_path: PathBuf,
}

impl CohortManifest {
    /// Reads a manifest CSV. The expression matrix and pathway file are the
    /// sibling files [`EXPRESSION_FILE`] and [`PATHWAY_FILE`].
    pub fn read(path: &Path) -> Result<Self> {
        let ctx = |m: String| AplError::file(path, m);
        let mut rdr = csv::Reader::from_path(path).map_err(|e| ctx(e.to_string()))?;
        let headers = rdr.headers().map_err(|e| ctx(e.to_string()))?;
        let expected = ["case_id", "embedding_path", "survival_months", "event"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(ctx(format!("header must be {}", expected.join(","))));
        }
        let mut entries: Vec<ManifestEntry> = Vec::new();
        let mut ids = HashSet::new();
        for (i, rec) in rdr.deserialize().enumerate() {
            let line = i + 2;
            let e: ManifestEntry = rec.map_err(|e| ctx(format!("line {line}: {e}")))?;
            if e.event > 1 {
                return Err(ctx(format!("line {line}: event must be 0 or 1")));
            }
            if !(e.survival_months >= 0.0 && e.survival_months.is_finite()) {
                return Err(ctx(format!("line {line}: survival_months must be non-negative")));
            }
            if !ids.insert(e.case_id.clone()) {
                return Err(ctx(format!("line {line}: duplicate case_id '{}'", e.case_id)));
            }
            entries.push(e);
        }
        if entries.is_empty() {
            return Err(ctx("manifest lists no cases".into()));
        }
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(CohortManifest {
            expression_path: root.join(EXPRESSION_FILE),
            pathway_path: root.join(PATHWAY_FILE),
            entries,
            root,
        })
    }

    pub fn embedding_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.embedding_path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Restricts each pathway to genes present in the matrix, returning the
/// effective definitions and per-pathway matrix row indices.
fn resolve_pathways(
    pathways: &[PathwayDefinition],
    matrix: &ExpressionMatrix,
) -> Result<(Vec<PathwayDefinition>, Vec<Vec<usize>>)> {
    let mut effective = Vec::with_capacity(pathways.len());
    let mut rows = Vec::with_capacity(pathways.len());
    for p in pathways {
        let (present, missing): (Vec<&String>, Vec<&String>) =
            p.gene_ids.iter().partition(|g| matrix.gene_row(g).is_some());
        if !missing.is_empty() {
            warn!(
                "pathway '{}': dropping {} gene(s) absent from the expression matrix: {}",
                p.name,
                missing.len(),
                missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",")
            );
        }
        if present.is_empty() {
            return Err(AplError::Pathway {
                name: p.name.clone(),
                message: "no genes available in the expression matrix".into(),
            });
        }
        rows.push(present.iter().map(|g| matrix.gene_row(g).unwrap()).collect());
        effective.push(PathwayDefinition {
            name: p.name.clone(),
            gene_ids: present.into_iter().cloned().collect(),
        });
    }
    Ok((effective, rows))
}

pub fn load_cohort(manifest_path: &Path) -> Result<Cohort> {
    let manifest = CohortManifest::read(manifest_path)?;
    load_from_manifest(&manifest)
}

pub fn load_from_manifest(manifest: &CohortManifest) -> Result<Cohort> {
    let matrix = read_expression(&manifest.expression_path)?;
    let definitions = read_pathways(&manifest.pathway_path)?;
    let (pathways, gene_rows) = resolve_pathways(&definitions, &matrix)?;

    let columns = manifest
        .entries
        .iter()
        .map(|e| {
            matrix.case_column(&e.case_id).ok_or_else(|| {
                AplError::file(
                    &manifest.expression_path,
                    format!("no column for case '{}'", e.case_id),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let embeddings = manifest
        .entries
        .par_iter()
        .map(|e| read_embedding(&manifest.embedding_path(e)))
        .collect::<Result<Vec<_>>>()?;

    let dim = embeddings[0].shape()[1];
    let mut cases = Vec::with_capacity(manifest.entries.len());
    for ((entry, emb), col) in manifest.entries.iter().zip(embeddings).zip(columns) {
        if emb.shape()[1] != dim {
            return Err(AplError::file(
                manifest.embedding_path(entry),
                format!("embedding dim {} differs from cohort dim {dim}", emb.shape()[1]),
            ));
        }
        let pathway_inputs = gene_rows
            .iter()
            .map(|rows| rows.iter().map(|&r| matrix.values[r][col]).collect())
            .collect();
        cases.push(CaseRecord {
            case_id: entry.case_id.clone(),
            patch_embeddings: emb,
            pathway_inputs,
            survival_months: entry.survival_months,
            event: entry.event == 1,
            bin: None,
        });
    }
    Ok(Cohort { cases, pathways })
}
