//! Cohort ingestion and preparation.
//!
//! A cohort on disk is a directory holding a manifest CSV, one `.pemb`
//! patch-embedding file per case, an expression matrix and a pathway file.
//! See [`formats`] for the byte layouts.

mod discretize;
mod folds;
pub mod formats;
mod load;
mod normalize;
mod synth;

pub use discretize::{discretize_survival, TimeBins};
pub use folds::{make_folds, FoldAssignment};
pub use load::{
    load_cohort, load_from_manifest, CohortManifest, ManifestEntry, EXPRESSION_FILE, MANIFEST_FILE,
    PATHWAY_FILE,
};
pub use normalize::PathwayNormalizer;
pub use synth::{
    generate_synthetic, read_patch_clusters, CaseTruth, PathwaySpec, SynthConfig, SyntheticCohort,
    PATCH_CLUSTER_FILE, TRUTH_FILE,
};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;

/// One patient.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub case_id: String,
    /// `N_H × D_in` patch embeddings, one row per patch.
    pub patch_embeddings: Tensor,
    /// One expression vector per pathway, in pathway order.
    pub pathway_inputs: Vec<Vec<f64>>,
    pub survival_months: f64,
    /// `true` when death was observed, `false` when censored.
    pub event: bool,
    /// Discrete time bin, set by [`discretize_survival`] or [`TimeBins::assign`].
    pub bin: Option<usize>,
}

impl CaseRecord {
    pub fn n_patches(&self) -> usize {
        self.patch_embeddings.shape()[0]
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_embeddings.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathwayDefinition {
    pub name: String,
    pub gene_ids: Vec<String>,
}

/// Loaded cases plus the pathway definitions their inputs follow. Pathway
/// gene lists here are the effective ones, after dropping genes absent from
/// the expression matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub cases: Vec<CaseRecord>,
    pub pathways: Vec<PathwayDefinition>,
}

impl Cohort {
    pub fn pathway_sizes(&self) -> Vec<usize> {
        self.pathways.iter().map(|p| p.gene_ids.len()).collect()
    }

    pub fn patch_dim(&self) -> Option<usize> {
        self.cases.first().map(CaseRecord::patch_dim)
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<CaseRecord> {
        indices.iter().map(|&i| self.cases[i].clone()).collect()
    }
}
