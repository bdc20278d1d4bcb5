use serde::{Deserialize, Serialize};

use crate::error::{AplError, Result};

/// Which of the three components are active. The four published rows are
/// available from [`AblationConfig::table_rows`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub use_hist_prototypes: bool,
    pub use_gene_prototypes: bool,
    pub use_self_attention: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self::FULL
    }
}

impl AblationConfig {
    pub const BASELINE: Self = AblationConfig {
        use_hist_prototypes: false,
        use_gene_prototypes: false,
        use_self_attention: false,
    };
    pub const HIST: Self = AblationConfig {
        use_hist_prototypes: true,
        use_gene_prototypes: false,
        use_self_attention: false,
    };
    pub const HIST_GENE: Self = AblationConfig {
        use_hist_prototypes: true,
        use_gene_prototypes: true,
        use_self_attention: false,
    };
    pub const FULL: Self = AblationConfig {
        use_hist_prototypes: true,
        use_gene_prototypes: true,
        use_self_attention: true,
    };

    /// Baseline concatenation, +histology prototypes, +genomic prototypes,
    /// +mixed self-attention.
    pub fn table_rows() -> [Self; 4] {
        [Self::BASELINE, Self::HIST, Self::HIST_GENE, Self::FULL]
    }

    pub fn label(&self) -> String {
        let mark = |b: bool| if b { "x" } else { "-" };
        format!(
            "hist={} geno={} self-attn={}",
            mark(self.use_hist_prototypes),
            mark(self.use_gene_prototypes),
            mark(self.use_self_attention)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AplConfig {
    /// Patch embedding width.
    pub d_in: usize,
    /// Shared token width; also the attention scale dimension.
    pub d_model: usize,
    pub snn_hidden: usize,
    pub n_hist_queries: usize,
    pub n_gene_queries: usize,
    pub n_bins: usize,
    /// Alpha-dropout rate inside the pathway encoders (training only).
    pub dropout: f64,
    /// Adds the input back onto the fused prototypes. Off by default.
    pub residual_fusion: bool,
    pub ablation: AblationConfig,
    pub seed: u64,
}

impl Default for AplConfig {
    fn default() -> Self {
        AplConfig {
            d_in: 1024,
            d_model: 256,
            snn_hidden: 512,
            n_hist_queries: 300,
            n_gene_queries: 128,
            n_bins: 4,
            dropout: 0.25,
            residual_fusion: false,
            ablation: AblationConfig::FULL,
            seed: 0,
        }
    }
}

impl AplConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_in", self.d_in),
            ("d_model", self.d_model),
            ("snn_hidden", self.snn_hidden),
            ("n_hist_queries", self.n_hist_queries),
            ("n_gene_queries", self.n_gene_queries),
            ("n_bins", self.n_bins),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(AplError::Config(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AplError::Config("dropout must lie in [0, 1)".into()));
        }
        let a = &self.ablation;
        if a.use_self_attention && !(a.use_hist_prototypes || a.use_gene_prototypes) {
            return Err(AplError::Config(
                "self-attention fusion requires at least one prototype branch".into(),
            ));
        }
        Ok(())
    }

    /// Width of the vector the predictor sees.
    pub fn predictor_in(&self) -> usize {
        if self.ablation.use_self_attention {
            self.d_model
        } else {
            2 * self.d_model
        }
    }
}
