//! Planted-signal synthetic cohorts.
//!
//! Patches are drawn around cluster centres, one of which (cluster 0) is
//! "malignant". Each case has a malignant fraction and a latent activity per
//! pathway. The latent risk is the standardised malignant fraction plus the
//! standardised mean activity of the designated signal pathways, and the
//! survival time is exponential with log-rate linear in that risk.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::formats::{encode_embedding, write_expression, write_pathways, ExpressionMatrix};
use super::load::{CohortManifest, ManifestEntry, EXPRESSION_FILE, MANIFEST_FILE, PATHWAY_FILE};
use super::{CaseRecord, Cohort, PathwayDefinition};
use crate::autodiff::Tensor;
use crate::error::{AplError, Result};
use crate::survival::{c_index, ConcordanceReport};

/// Log-hazard change per unit of latent risk at `signal_strength = 1`.
pub const LOG_HAZARD_PER_SIGNAL: f64 = 5.0;
/// Median survival, in months, of a case with zero latent risk.
pub const BASELINE_MEDIAN_MONTHS: f64 = 24.0;
/// Within-pathway gene noise relative to the pathway activity.
const GENE_NOISE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathwaySpec {
    pub n_pathways: usize,
    pub min_genes: usize,
    pub max_genes: usize,
    /// The first `signal_pathways` pathways drive the genomic part of the risk.
    pub signal_pathways: usize,
}

impl Default for PathwaySpec {
    fn default() -> Self {
        PathwaySpec {
            n_pathways: 8,
            min_genes: 6,
            max_genes: 12,
            signal_pathways: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_cases: usize,
    pub min_patches: usize,
    pub max_patches: usize,
    pub d_in: usize,
    pub pathways: PathwaySpec,
    pub benign_clusters: usize,
    pub max_malignant_fraction: f64,
    pub patch_noise: f64,
    pub signal_strength: f64,
    pub censor_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_cases: 200,
            min_patches: 16,
            max_patches: 48,
            d_in: 32,
            pathways: PathwaySpec::default(),
            benign_clusters: 4,
            max_malignant_fraction: 0.5,
            patch_noise: 0.5,
            signal_strength: 2.0,
            censor_rate: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AplError::Config(format!("synthetic cohort: {m}")));
        let p = &self.pathways;
        if self.n_cases < 2 {
            return bad("need at least 2 cases");
        }
        if self.min_patches == 0 || self.min_patches > self.max_patches {
            return bad("patch range must satisfy 1 <= min <= max");
        }
        if self.d_in == 0 {
            return bad("d_in must be positive");
        }
        if p.n_pathways == 0 || p.min_genes == 0 || p.min_genes > p.max_genes {
            return bad("pathway spec needs >= 1 pathway and 1 <= min_genes <= max_genes");
        }
        if p.signal_pathways > p.n_pathways {
            return bad("more signal pathways than pathways");
        }
        if self.benign_clusters == 0 {
            return bad("need at least one benign cluster");
        }
        if !(self.max_malignant_fraction > 0.0 && self.max_malignant_fraction <= 1.0) {
            return bad("max_malignant_fraction must lie in (0, 1]");
        }
        if !(self.patch_noise >= 0.0 && self.patch_noise.is_finite()) {
            return bad("patch_noise must be non-negative");
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return bad("signal_strength must be non-negative");
        }
        if !(0.0..1.0).contains(&self.censor_rate) {
            return bad("censor_rate must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Ground truth kept alongside a generated case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTruth {
    pub case_id: String,
    pub latent_risk: f64,
    pub malignant_fraction: f64,
    pub genomic_activity: f64,
    /// Cluster of each patch; 0 is the malignant cluster.
    #[serde(skip)]
    pub patch_clusters: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub config: SynthConfig,
    pub cohort: Cohort,
    pub truth: Vec<CaseTruth>,
    /// C-index of the latent risk itself against the generated outcomes.
    pub oracle: ConcordanceReport,
}

impl SyntheticCohort {
    pub fn generate(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

        let centres: Vec<Vec<f64>> = (0..=config.benign_clusters)
            .map(|_| (0..config.d_in).map(|_| normal(&mut rng)).collect())
            .collect();

        let spec = &config.pathways;
        let mut pathways = Vec::with_capacity(spec.n_pathways);
        let mut gene_offset = Vec::new();
        let mut gene_scale = Vec::new();
        for p in 0..spec.n_pathways {
            let n_genes = rng.random_range(spec.min_genes..=spec.max_genes);
            let start = gene_offset.len();
            let gene_ids = (start..start + n_genes).map(|g| format!("G{g:05}")).collect();
            for _ in 0..n_genes {
                gene_offset.push(5.0 + normal(&mut rng));
                gene_scale.push(rng.random_range(0.5..2.0));
            }
            pathways.push(PathwayDefinition {
                name: format!("PATHWAY_{p:03}"),
                gene_ids,
            });
        }

        let frac_mean = config.max_malignant_fraction / 2.0;
        let frac_std = config.max_malignant_fraction / 12f64.sqrt();
        let log_rate0 = (std::f64::consts::LN_2 / BASELINE_MEDIAN_MONTHS).ln();

        let mut cases = Vec::with_capacity(config.n_cases);
        let mut truth = Vec::with_capacity(config.n_cases);
        for i in 0..config.n_cases {
            let case_id = format!("case_{i:04}");
            let n_patches = rng.random_range(config.min_patches..=config.max_patches);
            let p_malignant = rng.random_range(0.0..config.max_malignant_fraction);
            let mut clusters = Vec::with_capacity(n_patches);
            let mut patches = Vec::with_capacity(n_patches * config.d_in);
            for _ in 0..n_patches {
                let cluster = if rng.random_bool(p_malignant) {
                    0
                } else {
                    rng.random_range(1..=config.benign_clusters)
                };
                clusters.push(cluster);
                for &c in &centres[cluster] {
                    let v = c + config.patch_noise * normal(&mut rng);
                    // stored as f32 on disk
                    patches.push(v as f32 as f64);
                }
            }

            let activity: Vec<f64> = (0..spec.n_pathways).map(|_| normal(&mut rng)).collect();
            let mut pathway_inputs = Vec::with_capacity(spec.n_pathways);
            let mut gene = 0;
            for (p, def) in pathways.iter().enumerate() {
                let values = def
                    .gene_ids
                    .iter()
                    .map(|_| {
                        let v = gene_offset[gene]
                            + gene_scale[gene] * (activity[p] + GENE_NOISE * normal(&mut rng));
                        gene += 1;
                        v
                    })
                    .collect();
                pathway_inputs.push(values);
            }

            let malignant_fraction =
                clusters.iter().filter(|&&c| c == 0).count() as f64 / n_patches as f64;
            let z_hist = (malignant_fraction - frac_mean) / frac_std;
            let (genomic_activity, latent_risk) = if spec.signal_pathways > 0 {
                let g = activity[..spec.signal_pathways].iter().sum::<f64>()
                    / spec.signal_pathways as f64;
                let z_gene = g * (spec.signal_pathways as f64).sqrt();
                (g, (z_hist + z_gene) / 2f64.sqrt())
            } else {
                (0.0, z_hist)
            };

            let rate = (log_rate0
                + LOG_HAZARD_PER_SIGNAL * config.signal_strength * latent_risk)
                .exp();
            let event_time: f64 = Exp::new(rate)
                .map_err(|e| AplError::Config(format!("hazard rate {rate}: {e}")))?
                .sample(&mut rng);
            let censored = rng.random_bool(config.censor_rate);
            let survival_months = if censored {
                event_time * rng.random_range(0.0..1.0)
            } else {
                event_time
            };

            cases.push(CaseRecord {
                case_id: case_id.clone(),
                patch_embeddings: Tensor::matrix(n_patches, config.d_in, patches)?,
                pathway_inputs,
                survival_months,
                event: !censored,
                bin: None,
            });
            truth.push(CaseTruth {
                case_id,
                latent_risk,
                malignant_fraction,
                genomic_activity,
                patch_clusters: clusters,
            });
        }

        let risks: Vec<f64> = truth.iter().map(|t| t.latent_risk).collect();
        let times: Vec<f64> = cases.iter().map(|c| c.survival_months).collect();
        let events: Vec<bool> = cases.iter().map(|c| c.event).collect();
        let oracle = c_index(&risks, &times, &events)?;

        Ok(SyntheticCohort {
            config: config.clone(),
            cohort: Cohort { cases, pathways },
            truth,
            oracle,
        })
    }

    /// Writes the cohort into `out_dir`, which must not exist or be empty.
    /// Files are assembled in a sibling temporary directory and moved into
    /// place with a single rename.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        crate::write_dir_atomic(out_dir, |dir| self.write_files(dir))
    }

    fn write_files(&self, dir: &Path) -> Result<()> {
        let emb_dir = dir.join("embeddings");
        fs::create_dir_all(&emb_dir)?;
        let mut entries = Vec::with_capacity(self.cohort.cases.len());
        for c in &self.cohort.cases {
            let rel = format!("embeddings/{}.pemb", c.case_id);
            let values: Vec<f32> = c.patch_embeddings.data().iter().map(|&v| v as f32).collect();
            fs::write(
                dir.join(&rel),
                encode_embedding(c.n_patches(), c.patch_dim(), &values)?,
            )?;
            entries.push(ManifestEntry {
                case_id: c.case_id.clone(),
                embedding_path: rel,
                survival_months: c.survival_months,
                event: c.event as u8,
            });
        }
        CohortManifest {
            entries,
            root: dir.to_path_buf(),
            expression_path: dir.join(EXPRESSION_FILE),
            pathway_path: dir.join(PATHWAY_FILE),
        }
        .write(&dir.join(MANIFEST_FILE))?;

        let gene_ids: Vec<String> = self
            .cohort
            .pathways
            .iter()
            .flat_map(|p| p.gene_ids.iter().cloned())
            .collect();
        let per_case: Vec<Vec<f64>> = self
            .cohort
            .cases
            .iter()
            .map(|c| c.pathway_inputs.concat())
            .collect();
        let values = (0..gene_ids.len())
            .map(|g| per_case.iter().map(|v| v[g]).collect())
            .collect();
        let matrix = ExpressionMatrix::new(
            self.cohort.cases.iter().map(|c| c.case_id.clone()).collect(),
            gene_ids,
            values,
        )?;
        write_expression(&dir.join(EXPRESSION_FILE), &matrix)?;
        write_pathways(&dir.join(PATHWAY_FILE), &self.cohort.pathways)?;

        let mut w = csv::Writer::from_path(dir.join(TRUTH_FILE))?;
        for t in &self.truth {
            w.serialize(t)?;
        }
        w.flush()?;

        let mut f = fs::File::create(dir.join(PATCH_CLUSTER_FILE))?;
        writeln!(f, "case_id,patch_index,cluster")?;
        for t in &self.truth {
            for (i, c) in t.patch_clusters.iter().enumerate() {
                writeln!(f, "{},{i},{c}", t.case_id)?;
            }
        }

        let echo = serde_json::json!({
            "config": self.config,
            "signal_pathways": self.cohort.pathways[..self.config.pathways.signal_pathways]
                .iter().map(|p| p.name.clone()).collect::<Vec<_>>(),
            "oracle": self.oracle,
        });
        fs::write(dir.join(SYNTH_CONFIG_FILE), crate::canonical_json(&echo)? + "\n")?;
        Ok(())
    }
}

pub const TRUTH_FILE: &str = "truth.csv";
pub const PATCH_CLUSTER_FILE: &str = "patch_clusters.csv";
pub const SYNTH_CONFIG_FILE: &str = "synth_config.json";

/// Generates a cohort and writes it to `out_dir`.
pub fn generate_synthetic(config: &SynthConfig, out_dir: &Path) -> Result<SyntheticCohort> {
    let cohort = SyntheticCohort::generate(config)?;
    cohort.write(out_dir)?;
    Ok(cohort)
}

/// Reads `patch_clusters.csv` from a generated cohort directory.
pub fn read_patch_clusters(dir: &Path) -> Result<std::collections::HashMap<String, Vec<usize>>> {
    let mut out: std::collections::HashMap<String, Vec<usize>> = Default::default();
    let mut rdr = csv::Reader::from_path(dir.join(PATCH_CLUSTER_FILE))?;
    for rec in rdr.deserialize() {
        let (case_id, idx, cluster): (String, usize, usize) = rec?;
        let v = out.entry(case_id).or_default();
        if v.len() != idx {
            return Err(AplError::Data("patch_clusters.csv rows out of order".into()));
        }
        v.push(cluster);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_cohort;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_cases: 30,
            min_patches: 3,
            max_patches: 7,
            d_in: 6,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn bit_reproducible() {
        let a = SyntheticCohort::generate(&small(4)).unwrap();
        let b = SyntheticCohort::generate(&small(4)).unwrap();
        assert_eq!(a, b);
        let c = SyntheticCohort::generate(&small(5)).unwrap();
        assert_ne!(a.cohort, c.cohort);
    }

    #[test]
    fn no_censoring_means_all_events() {
        let cfg = SynthConfig {
            censor_rate: 0.0,
            ..small(1)
        };
        let s = SyntheticCohort::generate(&cfg).unwrap();
        assert!(s.cohort.cases.iter().all(|c| c.event));
    }

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("cohort");
        let s = generate_synthetic(&small(2), &out).unwrap();
        let loaded = load_cohort(&out.join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded, s.cohort);
        let clusters = read_patch_clusters(&out).unwrap();
        assert_eq!(clusters["case_0003"], s.truth[3].patch_clusters);
        // refuses to overwrite
        assert!(generate_synthetic(&small(2), &out).is_err());
    }

    #[test]
    fn rejects_unsatisfiable_ranges() {
        let bad = SynthConfig {
            min_patches: 9,
            max_patches: 3,
            ..small(0)
        };
        assert!(SyntheticCohort::generate(&bad).is_err());
        let bad = SynthConfig {
            censor_rate: 1.0,
            ..small(0)
        };
        assert!(bad.validate().is_err());
        let bad = SynthConfig {
            signal_strength: -1.0,
            ..small(0)
        };
        assert!(bad.validate().is_err());
    }
}
