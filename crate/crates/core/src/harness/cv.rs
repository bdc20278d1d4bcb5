use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{evaluate, train_fold, TrainConfig};
use crate::data::formats::{write_predictions, Prediction};
use crate::data::{make_folds, Cohort, FoldAssignment, PathwayNormalizer, TimeBins};
use crate::error::{AplError, Result};
use crate::model::{AblationConfig, AplConfig, Checkpoint};

pub const FOLD_REPORT_JSON: &str = "fold_report.json";
pub const FOLD_REPORT_CSV: &str = "fold_report.csv";
pub const TIMING_CSV: &str = "timing.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const ABLATION_JSON: &str = "ablation.json";

/// Per-fold seed so folds do not share initialisations or shuffles.
pub fn fold_seed(base: u64, fold: usize) -> u64 {
    base.wrapping_add((fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub c_index: f64,
    pub comparable_pairs: u64,
    pub concordant: u64,
    pub tied: u64,
    pub final_train_loss: f64,
}

/// Cross-validated test C-index. Everything here is a pure function of the
/// inputs and seeds; wall-clock times live in [`CvRun::wall_time_s`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub model_config: AplConfig,
    pub train_config: TrainConfig,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl FoldReport {
    pub fn new(folds: Vec<FoldResult>, model_config: AplConfig, train_config: TrainConfig) -> Self {
        let (mean, std) = mean_std(&folds.iter().map(|f| f.c_index).collect::<Vec<_>>());
        FoldReport {
            folds,
            mean,
            std,
            model_config,
            train_config,
        }
    }

    pub fn c_indices(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.c_index).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        crate::canonical_json(self)
    }

    /// One row per fold, then `mean` and `std` rows carrying only the C-index.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "fold",
            "n_train",
            "n_test",
            "c_index",
            "comparable_pairs",
            "concordant",
            "tied",
            "final_train_loss",
        ])?;
        for f in &self.folds {
            w.write_record([
                f.fold.to_string(),
                f.n_train.to_string(),
                f.n_test.to_string(),
                f.c_index.to_string(),
                f.comparable_pairs.to_string(),
                f.concordant.to_string(),
                f.tied.to_string(),
                f.final_train_loss.to_string(),
            ])?;
        }
        for (label, v) in [("mean", self.mean), ("std", self.std)] {
            w.write_record([label, "", "", &v.to_string(), "", "", "", ""])?;
        }
        let bytes = w.into_inner().map_err(|e| AplError::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Everything one fold produced besides its [`FoldResult`].
#[derive(Debug, Clone)]
pub struct FoldArtifacts {
    pub checkpoint: Checkpoint,
    pub predictions: Vec<Prediction>,
    pub loss_history: Vec<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct CvRun {
    pub report: FoldReport,
    pub assignment: FoldAssignment,
    pub folds: Vec<FoldArtifacts>,
}

impl CvRun {
    pub fn wall_time_s(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.wall_time_s).collect()
    }

    /// Writes the report, per-fold checkpoints, predictions and loss
    /// curves into a fresh `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        crate::write_dir_atomic(out_dir, |dir| self.write_into(dir))
    }

    pub fn write_into(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(FOLD_REPORT_JSON), self.report.to_json()?)?;
        fs::write(dir.join(FOLD_REPORT_CSV), self.report.to_csv()?)?;
        let mut timing = String::from("fold,wall_time_s\n");
        for (result, f) in self.report.folds.iter().zip(&self.folds) {
            let k = result.fold;
            timing.push_str(&format!("{k},{:.3}\n", f.wall_time_s));
            let fold_dir = dir.join(format!("fold_{k}"));
            fs::create_dir_all(&fold_dir)?;
            f.checkpoint.save(&fold_dir.join("model.aplc"))?;
            write_predictions(&fold_dir.join("predictions.csv"), &f.predictions)?;
            let mut curve = String::from("epoch,loss\n");
            for (e, l) in f.loss_history.iter().enumerate() {
                curve.push_str(&format!("{e},{l}\n"));
            }
            fs::write(fold_dir.join("loss_history.csv"), curve)?;
        }
        fs::write(dir.join(TIMING_CSV), timing)?;
        Ok(())
    }
}

/// Trains and evaluates a single fold. Time bins and expression statistics
/// are fitted on the training split only.
pub fn run_fold(
    cohort: &Cohort,
    assignment: &FoldAssignment,
    fold: usize,
    apl: &AplConfig,
    tc: &TrainConfig,
) -> Result<(FoldResult, FoldArtifacts)> {
    let start = Instant::now();
    let mut train = cohort.subset(&assignment.train_indices(fold));
    let mut test = cohort.subset(&assignment.test_indices(fold));
    if train.is_empty() || test.is_empty() {
        return Err(AplError::Data(format!("fold {fold} has an empty split")));
    }
    let bins = TimeBins::fit(&train, apl.n_bins)?;
    bins.assign(&mut train);
    bins.assign(&mut test);
    let normalizer = PathwayNormalizer::fit(&train)?;
    normalizer.apply(&mut train)?;
    normalizer.apply(&mut test)?;

    let apl = AplConfig {
        seed: fold_seed(apl.seed, fold),
        ..apl.clone()
    };
    let tc_fold = TrainConfig {
        seed: fold_seed(tc.seed, fold),
        ..tc.clone()
    };
    let trained = train_fold(&train, &cohort.pathways, &apl, &tc_fold)?;
    let eval = evaluate(&trained.model, &test)?;
    log::info!(
        "fold {fold}: test C-index {:.4} ({} comparable pairs)",
        eval.report.c_index,
        eval.report.comparable_pairs
    );

    let predictions = test
        .iter()
        .zip(&eval.risks)
        .map(|(c, &risk)| Prediction {
            case_id: c.case_id.clone(),
            risk,
            survival_months: c.survival_months,
            event: c.event as u8,
        })
        .collect();
    let result = FoldResult {
        fold,
        n_train: train.len(),
        n_test: test.len(),
        c_index: eval.report.c_index,
        comparable_pairs: eval.report.comparable_pairs,
        concordant: eval.report.concordant,
        tied: eval.report.tied,
        final_train_loss: *trained.loss_history.last().expect("at least one epoch"),
    };
    let artifacts = FoldArtifacts {
        checkpoint: Checkpoint {
            model: trained.model,
            normalizer: Some(normalizer),
            time_bins: Some(bins),
        },
        predictions,
        loss_history: trained.loss_history,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((result, artifacts))
}

/// `tc.folds`-fold cross-validation. Folds train in parallel; results are
/// identical to a sequential run.
pub fn run_cv(cohort: &Cohort, apl: &AplConfig, tc: &TrainConfig) -> Result<CvRun> {
    run_cv_folds(cohort, apl, tc, &(0..tc.folds).collect::<Vec<_>>())
}

/// Like [`run_cv`] but only trains the listed folds of the same split.
pub fn run_cv_folds(
    cohort: &Cohort,
    apl: &AplConfig,
    tc: &TrainConfig,
    folds: &[usize],
) -> Result<CvRun> {
    apl.validate()?;
    tc.validate()?;
    if let Some(&bad) = folds.iter().find(|&&k| k >= tc.folds) {
        return Err(AplError::Config(format!(
            "fold {bad} out of range for {} folds",
            tc.folds
        )));
    }
    if folds.is_empty() {
        return Err(AplError::Config("no folds selected".into()));
    }
    let assignment = make_folds(&cohort.cases, tc.folds, tc.seed)?;
    let outcomes = folds
        .par_iter()
        .map(|&k| run_fold(cohort, &assignment, k, apl, tc))
        .collect::<Result<Vec<_>>>()?;
    let (results, artifacts): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    Ok(CvRun {
        report: FoldReport::new(results, apl.clone(), tc.clone()),
        assignment,
        folds: artifacts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub ablation: AblationConfig,
    pub report: FoldReport,
}

/// The four component configurations, in order, on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub dataset: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn baseline(&self) -> &FoldReport {
        &self.rows[0].report
    }

    pub fn full(&self) -> &FoldReport {
        &self.rows[3].report
    }

    pub fn to_json(&self) -> Result<String> {
        crate::canonical_json(self)
    }

    /// Columns: the three component marks, the dataset's mean and std, and
    /// the average over datasets (a single dataset here).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let ds = &self.dataset;
        w.write_record([
            "hist".to_string(),
            "geno".to_string(),
            "self_attn".to_string(),
            format!("{ds}_mean"),
            format!("{ds}_std"),
            "avg".to_string(),
        ])?;
        let mark = |b: bool| if b { "x" } else { "" }.to_string();
        for r in &self.rows {
            w.write_record([
                mark(r.ablation.use_hist_prototypes),
                mark(r.ablation.use_gene_prototypes),
                mark(r.ablation.use_self_attention),
                r.report.mean.to_string(),
                r.report.std.to_string(),
                r.report.mean.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| AplError::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        crate::write_dir_atomic(out_dir, |dir| {
            fs::write(dir.join(ABLATION_CSV), self.to_csv()?)?;
            fs::write(dir.join(ABLATION_JSON), self.to_json()?)?;
            Ok(())
        })
    }
}

/// Runs [`run_cv`] under each component configuration with identical folds
/// and seeds. `apl.ablation` is ignored.
pub fn run_ablation(
    cohort: &Cohort,
    dataset: &str,
    apl: &AplConfig,
    tc: &TrainConfig,
) -> Result<(AblationTable, Vec<CvRun>)> {
    let mut rows = Vec::with_capacity(4);
    let mut runs = Vec::with_capacity(4);
    for ablation in AblationConfig::table_rows() {
        let config = AplConfig {
            ablation,
            ..apl.clone()
        };
        log::info!("ablation row: {}", ablation.label());
        let run = run_cv(cohort, &config, tc)?;
        rows.push(AblationRow {
            label: ablation.label(),
            ablation,
            report: run.report.clone(),
        });
        runs.push(run);
    }
    Ok((
        AblationTable {
            dataset: dataset.to_string(),
            rows,
        },
        runs,
    ))
}
