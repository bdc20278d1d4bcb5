//! Training loop, cross-validation and the component ablation.
//!
//! A batch is a list of cases of varying size, so each case is run on the
//! shared tape, the per-case losses are averaged, and one backward pass and
//! one AdamW step follow. Folds run in parallel on rayon's pool.

mod cv;
mod train;

pub use cv::{
    fold_seed, run_ablation, run_cv, run_cv_folds, run_fold, AblationRow, AblationTable, CvRun, FoldArtifacts,
    FoldReport, FoldResult, ABLATION_CSV, ABLATION_JSON, FOLD_REPORT_CSV, FOLD_REPORT_JSON,
    TIMING_CSV,
};
pub use train::{evaluate, train_fold, train_model, Evaluation, TrainConfig, TrainedFold};
