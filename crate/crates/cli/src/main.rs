use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};

use apl_core::data::formats::{write_predictions, Prediction};
use apl_core::data::{generate_synthetic, load_cohort, Cohort, SynthConfig};
use apl_core::harness::{evaluate, run_ablation, run_cv_folds, ABLATION_CSV, ABLATION_JSON};
use apl_core::model::{export_interpretation, Checkpoint};
use apl_core::{canonical_json, write_dir_atomic, AplError};

mod config;

use config::{read_json, RunConfigFile};

const RUN_CONFIG_JSON: &str = "run_config.json";

/// Marks errors caused by bad arguments or input files rather than by the
/// computation itself; these exit with status 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser)]
#[command(name = "apl", version, about = "Multimodal survival prediction from slide patches and pathway expression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with a planted prognostic signal.
    SynthData(SynthArgs),
    /// Cross-validate a model described by a run config.
    Train(TrainArgs),
    /// Score a checkpoint on a cohort and print its C-index.
    Eval(EvalArgs),
    /// Run the four component configurations on identical folds.
    Ablate(AblateArgs),
    /// Dump prototype attention maps for one case.
    ExportAttn(ExportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Base generator settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    signal: Option<f64>,
    #[arg(long)]
    censor_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_patches: Option<usize>,
    #[arg(long)]
    max_patches: Option<usize>,
    #[arg(long)]
    d_in: Option<usize>,
    #[arg(long)]
    pathways: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Train only these folds (repeatable). Default: all.
    #[arg(long = "fold")]
    folds: Vec<usize>,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Also write per-case risks as CSV.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    case: String,
    /// Patches listed per histology prototype.
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    /// Pathways listed per genomic prototype.
    #[arg(long, default_value_t = 6)]
    top_k_pathways: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::ExportAttn(a) => export_attn(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(err: &anyhow::Error) -> u8 {
    let invalid = err.chain().any(|c| {
        c.is::<Invalid>() || matches!(c.downcast_ref::<AplError>(), Some(AplError::Config(_)))
    });
    if invalid {
        2
    } else {
        1
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn ensure_fresh_dir(dir: &Path) -> anyhow::Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    let empty = dir.is_dir() && fs::read_dir(dir)?.next().is_none();
    if !empty {
        return Err(invalid(format!("{}: output path exists and is not an empty directory", dir.display())));
    }
    Ok(())
}

fn ensure_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(invalid(format!("{}: no such file", path.display())));
    }
    Ok(())
}

fn synth_data(a: SynthArgs) -> anyhow::Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(v) = a.cases {
        cfg.n_cases = v;
    }
    if let Some(v) = a.signal {
        cfg.signal_strength = v;
    }
    if let Some(v) = a.censor_rate {
        cfg.censor_rate = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.min_patches {
        cfg.min_patches = v;
    }
    if let Some(v) = a.max_patches {
        cfg.max_patches = v;
    }
    if let Some(v) = a.d_in {
        cfg.d_in = v;
    }
    if let Some(v) = a.pathways {
        cfg.pathways.n_pathways = v;
        cfg.pathways.signal_pathways = cfg.pathways.signal_pathways.min(v);
    }
    cfg.validate()?;
    ensure_fresh_dir(&a.out)?;

    let synth = generate_synthetic(&cfg, &a.out)?;
    let events = synth.cohort.cases.iter().filter(|c| c.event).count();
    println!(
        "wrote {} cases ({} events) to {}",
        synth.cohort.cases.len(),
        events,
        a.out.display()
    );
    println!(
        "oracle C-index: {:.4} ({} comparable pairs)",
        synth.oracle.c_index, synth.oracle.comparable_pairs
    );
    Ok(())
}

fn load_run(config: &Path) -> anyhow::Result<(RunConfigFile, Cohort)> {
    let run = RunConfigFile::load(config)?;
    ensure_file(&run.manifest)?;
    let cohort = load_cohort(&run.manifest)?;
    if let Some(d) = cohort.patch_dim() {
        if d != run.model.d_in {
            return Err(invalid(format!(
                "{}: model.d_in is {} but the cohort's patch embeddings have width {d}",
                config.display(),
                run.model.d_in
            )));
        }
    }
    Ok((run, cohort))
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let (run, cohort) = load_run(&a.config)?;
    let out = run.output_dir(a.out.as_ref())?;
    let folds: Vec<usize> = if a.folds.is_empty() {
        (0..run.train.folds).collect()
    } else {
        a.folds.clone()
    };
    if let Some(&bad) = folds.iter().find(|&&k| k >= run.train.folds) {
        return Err(invalid(format!("--fold {bad} out of range for {} folds", run.train.folds)));
    }
    ensure_fresh_dir(&out)?;

    let cv = run_cv_folds(&cohort, &run.model, &run.train, &folds)?;
    let echo = canonical_json(&run)?;
    write_dir_atomic(&out, |dir| {
        cv.write_into(dir)?;
        fs::write(dir.join(RUN_CONFIG_JSON), &echo)?;
        Ok(())
    })?;
    for f in &cv.report.folds {
        println!("fold {}: C-index {:.4}", f.fold, f.c_index);
    }
    println!(
        "mean C-index {:.4} ± {:.4} over {} folds; outputs in {}",
        cv.report.mean,
        cv.report.std,
        cv.report.folds.len(),
        out.display()
    );
    Ok(())
}

fn load_checkpoint_and_cohort(checkpoint: &Path, manifest: &Path) -> anyhow::Result<(Checkpoint, Cohort)> {
    ensure_file(checkpoint)?;
    ensure_file(manifest)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let cohort = load_cohort(manifest)?;
    Ok((ckpt, cohort))
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let (ckpt, cohort) = load_checkpoint_and_cohort(&a.checkpoint, &a.manifest)?;
    let cases = ckpt.prepare_cases(&cohort).map_err(|e| invalid(e.to_string()))?;
    let result = evaluate(&ckpt.model, &cases)?;
    if let Some(path) = &a.predictions {
        let rows: Vec<Prediction> = cases
            .iter()
            .zip(&result.risks)
            .map(|(c, &risk)| Prediction {
                case_id: c.case_id.clone(),
                risk,
                survival_months: c.survival_months,
                event: c.event as u8,
            })
            .collect();
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
        let tmp = tempfile::NamedTempFile::new_in(parent.unwrap_or(Path::new(".")))
            .with_context(|| format!("{}: cannot create temporary file", path.display()))?;
        write_predictions(tmp.path(), &rows)?;
        tmp.persist(path)
            .with_context(|| format!("{}: cannot write predictions", path.display()))?;
    }
    println!("{}", canonical_json(&result.report)?);
    Ok(())
}

fn ablate(a: AblateArgs) -> anyhow::Result<()> {
    let (run, cohort) = load_run(&a.config)?;
    let out = run.output_dir(a.out.as_ref())?;
    ensure_fresh_dir(&out)?;

    let (table, runs) = run_ablation(&cohort, &run.dataset_name(), &run.model, &run.train)?;
    let echo = canonical_json(&run)?;
    write_dir_atomic(&out, |dir| {
        fs::write(dir.join(ABLATION_CSV), table.to_csv()?)?;
        fs::write(dir.join(ABLATION_JSON), table.to_json()?)?;
        fs::write(dir.join(RUN_CONFIG_JSON), &echo)?;
        for (i, cv) in runs.iter().enumerate() {
            let row_dir = dir.join(format!("row_{i}"));
            fs::create_dir_all(&row_dir)?;
            cv.write_into(&row_dir)?;
        }
        Ok(())
    })?;
    print!("{}", table.to_csv()?);
    Ok(())
}

fn export_attn(a: ExportArgs) -> anyhow::Result<()> {
    if a.top_k == 0 || a.top_k_pathways == 0 {
        return Err(invalid("--top-k and --top-k-pathways must be at least 1"));
    }
    let (ckpt, cohort) = load_checkpoint_and_cohort(&a.checkpoint, &a.manifest)?;
    let cases = ckpt.prepare_cases(&cohort).map_err(|e| invalid(e.to_string()))?;
    let case = cases
        .iter()
        .find(|c| c.case_id == a.case)
        .ok_or_else(|| invalid(format!("case '{}' not found in {}", a.case, a.manifest.display())))?;
    ensure_fresh_dir(&a.out)?;

    let report = export_interpretation(&ckpt.model, case, a.top_k, a.top_k_pathways)?;
    write_dir_atomic(&a.out, |dir| report.write_csv(dir).map(drop))?;
    println!(
        "case {}: {} histology and {} genomic prototypes written to {}",
        report.case_id,
        report.hist.len(),
        report.gene.len(),
        a.out.display()
    );
    Ok(())
}
