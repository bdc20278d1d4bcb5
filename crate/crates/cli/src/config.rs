use std::path::{Path, PathBuf};

use anyhow::Context as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use apl_core::harness::TrainConfig;
use apl_core::model::AplConfig;

use crate::Invalid;

/// JSON run description shared by `train` and `ablate`. Relative paths are
/// resolved against the directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub manifest: PathBuf,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Column label in ablation tables; defaults to the cohort directory name.
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub model: AplConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

/// Parses a JSON file, reporting syntax and schema errors as `path:line:col`.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("{}: cannot read config", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| Invalid(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())).into())
}

impl RunConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let mut cfg: RunConfigFile = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.output_dir = cfg.output_dir.map(|p| base.join(p));
        cfg.model
            .validate()
            .map_err(|e| Invalid(format!("{}: model: {e}", path.display())))?;
        cfg.train
            .validate()
            .map_err(|e| Invalid(format!("{}: train: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            self.manifest
                .parent()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "cohort".into())
        })
    }

    pub fn output_dir(&self, flag: Option<&PathBuf>) -> anyhow::Result<PathBuf> {
        flag.cloned()
            .or_else(|| self.output_dir.clone())
            .ok_or_else(|| Invalid("no output directory: set output_dir in the config or pass --out".into()).into())
    }
}
