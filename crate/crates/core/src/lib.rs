//! Adaptive prototype learning for multimodal survival analysis.
//!
//! Histology patch embeddings and pathway-grouped transcriptomics are each
//! compressed by a bank of learnable queries through cross-attention, the
//! resulting prototypes are fused with one joint self-attention layer, and a
//! discrete-time hazard head is trained with a censored NLL.
//!
//! Module map:
//! * [`autodiff`]: tensors, reverse-mode tape, AdamW, gradient checking
//! * [`data`]: cohort files, time bins, folds, normalisation, synthetic cohorts
//! * [`model`]: the network, checkpoints and attention export
//! * [`survival`]: loss, risk score, concordance index
//! * [`harness`]: training, cross-validation and ablation

pub mod autodiff;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod survival;

pub use error::{AplError, Result};

/// Serialises through `serde_json::Value`, whose maps are ordered, so keys
/// come out sorted and the text is stable across runs.
pub fn canonical_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)?)
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => std::path::Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| AplError::file(parent, e.to_string()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| AplError::file(path, e.error.to_string()))?;
    Ok(())
}

/// Builds a directory by running `fill` on a sibling staging directory and
/// renaming it to `out_dir` once complete. `out_dir` must be absent or empty.
pub fn write_dir_atomic(
    out_dir: &std::path::Path,
    fill: impl FnOnce(&std::path::Path) -> Result<()>,
) -> Result<()> {
    use std::fs;
    if out_dir.exists() {
        let empty = out_dir.is_dir() && fs::read_dir(out_dir)?.next().is_none();
        if !empty {
            return Err(AplError::file(out_dir, "output directory exists and is not empty"));
        }
    }
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::env::current_dir()?,
    };
    fs::create_dir_all(&parent)?;
    let staging = tempfile::Builder::new().prefix(".staging-").tempdir_in(&parent)?;
    fill(staging.path())?;
    if out_dir.exists() {
        fs::remove_dir(out_dir)?;
    }
    fs::rename(staging.keep(), out_dir)?;
    Ok(())
}
