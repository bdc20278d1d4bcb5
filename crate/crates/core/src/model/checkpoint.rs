//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! b"APLC" | version: u32 | header_len: u32 | header: canonical JSON
//! n_params: u32 | n_params × { name_len: u32 | name | ndim: u32 | dims: u32 × ndim | f64 × prod(dims) }
//! ```
//!
//! The header carries the model config, the effective pathway definitions,
//! and optionally the preprocessing fitted on the training split so a loaded
//! model can be applied to fresh cases unchanged.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AplConfig, AplModel};
use crate::autodiff::Tensor;
use crate::data::{CaseRecord, Cohort, PathwayDefinition, PathwayNormalizer, TimeBins};
use crate::error::{AplError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"APLC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: AplConfig,
    pub pathways: Vec<PathwayDefinition>,
    pub normalizer: Option<PathwayNormalizer>,
    pub time_bins: Option<TimeBins>,
}

/// A model together with the preprocessing it was trained under.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: AplModel,
    pub normalizer: Option<PathwayNormalizer>,
    pub time_bins: Option<TimeBins>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = CheckpointHeader {
            config: self.model.config.clone(),
            pathways: self.model.pathways.clone(),
            normalizer: self.normalizer.clone(),
            time_bins: self.time_bins.clone(),
        };
        let header = crate::canonical_json(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, len_u32(header.len())?);
        out.extend_from_slice(header.as_bytes());
        put_u32(&mut out, len_u32(self.model.params.len())?);
        for p in self.model.params.iter() {
            put_u32(&mut out, len_u32(p.name.len())?);
            out.extend_from_slice(p.name.as_bytes());
            put_u32(&mut out, len_u32(p.shape().len())?);
            for &d in p.shape() {
                put_u32(&mut out, len_u32(d)?);
            }
            for v in p.value().data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(AplError::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(AplError::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let header_len = r.u32()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| AplError::Checkpoint(format!("bad header: {e}")))?;
        let mut model = AplModel::new(header.config, header.pathways)?;

        let n = r.u32()? as usize;
        if n != model.params.len() {
            return Err(AplError::Checkpoint(format!(
                "checkpoint has {n} parameters, config implies {}",
                model.params.len()
            )));
        }
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| AplError::Checkpoint("parameter name is not UTF-8".into()))?
                .to_owned();
            let ndim = r.u32()? as usize;
            let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let param = model.params.get_mut(id);
            if name != param.name {
                return Err(AplError::Checkpoint(format!(
                    "expected parameter '{}', found '{name}'",
                    param.name
                )));
            }
            if dims != param.shape() {
                return Err(AplError::Checkpoint(format!(
                    "parameter '{name}' has shape {dims:?}, config implies {:?}",
                    param.shape()
                )));
            }
            let count: usize = dims.iter().product();
            let raw = r.take(count * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            *param.value_mut() = Tensor::new(dims, data)?;
        }
        if r.pos != bytes.len() {
            return Err(AplError::Checkpoint("trailing bytes after parameters".into()));
        }
        Ok(Checkpoint {
            model,
            normalizer: header.normalizer,
            time_bins: header.time_bins,
        })
    }

    /// Copies the cohort's cases and applies the stored normalisation and
    /// time bins. The cohort's pathways must match the checkpoint's.
    pub fn prepare_cases(&self, cohort: &Cohort) -> Result<Vec<CaseRecord>> {
        if cohort.pathways != self.model.pathways {
            let ours: Vec<&str> = self.model.pathways.iter().map(|p| p.name.as_str()).collect();
            let theirs: Vec<&str> = cohort.pathways.iter().map(|p| p.name.as_str()).collect();
            return Err(AplError::Data(format!(
                "cohort pathways {theirs:?} do not match the checkpoint's {ours:?} (names or gene lists differ)"
            )));
        }
        let mut cases = cohort.cases.clone();
        if let Some(norm) = &self.normalizer {
            norm.apply(&mut cases)?;
        }
        if let Some(bins) = &self.time_bins {
            bins.assign(&mut cases);
        }
        Ok(cases)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| AplError::file(path, e.to_string()))?;
        Self::from_bytes(&bytes).map_err(|e| AplError::file(path, e.to_string()))
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| AplError::Checkpoint(format!("length {n} exceeds u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| AplError::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AblationConfig;

    fn tiny() -> AplModel {
        let config = AplConfig {
            d_in: 4,
            d_model: 4,
            snn_hidden: 3,
            n_hist_queries: 2,
            n_gene_queries: 2,
            seed: 11,
            ..AplConfig::default()
        };
        let pathways = vec![
            PathwayDefinition { name: "a".into(), gene_ids: vec!["g1".into(), "g2".into()] },
            PathwayDefinition { name: "b".into(), gene_ids: vec!["g3".into()] },
        ];
        AplModel::new(config, pathways).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut model = tiny();
        // move away from the seeded init so loading cannot pass by re-initialising
        for p in model.params.iter_mut() {
            p.value_mut().data_mut().iter_mut().for_each(|v| *v = *v * 3.0 + 0.125);
        }
        let ckpt = Checkpoint {
            model,
            normalizer: None,
            time_bins: Some(TimeBins { edges: vec![1.0, 2.5, 9.0] }),
        };
        let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        assert_eq!(back.time_bins, ckpt.time_bins);
        for (a, b) in ckpt.model.params.iter().zip(back.model.params.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value(), b.value());
        }
    }

    #[test]
    fn rejects_corruption() {
        let ckpt = Checkpoint { model: tiny(), normalizer: None, time_bins: None };
        let bytes = ckpt.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let ckpt = Checkpoint { model: tiny(), normalizer: None, time_bins: None };
        let bytes = ckpt.to_bytes().unwrap();
        // Rewrite the header so the config no longer matches the stored tensors.
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mut header: CheckpointHeader = serde_json::from_slice(&bytes[12..12 + header_len]).unwrap();
        header.config.snn_hidden = 5;
        header.config.ablation = AblationConfig::FULL;
        let new_header = crate::canonical_json(&header).unwrap();
        let mut patched = bytes[..8].to_vec();
        patched.extend_from_slice(&(new_header.len() as u32).to_le_bytes());
        patched.extend_from_slice(new_header.as_bytes());
        patched.extend_from_slice(&bytes[12 + header_len..]);
        let err = Checkpoint::from_bytes(&patched).unwrap_err().to_string();
        assert!(err.contains("shape"), "{err}");
    }
}
