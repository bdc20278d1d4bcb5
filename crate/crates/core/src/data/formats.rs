//! On-disk formats.
//!
//! * Embedding file: `"PEMB"`, version `u32`, `n_patches u32`, `dim u32`
//!   (all little-endian), then `n_patches·dim` `f32` LE values, row-major.
//! * Expression matrix: CSV, first column `gene_id`, one column per case.
//! * Pathway file: one `name<TAB>gene1,gene2,...` line per pathway.
//! * Manifest: CSV `case_id,embedding_path,survival_months,event`.
//! * Prediction dump: CSV `case_id,risk,survival_months,event`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PathwayDefinition;
use crate::autodiff::Tensor;
use crate::error::{AplError, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"PEMB";
pub const EMBEDDING_VERSION: u32 = 1;
const EMBEDDING_HEADER_LEN: usize = 16;

pub fn encode_embedding(rows: usize, dim: usize, values: &[f32]) -> Result<Vec<u8>> {
    if rows == 0 || dim == 0 || values.len() != rows * dim {
        return Err(AplError::shape("encode_embedding", &[rows, dim], &[values.len()]));
    }
    let mut buf = Vec::with_capacity(EMBEDDING_HEADER_LEN + values.len() * 4);
    buf.extend_from_slice(EMBEDDING_MAGIC);
    buf.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

/// Parses an embedding file, promoting values to `f64`.
pub fn decode_embedding(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    if bytes.len() < EMBEDDING_HEADER_LEN {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    if &bytes[..4] != EMBEDDING_MAGIC {
        return Err("bad magic, expected PEMB".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != EMBEDDING_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let (rows, dim) = (word(8) as usize, word(12) as usize);
    if rows == 0 || dim == 0 {
        return Err(format!("empty embedding ({rows}×{dim})"));
    }
    let expected = EMBEDDING_HEADER_LEN + rows * dim * 4;
    if bytes.len() != expected {
        return Err(format!(
            "header declares {rows}×{dim} ({expected} bytes) but file has {} bytes",
            bytes.len()
        ));
    }
    let data = bytes[EMBEDDING_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Tensor::from_parts(vec![rows, dim], data))
}

pub fn read_embedding(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| AplError::file(path, e.to_string()))?;
    decode_embedding(&bytes).map_err(|m| AplError::file(path, m))
}

/// Gene-by-case expression values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    pub case_ids: Vec<String>,
    pub gene_ids: Vec<String>,
    /// `values[gene][case]`
    pub values: Vec<Vec<f64>>,
    gene_index: HashMap<String, usize>,
}

impl ExpressionMatrix {
    pub fn new(case_ids: Vec<String>, gene_ids: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let mut gene_index = HashMap::new();
        for (i, g) in gene_ids.iter().enumerate() {
            if gene_index.insert(g.clone(), i).is_some() {
                return Err(AplError::Data(format!("duplicate gene '{g}' in expression matrix")));
            }
        }
        if values.len() != gene_ids.len() || values.iter().any(|r| r.len() != case_ids.len()) {
            return Err(AplError::Data("expression matrix is not rectangular".into()));
        }
        Ok(ExpressionMatrix {
            case_ids,
            gene_ids,
            values,
            gene_index,
        })
    }

    pub fn gene_row(&self, gene: &str) -> Option<usize> {
        self.gene_index.get(gene).copied()
    }

    pub fn case_column(&self, case_id: &str) -> Option<usize> {
        self.case_ids.iter().position(|c| c == case_id)
    }
}

pub fn read_expression(path: &Path) -> Result<ExpressionMatrix> {
    let ctx = |m: String| AplError::file(path, m);
    let mut rdr = csv::Reader::from_path(path).map_err(|e| ctx(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| ctx(e.to_string()))?.clone();
    if headers.get(0) != Some("gene_id") {
        return Err(ctx("first column must be 'gene_id'".into()));
    }
    let case_ids: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut seen = HashSet::new();
    if let Some(dup) = case_ids.iter().find(|c| !seen.insert(c.as_str())) {
        return Err(ctx(format!("duplicate case column '{dup}'")));
    }
    let mut gene_ids = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ctx(e.to_string()))?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().skip(1).map(str::parse).collect();
        let row = row.map_err(|e| ctx(format!("line {}: {e}", line + 2)))?;
        gene_ids.push(rec[0].to_owned());
        values.push(row);
    }
    ExpressionMatrix::new(case_ids, gene_ids, values).map_err(|e| ctx(e.to_string()))
}

pub fn write_expression(path: &Path, m: &ExpressionMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["gene_id".to_owned()];
    header.extend(m.case_ids.iter().cloned());
    w.write_record(&header)?;
    for (gene, row) in m.gene_ids.iter().zip(&m.values) {
        let mut rec = vec![gene.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pathways(path: &Path) -> Result<Vec<PathwayDefinition>> {
    let file = fs::File::open(path).map_err(|e| AplError::file(path, e.to_string()))?;
    let mut out: Vec<PathwayDefinition> = Vec::new();
    let mut names = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let ctx = |m: &str| AplError::file(path, format!("line {}: {m}", i + 1));
        if line.trim().is_empty() {
            continue;
        }
        let (name, genes) = line.split_once('\t').ok_or_else(|| ctx("expected name<TAB>genes"))?;
        let gene_ids: Vec<String> = genes
            .split(',')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(str::to_owned)
            .collect();
        if gene_ids.is_empty() {
            return Err(ctx(&format!("pathway '{name}' lists no genes")));
        }
        if !names.insert(name.to_owned()) {
            return Err(ctx(&format!("duplicate pathway name '{name}'")));
        }
        out.push(PathwayDefinition {
            name: name.to_owned(),
            gene_ids,
        });
    }
    if out.is_empty() {
        return Err(AplError::file(path, "no pathways defined"));
    }
    Ok(out)
}

pub fn write_pathways(path: &Path, pathways: &[PathwayDefinition]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for p in pathways {
        writeln!(f, "{}\t{}", p.name, p.gene_ids.join(","))?;
    }
    Ok(())
}

/// One row of the prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub case_id: String,
    pub risk: f64,
    pub survival_months: f64,
    pub event: u8,
}

pub fn write_predictions(path: &Path, rows: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Into::into)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_header_layout() {
        let bytes = encode_embedding(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        assert_eq!(&bytes[..4], b"PEMB");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[3, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 24);
        let t = decode_embedding(&bytes).unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.data()[5], 6.5);
    }

    #[test]
    fn embedding_rejects_corruption() {
        let mut bytes = encode_embedding(1, 2, &[1.0, 2.0]).unwrap();
        assert!(decode_embedding(&bytes[..20]).is_err());
        bytes[0] = b'X';
        assert!(decode_embedding(&bytes).is_err());
        let mut v2 = encode_embedding(1, 2, &[1.0, 2.0]).unwrap();
        v2[4] = 2;
        assert!(decode_embedding(&v2).unwrap_err().contains("version"));
    }

    #[test]
    fn pathway_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.tsv");
        fs::write(&p, "A\tg1,g2\nB\tg3\n\n").unwrap();
        let pw = read_pathways(&p).unwrap();
        assert_eq!(pw.len(), 2);
        assert_eq!(pw[0].gene_ids, vec!["g1", "g2"]);

        fs::write(&p, "A\tg1\nA\tg2\n").unwrap();
        assert!(read_pathways(&p).unwrap_err().to_string().contains("line 2"));
        fs::write(&p, "A\t\n").unwrap();
        assert!(read_pathways(&p).is_err());
    }

    #[test]
    fn expression_errors_carry_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        fs::write(&p, "gene_id,c1\ng1,1.5\ng2,oops\n").unwrap();
        let err = read_expression(&p).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        fs::write(&p, "gene,c1\ng1,1.5\n").unwrap();
        assert!(read_expression(&p).is_err());
    }
}
