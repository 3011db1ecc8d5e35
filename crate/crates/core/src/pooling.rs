//! Subword-to-word pooling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::archive::EmbeddingArchive;
use crate::corpus::SubwordSpan;
use crate::error::{Error, Result};

/// How a word's subword embeddings collapse into one vector. `Max` is the
/// element-wise maximum and the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMode {
    #[default]
    Max,
    Mean,
    First,
}

impl PoolingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolingMode::Max => "max",
            PoolingMode::Mean => "mean",
            PoolingMode::First => "first",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            PoolingMode::Max => 0,
            PoolingMode::Mean => 1,
            PoolingMode::First => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(PoolingMode::Max),
            1 => Some(PoolingMode::Mean),
            2 => Some(PoolingMode::First),
            _ => None,
        }
    }
}

impl fmt::Display for PoolingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoolingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(PoolingMode::Max),
            "mean" => Ok(PoolingMode::Mean),
            "first" => Ok(PoolingMode::First),
            other => Err(Error::param(format!("unknown pooling mode {other:?}"))),
        }
    }
}

pub fn pool_word<V: AsRef<[f32]>>(subvecs: &[V], mode: PoolingMode) -> Result<Vec<f32>> {
    let first = subvecs
        .first()
        .ok_or_else(|| Error::empty("cannot pool an empty list of subword vectors"))?
        .as_ref();
    let dim = first.len();
    if dim == 0 {
        return Err(Error::schema("subword vectors must have dimension >= 1"));
    }
    if let Some(bad) = subvecs.iter().position(|v| v.as_ref().len() != dim) {
        return Err(Error::schema(format!(
            "subword vector {bad} has dimension {}, expected {dim}",
            subvecs[bad].as_ref().len()
        )));
    }
    Ok(match mode {
        PoolingMode::First => first.to_vec(),
        PoolingMode::Max => {
            let mut out = first.to_vec();
            for v in &subvecs[1..] {
                for (o, &x) in out.iter_mut().zip(v.as_ref()) {
                    if x > *o {
                        *o = x;
                    }
                }
            }
            out
        }
        PoolingMode::Mean => {
            let mut acc = vec![0f64; dim];
            for v in subvecs {
                for (a, &x) in acc.iter_mut().zip(v.as_ref()) {
                    *a += f64::from(x);
                }
            }
            let n = subvecs.len() as f64;
            acc.into_iter().map(|a| (a / n) as f32).collect()
        }
    })
}

/// Pools one document's subword rows (row-major, `dim` wide) into one vector
/// per word, in word order.
pub fn pool_document(
    doc_rows: &[f32],
    dim: usize,
    spans: &[SubwordSpan],
    mode: PoolingMode,
) -> Result<Vec<Vec<f32>>> {
    if dim == 0 || !doc_rows.len().is_multiple_of(dim) {
        return Err(Error::schema(format!(
            "{} values do not form rows of width {dim}",
            doc_rows.len()
        )));
    }
    let n_rows = doc_rows.len() / dim;
    spans
        .iter()
        .map(|span| {
            if span.end > n_rows || span.start > span.end {
                return Err(Error::schema(format!(
                    "span [{}, {}) out of range for {n_rows} rows",
                    span.start, span.end
                )));
            }
            let rows: Vec<&[f32]> = doc_rows[span.start * dim..span.end * dim]
                .chunks_exact(dim)
                .collect();
            pool_word(&rows, mode)
        })
        .collect()
}

/// Word vectors for every document of an archive.
pub fn pool_archive(archive: &EmbeddingArchive, mode: PoolingMode) -> Result<Vec<Vec<Vec<f32>>>> {
    let dim = archive.dim();
    let offsets = archive.row_offsets();
    archive
        .spans
        .iter()
        .enumerate()
        .map(|(i, spans)| {
            let rows = archive.matrix.rows(offsets[i], offsets[i + 1]);
            pool_document(rows, dim, spans, mode)
        })
        .collect()
}
