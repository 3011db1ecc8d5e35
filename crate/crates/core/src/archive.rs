//! On-disk embedding archive.
//!
//! An archive is a directory holding three files:
//!
//! * `header.json`: `{"magic":"TKEM","version":1,"dim":d,"n_subwords_total":n,"dtype":"f32le"}`
//!   plus an optional `name` for the corpus.
//! * `meta.jsonl`: one object per document, in corpus order, with `doc_id`,
//!   `words`, optional `label`, optional `word_labels` and `spans`
//!   (`[[start, end], ...]`, half-open, local to the document's rows).
//! * `emb.bin`: `n * d` little-endian `f32` values, row-major, documents
//!   concatenated in corpus order.
//!
//! Producers must not write rows for tokenizer control tokens.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{check_spans, validate_corpus, Corpus, DocRecord, SubwordSpan};
use crate::error::{Error, Result};
use crate::io_util::atomic_write;

pub const ARCHIVE_MAGIC: &str = "TKEM";
pub const ARCHIVE_VERSION: u32 = 1;
pub const ARCHIVE_DTYPE: &str = "f32le";

pub const HEADER_FILE: &str = "header.json";
pub const META_FILE: &str = "meta.jsonl";
pub const EMB_FILE: &str = "emb.bin";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub magic: String,
    pub version: u32,
    pub dim: u32,
    pub n_subwords_total: u64,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl ArchiveHeader {
    fn check(&self) -> Result<()> {
        if self.magic != ARCHIVE_MAGIC {
            return Err(Error::format(format!("bad magic {:?}", self.magic)));
        }
        if self.version != ARCHIVE_VERSION {
            return Err(Error::format(format!(
                "unsupported version {}",
                self.version
            )));
        }
        if self.dim == 0 {
            return Err(Error::format("dim must be > 0"));
        }
        if self.dtype != ARCHIVE_DTYPE {
            return Err(Error::format(format!("unsupported dtype {:?}", self.dtype)));
        }
        Ok(())
    }
}

/// Dense row-major `f32` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SubwordMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl SubwordMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::schema("matrix dim must be > 0"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::schema(format!(
                "{} values is not a multiple of dim {dim}",
                data.len()
            )));
        }
        Ok(SubwordMatrix { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::schema(format!(
                    "row {i} has length {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        SubwordMatrix::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows `start..end` as one contiguous slice.
    pub fn rows(&self, start: usize, end: usize) -> &[f32] {
        &self.data[start * self.dim..end * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(p) => Err(Error::data(format!(
                "non-finite value at row {} column {}",
                p / self.dim,
                p % self.dim
            ))),
        }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// A corpus with per-document subword spans and the subword embedding rows.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingArchive {
    pub corpus: Corpus,
    pub spans: Vec<Vec<SubwordSpan>>,
    pub matrix: SubwordMatrix,
}

impl EmbeddingArchive {
    /// Validates and assembles an archive.
    pub fn new(
        corpus: Corpus,
        spans: Vec<Vec<SubwordSpan>>,
        matrix: SubwordMatrix,
    ) -> Result<Self> {
        check_layout(&corpus, &spans, &matrix)?;
        matrix.check_finite()?;
        Ok(EmbeddingArchive {
            corpus,
            spans,
            matrix,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// First subword row of each document, plus the total as a final entry.
    pub fn row_offsets(&self) -> Vec<usize> {
        row_offsets(&self.spans)
    }

    /// Rows belonging to document `doc` as a contiguous slice.
    pub fn doc_rows(&self, doc: usize) -> &[f32] {
        let start: usize = self.spans[..doc].iter().map(|s| doc_row_count(s)).sum();
        let end = start + doc_row_count(&self.spans[doc]);
        self.matrix.rows(start, end)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_archive(&self.corpus, &self.spans, &self.matrix, dir)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_archive(dir)
    }
}

fn doc_row_count(spans: &[SubwordSpan]) -> usize {
    spans.last().map_or(0, |s| s.end)
}

fn row_offsets(spans: &[Vec<SubwordSpan>]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(spans.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for s in spans {
        acc += doc_row_count(s);
        offsets.push(acc);
    }
    offsets
}

fn check_layout(corpus: &Corpus, spans: &[Vec<SubwordSpan>], matrix: &SubwordMatrix) -> Result<()> {
    if spans.len() != corpus.documents.len() {
        return Err(Error::schema(format!(
            "{} span lists for {} documents",
            spans.len(),
            corpus.documents.len()
        )));
    }
    let mut total = 0;
    for (doc, doc_spans) in corpus.documents.iter().zip(spans) {
        let rows = doc_row_count(doc_spans);
        check_spans(doc_spans, doc.words.len(), rows)
            .map_err(|e| Error::schema(format!("document {:?}: {e}", doc.doc_id)))?;
        total += rows;
    }
    if total != matrix.n_rows() {
        return Err(Error::schema(format!(
            "spans cover {total} rows, matrix has {}",
            matrix.n_rows()
        )));
    }
    validate_corpus(corpus).into_result()
}

/// Writes an archive directory, creating it if needed. Each file is written
/// atomically; `header.json` is written last.
pub fn write_archive(
    corpus: &Corpus,
    spans: &[Vec<SubwordSpan>],
    matrix: &SubwordMatrix,
    dir: &Path,
) -> Result<()> {
    check_layout(corpus, spans, matrix)?;
    matrix.check_finite()?;
    fs::create_dir_all(dir)?;

    let header = ArchiveHeader {
        magic: ARCHIVE_MAGIC.to_owned(),
        version: ARCHIVE_VERSION,
        dim: u32::try_from(matrix.dim()).map_err(|_| Error::schema("dim exceeds u32"))?,
        n_subwords_total: matrix.n_rows() as u64,
        dtype: ARCHIVE_DTYPE.to_owned(),
        name: Some(corpus.name.clone()),
    };

    let bytes = matrix.to_le_bytes();
    atomic_write(&dir.join(EMB_FILE), |w| w.write_all(&bytes))?;

    let mut meta = Vec::new();
    for (doc, doc_spans) in corpus.documents.iter().zip(spans) {
        let mut record = DocRecord::from_document(doc);
        record.spans = Some(doc_spans.iter().map(|s| [s.start, s.end]).collect());
        serde_json::to_writer(&mut meta, &record).expect("plain record serializes");
        meta.push(b'\n');
    }
    atomic_write(&dir.join(META_FILE), |w| w.write_all(&meta))?;

    let header_json = serde_json::to_vec_pretty(&header).expect("header serializes");
    atomic_write(&dir.join(HEADER_FILE), |w| {
        w.write_all(&header_json)?;
        w.write_all(b"\n")
    })
}

/// Reads and fully validates an archive directory.
pub fn read_archive(dir: &Path) -> Result<EmbeddingArchive> {
    let header_bytes = fs::read(dir.join(HEADER_FILE))?;
    let header: ArchiveHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::format(format!("{HEADER_FILE}: {e}")))?;
    header.check()?;
    let dim = header.dim as usize;

    let emb_path = dir.join(EMB_FILE);
    let emb_len = fs::metadata(&emb_path)?.len();
    let expected = 4u64
        .checked_mul(dim as u64)
        .and_then(|v| v.checked_mul(header.n_subwords_total))
        .ok_or_else(|| Error::schema("header sizes overflow"))?;
    if emb_len != expected {
        return Err(Error::schema(format!(
            "{EMB_FILE} has {emb_len} bytes, header implies {expected}"
        )));
    }

    let file = fs::File::open(dir.join(META_FILE))?;
    let mut documents = Vec::new();
    let mut spans = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: DocRecord = serde_json::from_str(&line)
            .map_err(|e| Error::schema(format!("{META_FILE}:{}: {e}", lineno + 1)))?;
        let raw_spans = record
            .spans
            .take()
            .ok_or_else(|| Error::schema(format!("{META_FILE}:{}: missing spans", lineno + 1)))?;
        spans.push(
            raw_spans
                .into_iter()
                .enumerate()
                .map(|(i, [s, e])| SubwordSpan::new(i, s, e))
                .collect::<Vec<_>>(),
        );
        documents.push(record.into_document()?);
    }
    let corpus = Corpus::new(header.name.clone().unwrap_or_default(), documents);

    let bytes = fs::read(&emb_path)?;
    if bytes.len() as u64 != expected {
        return Err(Error::schema(format!(
            "{EMB_FILE} changed size while reading"
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let matrix = SubwordMatrix::new(dim, data)?;
    EmbeddingArchive::new(corpus, spans, matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Label, WordToken};

    fn fixture() -> (Corpus, Vec<Vec<SubwordSpan>>, SubwordMatrix) {
        let corpus = Corpus::new(
            "fx",
            vec![Document::new(
                "d0",
                vec![
                    WordToken::labeled("hello", Label::Normal),
                    WordToken::labeled("wrld", Label::Anomalous),
                ],
                Some(Label::Anomalous),
            )],
        );
        let spans = vec![vec![SubwordSpan::new(0, 0, 1), SubwordSpan::new(1, 1, 3)]];
        let matrix =
            SubwordMatrix::new(4, (0..12).map(|v| v as f32 * 0.5 - 1.0).collect()).unwrap();
        (corpus, spans, matrix)
    }

    #[test]
    fn emb_bin_size_is_four_bytes_per_value() {
        let (c, s, m) = fixture();
        let dir = tempfile::tempdir().unwrap();
        write_archive(&c, &s, &m, dir.path()).unwrap();
        assert_eq!(fs::metadata(dir.path().join(EMB_FILE)).unwrap().len(), 48);
    }

    #[test]
    fn empty_span_is_rejected_on_write() {
        let (c, _, _) = fixture();
        let spans = vec![vec![SubwordSpan::new(0, 0, 2), SubwordSpan::new(1, 2, 2)]];
        let m = SubwordMatrix::new(4, vec![0.0; 8]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_archive(&c, &spans, &m, dir.path()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn non_finite_is_rejected_on_write() {
        let (c, s, mut m) = fixture();
        m.data[5] = f32::NAN;
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_archive(&c, &s, &m, dir.path()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn round_trip_is_identity() {
        let (c, s, m) = fixture();
        let dir = tempfile::tempdir().unwrap();
        write_archive(&c, &s, &m, dir.path()).unwrap();
        let before = fs::read(dir.path().join(EMB_FILE)).unwrap();
        let back = read_archive(dir.path()).unwrap();
        assert_eq!(back.corpus, c);
        assert_eq!(back.spans, s);
        assert_eq!(back.matrix, m);
        let dir2 = tempfile::tempdir().unwrap();
        back.write(dir2.path()).unwrap();
        assert_eq!(before, fs::read(dir2.path().join(EMB_FILE)).unwrap());
    }

    #[test]
    fn truncated_emb_is_schema_error() {
        let (c, s, m) = fixture();
        let dir = tempfile::tempdir().unwrap();
        write_archive(&c, &s, &m, dir.path()).unwrap();
        let p = dir.path().join(EMB_FILE);
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, bytes).unwrap();
        assert!(matches!(read_archive(dir.path()), Err(Error::Schema(_))));
    }

    fn patch_header(dir: &Path, f: impl FnOnce(&mut serde_json::Value)) {
        let p = dir.join(HEADER_FILE);
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&p).unwrap()).unwrap();
        f(&mut v);
        fs::write(&p, serde_json::to_vec(&v).unwrap()).unwrap();
    }

    #[test]
    fn header_errors_are_format_errors() {
        let (c, s, m) = fixture();
        for patch in [
            |v: &mut serde_json::Value| v["dim"] = 0.into(),
            |v: &mut serde_json::Value| v["magic"] = "NOPE".into(),
            |v: &mut serde_json::Value| v["version"] = 2.into(),
            |v: &mut serde_json::Value| v["dtype"] = "f16".into(),
        ] {
            let dir = tempfile::tempdir().unwrap();
            write_archive(&c, &s, &m, dir.path()).unwrap();
            patch_header(dir.path(), patch);
            assert!(matches!(read_archive(dir.path()), Err(Error::Format(_))));
        }
    }

    #[test]
    fn nan_on_disk_is_data_error() {
        let (c, s, m) = fixture();
        let dir = tempfile::tempdir().unwrap();
        write_archive(&c, &s, &m, dir.path()).unwrap();
        let p = dir.path().join(EMB_FILE);
        let mut bytes = fs::read(&p).unwrap();
        bytes[8..12].copy_from_slice(&f32::INFINITY.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        assert!(matches!(read_archive(dir.path()), Err(Error::Data(_))));
    }

    #[test]
    fn doc_rows_follow_offsets() {
        let (c, s, m) = fixture();
        let a = EmbeddingArchive::new(c, s, m).unwrap();
        assert_eq!(a.row_offsets(), vec![0, 3]);
        assert_eq!(a.doc_rows(0).len(), 12);
    }
}
