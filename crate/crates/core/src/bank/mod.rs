//! Memory bank of normal word embeddings and nearest-neighbor scoring.
//!
//! A token's score is the Euclidean distance from its word vector to the
//! closest vector in the bank. The bank holds every pooled word vector of
//! the normal training documents, deduplicated, optionally uniformly
//! subsampled. Exact search is the default; an HNSW index can be attached
//! and must pass a recall@1 self-check before it is used.

mod hnsw;
mod persist;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::EmbeddingArchive;
use crate::distance::nearest_exhaustive;
use crate::error::{Error, Result};
use crate::pooling::{pool_archive, PoolingMode};
use crate::scoring::{score_documents, score_words, Aggregator, ScoredDocument, TokenScorer};

pub use persist::{load_bank, save_bank, BANK_MAGIC, BANK_VERSION};

use hnsw::Hnsw;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsampleMode {
    #[default]
    None,
    Uniform,
}

impl FromStr for SubsampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(SubsampleMode::None),
            "uniform" => Ok(SubsampleMode::Uniform),
            other => Err(Error::param(format!("unknown subsample mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub mode: SubsampleMode,
    pub keep_fraction: f64,
    pub seed: u64,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig::none(0)
    }
}

impl SubsampleConfig {
    pub fn none(seed: u64) -> Self {
        SubsampleConfig {
            mode: SubsampleMode::None,
            keep_fraction: 1.0,
            seed,
        }
    }

    pub fn uniform(keep_fraction: f64, seed: u64) -> Self {
        SubsampleConfig {
            mode: SubsampleMode::Uniform,
            keep_fraction,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::param(format!(
                "keep_fraction must be in (0, 1], got {}",
                self.keep_fraction
            )));
        }
        if self.mode == SubsampleMode::None && self.keep_fraction != 1.0 {
            return Err(Error::param(
                "keep_fraction must be 1 when subsampling is off",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnParams {
    pub enabled: bool,
    pub target_recall_at_1: f64,
    /// Graph degree on upper layers; layer 0 uses twice this.
    pub max_degree: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Number of bank vectors probed by the recall self-check.
    pub probe_size: usize,
}

impl Default for AnnParams {
    fn default() -> Self {
        AnnParams {
            enabled: false,
            target_recall_at_1: 0.95,
            max_degree: 16,
            ef_construction: 200,
            ef_search: 128,
            probe_size: 1000,
        }
    }
}

impl AnnParams {
    pub fn enabled() -> Self {
        AnnParams {
            enabled: true,
            ..AnnParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_recall_at_1 > 0.0 && self.target_recall_at_1 <= 1.0) {
            return Err(Error::param("target_recall_at_1 must be in (0, 1]"));
        }
        if self.max_degree < 1
            || self.ef_construction < 1
            || self.ef_search < 1
            || self.probe_size < 1
        {
            return Err(Error::param("ANN knobs must be >= 1"));
        }
        Ok(())
    }
}

/// Where a bank's vectors came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub pooling: PoolingMode,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} pooling)", self.source, self.pooling)
    }
}

#[derive(Clone, Debug)]
pub struct MemoryBank {
    dim: usize,
    data: Vec<f32>,
    provenance: Provenance,
    seed: u64,
    index: Option<Hnsw>,
}

impl PartialEq for MemoryBank {
    /// Compares stored vectors and metadata; an attached index is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.seed == other.seed
            && self.provenance == other.provenance
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn canonical_bits(v: &[f32]) -> Vec<u32> {
    // -0.0 and 0.0 are the same point.
    v.iter()
        .map(|&x| if x == 0.0 { 0 } else { x.to_bits() })
        .collect()
}

impl MemoryBank {
    /// Builds a bank from raw vectors, dropping exact duplicates (first
    /// occurrence wins).
    pub fn from_vectors<I, V>(
        dim: usize,
        vectors: I,
        provenance: Provenance,
        seed: u64,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = V>,
        V: AsRef<[f32]>,
    {
        if dim == 0 {
            return Err(Error::schema("bank dim must be > 0"));
        }
        let mut seen: HashSet<Vec<u32>> = HashSet::new();
        let mut data = Vec::new();
        for (i, v) in vectors.into_iter().enumerate() {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(Error::schema(format!(
                    "vector {i} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::data(format!("vector {i} has a non-finite value")));
            }
            if seen.insert(canonical_bits(v)) {
                data.extend(v.iter().map(|&x| if x == 0.0 { 0.0 } else { x }));
            }
        }
        if data.is_empty() {
            return Err(Error::empty("memory bank needs at least one vector"));
        }
        Ok(MemoryBank {
            dim,
            data,
            provenance,
            seed,
            index: None,
        })
    }

    pub(crate) fn from_raw(dim: usize, data: Vec<f32>, provenance: Provenance, seed: u64) -> Self {
        MemoryBank {
            dim,
            data,
            provenance,
            seed,
            index: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn has_index(&self) -> bool {
        self.index.is_some()
    }

    fn check_query(&self, q: &[f32]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::schema(format!(
                "query has dimension {}, bank has {}",
                q.len(),
                self.dim
            )));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::data("query has a non-finite value"));
        }
        Ok(())
    }

    /// Exhaustive nearest neighbor: `(row, squared distance)`.
    pub fn nearest_exact(&self, q: &[f32]) -> Result<(usize, f64)> {
        self.check_query(q)?;
        Ok(nearest_exhaustive(&self.data, self.dim, q).expect("bank is non-empty"))
    }

    /// Nearest neighbor through the index when one is attached.
    pub fn nearest(&self, q: &[f32]) -> Result<(usize, f64)> {
        match &self.index {
            None => self.nearest_exact(q),
            Some(g) => {
                self.check_query(q)?;
                Ok(g.nearest(&self.data, self.dim, q))
            }
        }
    }

    /// Distance from `q` to its nearest bank vector.
    pub fn score_token(&self, q: &[f32]) -> Result<f64> {
        self.nearest(q).map(|(_, d)| d.sqrt())
    }

    pub fn score_document<V: AsRef<[f32]>>(
        &self,
        doc_id: &str,
        words: &[V],
        agg: Aggregator,
    ) -> Result<ScoredDocument> {
        score_words(self, doc_id, words, agg)
    }

    /// Pools and scores every document of a test archive.
    pub fn score_archive(
        &self,
        archive: &EmbeddingArchive,
        mode: PoolingMode,
        agg: Aggregator,
    ) -> Result<Vec<ScoredDocument>> {
        if archive.dim() != self.dim {
            return Err(Error::schema(format!(
                "archive dim {} does not match bank dim {}",
                archive.dim(),
                self.dim
            )));
        }
        let docs = labelled_word_vectors(archive, mode)?;
        score_documents(self, &docs, agg)
    }

    /// Attaches an HNSW index and verifies recall@1 on a seeded sample of
    /// bank members. With `params.enabled == false` the bank is returned
    /// unchanged.
    pub fn with_ann_index(mut self, params: &AnnParams) -> Result<Self> {
        params.validate()?;
        if !params.enabled {
            self.index = None;
            return Ok(self);
        }
        let graph = Hnsw::build(
            &self.data,
            self.dim,
            params.max_degree,
            params.ef_construction,
            params.ef_search,
            self.seed,
        );
        let n = self.len();
        let probes = {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut idx =
                rand::seq::index::sample(&mut rng, n, params.probe_size.min(n)).into_vec();
            idx.sort_unstable();
            idx
        };
        let hits = probes
            .iter()
            .filter(|&&i| {
                let q = self.vector(i);
                graph.nearest(&self.data, self.dim, q).1 == 0.0
            })
            .count();
        let measured = hits as f64 / probes.len() as f64;
        if measured < params.target_recall_at_1 {
            return Err(Error::Recall {
                measured,
                target: params.target_recall_at_1,
            });
        }
        self.index = Some(graph);
        Ok(self)
    }

    pub fn without_index(mut self) -> Self {
        self.index = None;
        self
    }
}

impl TokenScorer for MemoryBank {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_vector(&self, v: &[f32]) -> Result<f64> {
        self.score_token(v)
    }
}

/// `(doc_id, word vectors)` for every document, rejecting empty ones.
pub fn labelled_word_vectors(
    archive: &EmbeddingArchive,
    mode: PoolingMode,
) -> Result<Vec<(String, Vec<Vec<f32>>)>> {
    let pooled = pool_archive(archive, mode)?;
    archive
        .corpus
        .documents
        .iter()
        .zip(pooled)
        .map(|(doc, words)| {
            if words.is_empty() {
                Err(Error::empty(format!(
                    "document {:?} has no tokens",
                    doc.doc_id
                )))
            } else {
                Ok((doc.doc_id.clone(), words))
            }
        })
        .collect()
}

/// Pooled word vectors of every training word, checking that no training
/// document is labeled anomalous.
pub fn training_word_vectors(
    archive: &EmbeddingArchive,
    mode: PoolingMode,
) -> Result<Vec<Vec<f32>>> {
    if let Some(doc) = archive.corpus.documents.iter().find(|d| d.has_anomaly()) {
        return Err(Error::Contamination(format!(
            "training document {:?} is labeled anomalous",
            doc.doc_id
        )));
    }
    let words: Vec<Vec<f32>> = pool_archive(archive, mode)?.into_iter().flatten().collect();
    if words.is_empty() {
        return Err(Error::empty("training archive has no words"));
    }
    Ok(words)
}

/// Builds a bank from the normal training documents of `archive`.
pub fn build_bank(
    archive: &EmbeddingArchive,
    mode: PoolingMode,
    sub: &SubsampleConfig,
) -> Result<MemoryBank> {
    sub.validate()?;
    let words = training_word_vectors(archive, mode)?;
    let n = words.len();
    let keep = ((sub.keep_fraction * n as f64).round() as usize).clamp(1, n);
    let provenance = Provenance {
        source: archive.corpus.name.clone(),
        pooling: mode,
    };
    if sub.mode == SubsampleMode::None || keep == n {
        return MemoryBank::from_vectors(archive.dim(), &words, provenance, sub.seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub.seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, keep).into_vec();
    idx.sort_unstable();
    MemoryBank::from_vectors(
        archive.dim(),
        idx.iter().map(|&i| &words[i]),
        provenance,
        sub.seed,
    )
}
