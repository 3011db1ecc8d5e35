//! Synthetic corpora, gibberish corruption and a hashing embedder.
//!
//! The generator draws words from a seeded, Zipf-weighted vocabulary of
//! random lowercase strings. Corruption inserts out-of-vocabulary random
//! letter strings into a fraction of documents and labels them. The
//! embedder maps a word to a fixed-size vector without any model, so the
//! whole pipeline runs offline.
//!
//! # Hash embedding
//!
//! 1. Pad the word as `<word>` (Unicode scalar values).
//! 2. Take every character n-gram with `n_min <= n <= n_max`; if the padded
//!    word is shorter than `n_min`, the padded word itself is the only gram.
//! 3. Hash each gram with 64-bit FNV-1a (offset `0xcbf29ce484222325`, prime
//!    `0x100000001b3`), feeding first the 8 little-endian bytes of the
//!    seed and then the gram's UTF-8 bytes.
//! 4. Coordinate = `(h & 0xffff_ffff) % dim`; sign = `-1` if bit 63 of `h`
//!    is set, else `+1`. Accumulate signed counts in `f64`, in gram order
//!    (by `n`, then position).
//! 5. L2-normalize and round to `f32`. If the signed counts cancel to the
//!    zero vector, the first gram's signed unit coordinate is used instead.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{EmbeddingArchive, SubwordMatrix};
use crate::corpus::{identity_spans, validate_corpus, Corpus, Document, Label, WordToken};
use crate::error::{Error, Result};

const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub vocab_size: usize,
    pub word_len: (usize, usize),
    pub doc_len: (usize, usize),
    pub zipf_exponent: f64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            vocab_size: 200,
            word_len: (3, 9),
            doc_len: (10, 40),
            zipf_exponent: 1.0,
        }
    }
}

impl VocabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 10 {
            return Err(Error::param("vocab_size must be >= 10"));
        }
        let (wmin, wmax) = self.word_len;
        if wmin < 1 || wmin > wmax {
            return Err(Error::param(
                "word length range must satisfy 1 <= min <= max",
            ));
        }
        let (dmin, dmax) = self.doc_len;
        if dmin < 1 || dmin > dmax {
            return Err(Error::param(
                "document length range must satisfy 1 <= min <= max",
            ));
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::param("zipf exponent must be finite and >= 0"));
        }
        // distinct words must be possible
        let capacity: f64 = (wmin..=wmax).map(|l| 26f64.powi(l as i32)).sum();
        if capacity < 2.0 * self.vocab_size as f64 {
            return Err(Error::param("word length range too narrow for vocab_size"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub doc_anomaly_rate: f64,
    pub tokens_per_corruption: (usize, usize),
    pub gibberish_len: (usize, usize),
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            doc_anomaly_rate: 0.1,
            tokens_per_corruption: (1, 3),
            gibberish_len: (6, 12),
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.doc_anomaly_rate > 0.0 && self.doc_anomaly_rate < 1.0) {
            return Err(Error::param("doc_anomaly_rate must be in (0, 1)"));
        }
        let (tmin, tmax) = self.tokens_per_corruption;
        if tmin < 1 || tmin > tmax {
            return Err(Error::param(
                "tokens per corruption must satisfy 1 <= min <= max",
            ));
        }
        let (gmin, gmax) = self.gibberish_len;
        if gmin < 1 || gmin > gmax {
            return Err(Error::param(
                "gibberish length must satisfy 1 <= min <= max",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashEmbedConfig {
    pub dim: usize,
    pub ngram: (usize, usize),
    pub seed: u64,
}

impl Default for HashEmbedConfig {
    fn default() -> Self {
        HashEmbedConfig {
            dim: 64,
            ngram: (2, 4),
            seed: 0,
        }
    }
}

impl HashEmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::param("hash embedding dim must be >= 8"));
        }
        let (lo, hi) = self.ngram;
        if !(2 <= lo && lo <= hi && hi <= 5) {
            return Err(Error::param(
                "n-gram range must satisfy 2 <= min <= max <= 5",
            ));
        }
        Ok(())
    }
}

fn random_word(rng: &mut impl Rng, len: (usize, usize)) -> String {
    let n = rng.gen_range(len.0..=len.1);
    (0..n)
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
        .collect()
}

/// The seeded vocabulary: `vocab_size` distinct random words, rank order.
pub fn gen_vocabulary(cfg: &VocabConfig, seed: u64) -> Result<Vec<String>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut vocab = Vec::with_capacity(cfg.vocab_size);
    while vocab.len() < cfg.vocab_size {
        let w = random_word(&mut rng, cfg.word_len);
        if seen.insert(w.clone()) {
            vocab.push(w);
        }
    }
    Ok(vocab)
}

/// A corpus of `n_docs` normal documents, every label 0.
pub fn gen_normal_corpus(cfg: &VocabConfig, n_docs: usize, seed: u64) -> Result<Corpus> {
    if n_docs == 0 {
        return Err(Error::param("n_docs must be >= 1"));
    }
    let vocab = gen_vocabulary(cfg, seed)?;
    let weights: Vec<f64> = (1..=vocab.len())
        .map(|rank| (rank as f64).powf(-cfg.zipf_exponent))
        .collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let documents = (0..n_docs)
        .map(|i| {
            let len = rng.gen_range(cfg.doc_len.0..=cfg.doc_len.1);
            let words = (0..len)
                .map(|_| WordToken::labeled(vocab[dist.sample(&mut rng)].clone(), Label::Normal))
                .collect();
            Document::new(format!("doc{i:05}"), words, Some(Label::Normal))
        })
        .collect();
    Ok(Corpus::new(format!("synthetic-{seed}"), documents))
}

/// Inserts gibberish words into a `doc_anomaly_rate` fraction of documents
/// (rounded to nearest, at least one). Inserted words and their host
/// documents are labeled 1, everything else 0. Gibberish never coincides
/// with a word already in the corpus.
pub fn inject_gibberish(corpus: &Corpus, cfg: &CorruptionConfig) -> Result<Corpus> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::empty("cannot corrupt an empty corpus"));
    }
    if let Some(d) = corpus.documents.iter().find(|d| d.has_anomaly()) {
        return Err(Error::schema(format!(
            "document {:?} is already labeled anomalous",
            d.doc_id
        )));
    }
    validate_corpus(corpus).into_result()?;
    let vocab: HashSet<&str> = corpus
        .documents
        .iter()
        .flat_map(|d| d.words.iter().map(|w| w.text.as_str()))
        .collect();
    let n = corpus.len();
    let n_anom = ((cfg.doc_anomaly_rate * n as f64).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let chosen: HashSet<usize> = rand::seq::index::sample(&mut rng, n, n_anom)
        .into_iter()
        .collect();

    let mut documents = Vec::with_capacity(n);
    for (i, doc) in corpus.documents.iter().enumerate() {
        let mut words: Vec<WordToken> = doc
            .words
            .iter()
            .map(|w| WordToken::labeled(w.text.clone(), Label::Normal))
            .collect();
        let anomalous = chosen.contains(&i);
        if anomalous {
            let k = rng.gen_range(cfg.tokens_per_corruption.0..=cfg.tokens_per_corruption.1);
            for _ in 0..k {
                let text = loop {
                    let g = random_word(&mut rng, cfg.gibberish_len);
                    if !vocab.contains(g.as_str()) {
                        break g;
                    }
                };
                let pos = rng.gen_range(0..=words.len());
                words.insert(pos, WordToken::labeled(text, Label::Anomalous));
            }
        }
        documents.push(Document::new(
            doc.doc_id.clone(),
            words,
            Some(Label::from(anomalous)),
        ));
    }
    Ok(Corpus::new(corpus.name.clone(), documents))
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Character n-grams of `<word>` in embedding order.
pub fn char_ngrams(word: &str, ngram: (usize, usize)) -> Vec<String> {
    let padded: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut grams = Vec::new();
    for n in ngram.0..=ngram.1 {
        if n > padded.len() {
            break;
        }
        for w in padded.windows(n) {
            grams.push(w.iter().collect());
        }
    }
    if grams.is_empty() {
        grams.push(padded.iter().collect());
    }
    grams
}

fn bucket(h: u64, dim: usize) -> (usize, f64) {
    let idx = ((h & 0xffff_ffff) % dim as u64) as usize;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (idx, sign)
}

pub fn hash_embed_word(word: &str, cfg: &HashEmbedConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    if word.is_empty() {
        return Err(Error::empty("cannot embed an empty word"));
    }
    let grams = char_ngrams(word, cfg.ngram);
    let mut acc = vec![0f64; cfg.dim];
    for g in &grams {
        let (i, s) = bucket(fnv1a64(cfg.seed, g.as_bytes()), cfg.dim);
        acc[i] += s;
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let (i, s) = bucket(fnv1a64(cfg.seed, grams[0].as_bytes()), cfg.dim);
        let mut out = vec![0f32; cfg.dim];
        out[i] = s as f32;
        return Ok(out);
    }
    Ok(acc.into_iter().map(|v| (v / norm) as f32).collect())
}

/// Embeds every word as one subword row; spans are the identity.
pub fn embed_corpus(corpus: &Corpus, cfg: &HashEmbedConfig) -> Result<EmbeddingArchive> {
    cfg.validate()?;
    validate_corpus(corpus).into_result()?;
    let words: Vec<&str> = corpus
        .documents
        .iter()
        .flat_map(|d| d.words.iter().map(|w| w.text.as_str()))
        .collect();
    let rows: Vec<Vec<f32>> = words
        .par_iter()
        .map(|w| hash_embed_word(w, cfg))
        .collect::<Result<_>>()?;
    let spans = corpus
        .documents
        .iter()
        .map(|d| identity_spans(d.len()))
        .collect();
    let matrix = SubwordMatrix::from_rows(cfg.dim, &rows)?;
    EmbeddingArchive::new(corpus.clone(), spans, matrix)
}
