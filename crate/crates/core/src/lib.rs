//! Token-level text anomaly detection.
//!
//! Normal training documents are embedded word by word, pooled from their
//! subwords, and stored in a [`MemoryBank`]. A test word is scored by its
//! Euclidean distance to the nearest bank vector; a document is scored by
//! aggregating its word scores (mean by default). The [`baselines`] share
//! the same scoring interface, and [`metrics`] evaluates everything with
//! AUROC and AUPRC at word and document level.
//!
//! [`synth`] provides a seeded corpus generator, gibberish injection and a
//! character n-gram hashing embedder so the pipeline runs without a
//! pretrained model. External encoders exchange data through the
//! [`archive`] format.

pub mod archive;
pub mod bank;
pub mod baselines;
pub mod corpus;
pub mod distance;
pub mod error;
mod io_util;
pub mod metrics;
pub mod pipeline;
pub mod pooling;
pub mod scoring;
pub mod synth;

pub use archive::{read_archive, write_archive, EmbeddingArchive, SubwordMatrix};
pub use bank::{
    build_bank, load_bank, save_bank, AnnParams, MemoryBank, SubsampleConfig, SubsampleMode,
};
pub use baselines::{DetectorKind, DetectorModel, DetectorParams};
pub use corpus::{
    validate_corpus, Corpus, Document, Label, SubwordSpan, ValidationReport, WordToken,
};
pub use error::{Error, Result};
pub use metrics::{auprc, auroc, evaluate_run, split_corpus, EvalReport};
pub use pipeline::{run_experiment, ExperimentConfig, Method};
pub use pooling::{pool_document, pool_word, PoolingMode};
pub use scoring::{Aggregator, ScoredDocument, TokenScorer};
