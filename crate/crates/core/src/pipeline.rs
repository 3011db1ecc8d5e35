//! End-to-end runs: corpus → corruption → split → embedding → bank or
//! baseline → scores → report.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::archive::EmbeddingArchive;
use crate::bank::{
    build_bank, labelled_word_vectors, training_word_vectors, AnnParams, MemoryBank,
    SubsampleConfig,
};
use crate::baselines::{DetectorKind, DetectorModel, DetectorParams};
use crate::error::{Error, Result};
use crate::metrics::{split_corpus, EvalArrays, EvalReport, RunConfigEcho};
use crate::pooling::PoolingMode;
use crate::scoring::{score_documents, Aggregator, ScoredDocument};
use crate::synth::{
    embed_corpus, gen_normal_corpus, inject_gibberish, CorruptionConfig, HashEmbedConfig,
    VocabConfig,
};

/// Which scorer produces token scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    TokenCore,
    Lof,
    IForest,
    Ecod,
}

impl Method {
    pub fn detector(self) -> Option<DetectorKind> {
        match self {
            Method::TokenCore => None,
            Method::Lof => Some(DetectorKind::Lof),
            Method::IForest => Some(DetectorKind::IForest),
            Method::Ecod => Some(DetectorKind::Ecod),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.detector() {
            None => f.write_str("tokencore"),
            Some(k) => k.fmt(f),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("tokencore") {
            return Ok(Method::TokenCore);
        }
        Ok(match s.parse::<DetectorKind>()? {
            DetectorKind::Lof => Method::Lof,
            DetectorKind::IForest => Method::IForest,
            DetectorKind::Ecod => Method::Ecod,
        })
    }
}

/// Fits a baseline on the pooled training words and scores the test archive.
pub fn score_with_detector(
    kind: DetectorKind,
    params: &DetectorParams,
    train: &EmbeddingArchive,
    test: &EmbeddingArchive,
    pooling: PoolingMode,
    agg: Aggregator,
) -> Result<Vec<ScoredDocument>> {
    if train.dim() != test.dim() {
        return Err(Error::schema(format!(
            "train dim {} does not match test dim {}",
            train.dim(),
            test.dim()
        )));
    }
    let words = training_word_vectors(train, pooling)?;
    let model = DetectorModel::fit(kind, params, &words)?;
    let docs = labelled_word_vectors(test, pooling)?;
    score_documents(&model, &docs, agg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_docs: usize,
    pub vocab: VocabConfig,
    pub corruption: CorruptionConfig,
    pub embed: HashEmbedConfig,
    pub train_frac: f64,
    pub seed: u64,
    pub pooling: PoolingMode,
    pub aggregator: Aggregator,
    pub method: Method,
    pub detector: DetectorParams,
    pub subsample: SubsampleConfig,
    pub ann: AnnParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_docs: 500,
            vocab: VocabConfig::default(),
            corruption: CorruptionConfig::default(),
            embed: HashEmbedConfig::default(),
            train_frac: 0.5,
            seed: 0,
            pooling: PoolingMode::Max,
            aggregator: Aggregator::Mean,
            method: Method::TokenCore,
            detector: DetectorParams::default(),
            subsample: SubsampleConfig::default(),
            ann: AnnParams::default(),
        }
    }
}

impl ExperimentConfig {
    /// Same seed everywhere: corpus, corruption (offset by one), split,
    /// subsampling and detectors.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.corruption.seed = seed.wrapping_add(1);
        self.subsample.seed = seed;
        self.detector.seed = seed;
        self
    }

    pub fn echo(&self) -> RunConfigEcho {
        RunConfigEcho {
            pooling: self.pooling.to_string(),
            aggregator: self.aggregator.to_string(),
            detector: self.method.to_string(),
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub report: EvalReport,
    pub scored: Vec<ScoredDocument>,
    pub arrays: EvalArrays,
}

/// Runs the synthetic pipeline in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let normal = gen_normal_corpus(&cfg.vocab, cfg.n_docs, cfg.seed)?;
    let corpus = inject_gibberish(&normal, &cfg.corruption)?;
    let (train, test) = split_corpus(&corpus, cfg.train_frac, cfg.seed)?;
    let train_archive = embed_corpus(&train, &cfg.embed)?;
    let test_archive = embed_corpus(&test, &cfg.embed)?;
    let scored = match cfg.method.detector() {
        None => {
            let bank: MemoryBank = build_bank(&train_archive, cfg.pooling, &cfg.subsample)?
                .with_ann_index(&cfg.ann)?;
            bank.score_archive(&test_archive, cfg.pooling, cfg.aggregator)?
        }
        Some(kind) => score_with_detector(
            kind,
            &cfg.detector,
            &train_archive,
            &test_archive,
            cfg.pooling,
            cfg.aggregator,
        )?,
    };
    let arrays = EvalArrays::collect(&scored, &test)?;
    let report = arrays.evaluate(cfg.echo())?;
    Ok(ExperimentOutput {
        report,
        scored,
        arrays,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_parsing() {
        assert_eq!("tokencore".parse::<Method>().unwrap(), Method::TokenCore);
        assert_eq!("ECOD".parse::<Method>().unwrap(), Method::Ecod);
        assert!("lunar".parse::<Method>().is_err());
        for m in [
            Method::TokenCore,
            Method::Lof,
            Method::IForest,
            Method::Ecod,
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn small_run_produces_report() {
        let cfg = ExperimentConfig {
            n_docs: 60,
            ..ExperimentConfig::default()
        }
        .with_seed(3);
        let out = run_experiment(&cfg).unwrap();
        assert!(out.report.token_auroc > 0.5);
        assert_eq!(out.report.config.detector, "tokencore");
        assert_eq!(out.scored.len(), out.arrays.doc_labels.len());
    }
}
