//! Python bindings. Vectors cross the boundary as lists of floats; files
//! use the same JSONL, archive and bank formats as the command line.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tokencore::archive::read_archive;
use tokencore::bank::{build_bank, load_bank, save_bank, Provenance, SubsampleConfig};
use tokencore::corpus::{read_corpus_jsonl, write_corpus_jsonl};
use tokencore::metrics::{split_corpus as split, EvalReport, RunConfigEcho};
use tokencore::pipeline::{run_experiment, ExperimentConfig};
use tokencore::synth::{self, CorruptionConfig, HashEmbedConfig, VocabConfig};
use tokencore::{
    AnnParams, DetectorKind, DetectorModel, DetectorParams, Error, PoolingMode, ScoredDocument,
};

create_exception!(tokencore_py, TokenCoreError, PyException);
create_exception!(tokencore_py, DegenerateError, TokenCoreError);

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        Error::Degenerate(_) => DegenerateError::new_err(e.to_string()),
        other => TokenCoreError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

type ScoredTuple = (String, Vec<f64>, f64);

fn to_tuples(scored: Vec<ScoredDocument>) -> Vec<ScoredTuple> {
    scored
        .into_iter()
        .map(|s| (s.doc_id, s.token_scores, s.doc_score))
        .collect()
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("token_auroc", r.token_auroc)?;
    d.set_item("token_auprc", r.token_auprc)?;
    d.set_item("doc_auroc", r.doc_auroc)?;
    d.set_item("doc_auprc", r.doc_auprc)?;
    d.set_item("token_positives", r.token_counts.positives)?;
    d.set_item("token_negatives", r.token_counts.negatives)?;
    d.set_item("doc_positives", r.doc_counts.positives)?;
    d.set_item("doc_negatives", r.doc_counts.negatives)?;
    d.set_item("pooling", &r.config.pooling)?;
    d.set_item("aggregator", &r.config.aggregator)?;
    d.set_item("detector", &r.config.detector)?;
    d.set_item("seed", r.config.seed)?;
    Ok(d)
}

/// Nearest-neighbor memory bank of normal word vectors.
#[pyclass(name = "MemoryBank", module = "tokencore_py", frozen)]
struct PyMemoryBank {
    inner: tokencore::MemoryBank,
}

#[pymethods]
impl PyMemoryBank {
    /// Builds a bank from explicit vectors; exact duplicates are dropped.
    #[staticmethod]
    #[pyo3(signature = (vectors, pooling = "max", source = "python", seed = 0))]
    fn from_vectors(
        vectors: Vec<Vec<f32>>,
        pooling: &str,
        source: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        let prov = Provenance {
            source: source.to_owned(),
            pooling: parse(pooling)?,
        };
        let inner =
            tokencore::MemoryBank::from_vectors(dim, vectors.iter(), prov, seed).map_err(err)?;
        Ok(PyMemoryBank { inner })
    }

    /// Builds a bank from a normal-only archive directory.
    #[staticmethod]
    #[pyo3(signature = (archive_dir, pooling = "max", keep_fraction = None, seed = 0))]
    fn from_archive(
        archive_dir: PathBuf,
        pooling: &str,
        keep_fraction: Option<f64>,
        seed: u64,
    ) -> PyResult<Self> {
        let sub = match keep_fraction {
            None => SubsampleConfig::none(seed),
            Some(f) => SubsampleConfig::uniform(f, seed),
        };
        let archive = read_archive(&archive_dir).map_err(err)?;
        let inner = build_bank(&archive, parse(pooling)?, &sub).map_err(err)?;
        Ok(PyMemoryBank { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyMemoryBank {
            inner: load_bank(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_bank(&self.inner, &path).map_err(err)
    }

    /// Returns a copy with a verified HNSW index attached.
    #[pyo3(signature = (target_recall = 0.95, max_degree = 16, ef_construction = 200, ef_search = 128, probes = 1000))]
    fn with_ann(
        &self,
        py: Python<'_>,
        target_recall: f64,
        max_degree: usize,
        ef_construction: usize,
        ef_search: usize,
        probes: usize,
    ) -> PyResult<Self> {
        let params = AnnParams {
            enabled: true,
            target_recall_at_1: target_recall,
            max_degree,
            ef_construction,
            ef_search,
            probe_size: probes,
        };
        let bank = self.inner.clone();
        let inner = py.detach(|| bank.with_ann_index(&params)).map_err(err)?;
        Ok(PyMemoryBank { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn has_index(&self) -> bool {
        self.inner.has_index()
    }

    #[getter]
    fn pooling(&self) -> &'static str {
        self.inner.provenance().pooling.as_str()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn vector(&self, i: usize) -> PyResult<Vec<f32>> {
        if i >= self.inner.len() {
            return Err(pyo3::exceptions::PyIndexError::new_err(
                "bank index out of range",
            ));
        }
        Ok(self.inner.vector(i).to_vec())
    }

    /// `(row, distance)` of the nearest bank vector.
    fn nearest(&self, query: Vec<f32>) -> PyResult<(usize, f64)> {
        let (i, d) = self.inner.nearest(&query).map_err(err)?;
        Ok((i, d.sqrt()))
    }

    fn score_token(&self, query: Vec<f32>) -> PyResult<f64> {
        self.inner.score_token(&query).map_err(err)
    }

    /// Scores one document's word vectors: `(token_scores, doc_score)`.
    #[pyo3(signature = (words, aggregator = "mean"))]
    fn score_document(
        &self,
        py: Python<'_>,
        words: Vec<Vec<f32>>,
        aggregator: &str,
    ) -> PyResult<(Vec<f64>, f64)> {
        let agg = parse(aggregator)?;
        let s = py
            .detach(|| self.inner.score_document("", &words, agg))
            .map_err(err)?;
        Ok((s.token_scores, s.doc_score))
    }

    /// Scores every document of an archive: `[(doc_id, token_scores, doc_score)]`.
    #[pyo3(signature = (archive_dir, pooling = None, aggregator = "mean"))]
    fn score_archive(
        &self,
        py: Python<'_>,
        archive_dir: PathBuf,
        pooling: Option<&str>,
        aggregator: &str,
    ) -> PyResult<Vec<ScoredTuple>> {
        let mode = match pooling {
            Some(p) => parse(p)?,
            None => self.inner.provenance().pooling,
        };
        let agg = parse(aggregator)?;
        let archive = read_archive(&archive_dir).map_err(err)?;
        let scored = py
            .detach(|| self.inner.score_archive(&archive, mode, agg))
            .map_err(err)?;
        Ok(to_tuples(scored))
    }

    fn __repr__(&self) -> String {
        format!(
            "MemoryBank(len={}, dim={}, pooling={}, index={})",
            self.inner.len(),
            self.inner.dim(),
            self.inner.provenance().pooling,
            self.inner.has_index()
        )
    }
}

/// LOF, isolation forest or ECOD fitted on normal vectors.
#[pyclass(name = "Detector", module = "tokencore_py", frozen)]
struct PyDetector {
    inner: DetectorModel,
}

#[pymethods]
impl PyDetector {
    #[new]
    #[pyo3(signature = (kind, train, lof_k = 20, n_trees = 100, psi = None, seed = 0))]
    fn new(
        py: Python<'_>,
        kind: &str,
        train: Vec<Vec<f32>>,
        lof_k: usize,
        n_trees: usize,
        psi: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let kind: DetectorKind = parse(kind)?;
        let params = DetectorParams {
            lof_k,
            n_trees,
            psi,
            seed,
        };
        let inner = py
            .detach(|| DetectorModel::fit(kind, &params, &train))
            .map_err(err)?;
        Ok(PyDetector { inner })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    fn score(&self, x: Vec<f32>) -> PyResult<f64> {
        self.inner.score(&x).map_err(err)
    }

    fn score_many(&self, py: Python<'_>, xs: Vec<Vec<f32>>) -> PyResult<Vec<f64>> {
        py.detach(|| {
            xs.iter()
                .map(|x| self.inner.score(x))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(err)
    }
}

#[pyfunction]
fn auroc(labels: Vec<bool>, scores: Vec<f64>) -> PyResult<f64> {
    tokencore::auroc(&labels, &scores).map_err(err)
}

#[pyfunction]
fn auprc(labels: Vec<bool>, scores: Vec<f64>) -> PyResult<f64> {
    tokencore::auprc(&labels, &scores).map_err(err)
}

/// Pools one word's subword vectors (`max`, `mean` or `first`).
#[pyfunction]
#[pyo3(signature = (subwords, mode = "max"))]
fn pool_word(subwords: Vec<Vec<f32>>, mode: &str) -> PyResult<Vec<f32>> {
    let mode: PoolingMode = parse(mode)?;
    tokencore::pool_word(&subwords, mode).map_err(err)
}

/// Aggregates token scores (`mean`, `max` or `topk:K`).
#[pyfunction]
#[pyo3(signature = (scores, aggregator = "mean"))]
fn aggregate(scores: Vec<f64>, aggregator: &str) -> PyResult<f64> {
    parse::<tokencore::Aggregator>(aggregator)?
        .aggregate(&scores)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (word, dim = 64, ngram_min = 2, ngram_max = 4, seed = 0))]
fn hash_embed_word(
    word: &str,
    dim: usize,
    ngram_min: usize,
    ngram_max: usize,
    seed: u64,
) -> PyResult<Vec<f32>> {
    let cfg = HashEmbedConfig {
        dim,
        ngram: (ngram_min, ngram_max),
        seed,
    };
    synth::hash_embed_word(word, &cfg).map_err(err)
}

/// Writes a generated, gibberish-corrupted corpus; returns the number of
/// anomalous documents. Matches `tokencore inject --generate`.
#[pyfunction]
#[pyo3(signature = (path, docs = 500, rate = 0.1, seed = 0))]
fn generate_corpus(path: PathBuf, docs: usize, rate: f64, seed: u64) -> PyResult<usize> {
    let vocab = VocabConfig::default();
    let cfg = CorruptionConfig {
        doc_anomaly_rate: rate,
        seed: seed.wrapping_add(1),
        ..CorruptionConfig::default()
    };
    cfg.validate().map_err(err)?;
    let normal = synth::gen_normal_corpus(&vocab, docs, seed).map_err(err)?;
    let corpus = synth::inject_gibberish(&normal, &cfg).map_err(err)?;
    write_corpus_jsonl(&corpus, &path).map_err(err)?;
    Ok(corpus.documents.iter().filter(|d| d.has_anomaly()).count())
}

/// Splits a corpus file into train and test files; returns their sizes.
#[pyfunction]
#[pyo3(signature = (corpus_path, train_out, test_out, train_frac = 0.5, seed = 0))]
fn split_corpus(
    corpus_path: PathBuf,
    train_out: PathBuf,
    test_out: PathBuf,
    train_frac: f64,
    seed: u64,
) -> PyResult<(usize, usize)> {
    let corpus = read_corpus_jsonl(&corpus_path).map_err(err)?;
    let (train, test) = split(&corpus, train_frac, seed).map_err(err)?;
    write_corpus_jsonl(&train, &train_out).map_err(err)?;
    write_corpus_jsonl(&test, &test_out).map_err(err)?;
    Ok((train.len(), test.len()))
}

/// Hash-embeds a corpus file into an archive directory; returns the row count.
#[pyfunction]
#[pyo3(signature = (corpus_path, out_dir, dim = 64, ngram_min = 2, ngram_max = 4, seed = 0))]
fn embed_corpus(
    corpus_path: PathBuf,
    out_dir: PathBuf,
    dim: usize,
    ngram_min: usize,
    ngram_max: usize,
    seed: u64,
) -> PyResult<usize> {
    let cfg = HashEmbedConfig {
        dim,
        ngram: (ngram_min, ngram_max),
        seed,
    };
    let corpus = read_corpus_jsonl(&corpus_path).map_err(err)?;
    let archive = synth::embed_corpus(&corpus, &cfg).map_err(err)?;
    archive.write(&out_dir).map_err(err)?;
    Ok(archive.matrix.n_rows())
}

/// Evaluates `[(doc_id, token_scores, doc_score)]` against a labeled corpus file.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    scored: Vec<ScoredTuple>,
    corpus_path: PathBuf,
) -> PyResult<Bound<'py, PyDict>> {
    let corpus = read_corpus_jsonl(&corpus_path).map_err(err)?;
    let scored: Vec<ScoredDocument> = scored
        .into_iter()
        .map(|(doc_id, token_scores, doc_score)| ScoredDocument {
            doc_id,
            token_scores,
            doc_score,
        })
        .collect();
    let report =
        tokencore::evaluate_run(&scored, &corpus, RunConfigEcho::default()).map_err(err)?;
    report_dict(py, &report)
}

/// Runs the full synthetic pipeline in memory and returns the report.
#[pyfunction]
#[pyo3(signature = (docs = 500, seed = 0, method = "tokencore", rate = 0.1, dim = 64, train_frac = 0.5, pooling = "max", aggregator = "mean", ann = false))]
#[allow(clippy::too_many_arguments)]
fn run_synthetic<'py>(
    py: Python<'py>,
    docs: usize,
    seed: u64,
    method: &str,
    rate: f64,
    dim: usize,
    train_frac: f64,
    pooling: &str,
    aggregator: &str,
    ann: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = ExperimentConfig {
        n_docs: docs,
        train_frac,
        pooling: parse(pooling)?,
        aggregator: parse(aggregator)?,
        method: parse(method)?,
        ..ExperimentConfig::default()
    }
    .with_seed(seed);
    cfg.corruption.doc_anomaly_rate = rate;
    cfg.embed.dim = dim;
    if ann {
        cfg.ann = AnnParams::enabled();
    }
    let out = py.detach(|| run_experiment(&cfg)).map_err(err)?;
    report_dict(py, &out.report)
}

#[pymodule]
fn tokencore_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TokenCoreError", m.py().get_type::<TokenCoreError>())?;
    m.add("DegenerateError", m.py().get_type::<DegenerateError>())?;
    m.add_class::<PyMemoryBank>()?;
    m.add_class::<PyDetector>()?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(auprc, m)?)?;
    m.add_function(wrap_pyfunction!(pool_word, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(hash_embed_word, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(split_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(embed_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_synthetic, m)?)?;
    Ok(())
}
