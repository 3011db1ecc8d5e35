//! `tokencore` command line.
//!
//! ```bash
//! tokencore inject --generate --docs 500 --rate 0.1 --seed 7 --output corpus.jsonl
//! tokencore split --corpus corpus.jsonl --train-out train.jsonl --test-out test.jsonl --seed 7
//! tokencore embed --provider hash --corpus train.jsonl --out train_arc
//! tokencore embed --provider hash --corpus test.jsonl --out test_arc
//! tokencore bank --archive train_arc --out bank.tkbk
//! tokencore score --bank bank.tkbk --archive test_arc --out scores.jsonl
//! tokencore eval --scores scores.jsonl --corpus test.jsonl
//! ```
//!
//! Exit codes: 0 success, 1 file errors, 2 usage or validation errors,
//! 3 degenerate metric inputs (a single class).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use tokencore::archive::read_archive;
use tokencore::bank::{
    build_bank, load_bank, save_bank, AnnParams, SubsampleConfig, SubsampleMode,
};
use tokencore::baselines::DetectorParams;
use tokencore::corpus::{read_corpus_jsonl, write_corpus_jsonl};
use tokencore::metrics::{split_corpus, EvalArrays, RunConfigEcho};
use tokencore::pipeline::{run_experiment, score_with_detector, ExperimentConfig, Method};
use tokencore::pooling::PoolingMode;
use tokencore::scoring::{Aggregator, ScoredDocument};
use tokencore::synth::{
    embed_corpus, gen_normal_corpus, inject_gibberish, CorruptionConfig, HashEmbedConfig,
    VocabConfig,
};
use tokencore::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "tokencore",
    version,
    about = "Token-level text anomaly detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Insert labeled gibberish words into a corpus (read or generated).
    Inject(InjectArgs),
    /// Split a labeled corpus: a fraction of normals to train, the rest to test.
    Split(SplitArgs),
    /// Embed a corpus into an embedding archive.
    Embed(EmbedArgs),
    /// Build a memory bank file from a normal-only archive.
    Bank(BankArgs),
    /// Score a test archive with the memory bank or a baseline detector.
    Score(ScoreArgs),
    /// Compute AUROC/AUPRC at token and document level.
    Eval(EvalArgs),
    /// Run the whole synthetic pipeline in memory and print the report.
    Run(RunArgs),
}

#[derive(Args, Debug, Clone)]
struct VocabArgs {
    /// Number of documents to generate.
    #[arg(long, default_value_t = 500)]
    docs: usize,
    #[arg(long, default_value_t = 200)]
    vocab_size: usize,
    #[arg(long, default_value_t = 3)]
    word_len_min: usize,
    #[arg(long, default_value_t = 9)]
    word_len_max: usize,
    #[arg(long, default_value_t = 10)]
    doc_len_min: usize,
    #[arg(long, default_value_t = 40)]
    doc_len_max: usize,
    #[arg(long, default_value_t = 1.0)]
    zipf: f64,
}

impl VocabArgs {
    fn config(&self) -> VocabConfig {
        VocabConfig {
            vocab_size: self.vocab_size,
            word_len: (self.word_len_min, self.word_len_max),
            doc_len: (self.doc_len_min, self.doc_len_max),
            zipf_exponent: self.zipf,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct CorruptionArgs {
    /// Fraction of documents that receive gibberish.
    #[arg(long, default_value_t = 0.1)]
    rate: f64,
    #[arg(long, default_value_t = 1)]
    tokens_min: usize,
    #[arg(long, default_value_t = 3)]
    tokens_max: usize,
    #[arg(long, default_value_t = 6)]
    gibberish_min: usize,
    #[arg(long, default_value_t = 12)]
    gibberish_max: usize,
}

impl CorruptionArgs {
    fn config(&self, seed: u64) -> CorruptionConfig {
        CorruptionConfig {
            doc_anomaly_rate: self.rate,
            tokens_per_corruption: (self.tokens_min, self.tokens_max),
            gibberish_len: (self.gibberish_min, self.gibberish_max),
            seed,
        }
    }
}

#[derive(Args, Debug)]
struct InjectArgs {
    /// Corpus JSONL to corrupt.
    #[arg(
        long,
        conflicts_with = "generate",
        required_unless_present = "generate"
    )]
    input: Option<PathBuf>,
    /// Generate a normal corpus instead of reading one.
    #[arg(long)]
    generate: bool,
    #[command(flatten)]
    vocab: VocabArgs,
    #[command(flatten)]
    corruption: CorruptionArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Labeled corpus JSONL to write.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    train_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct HashArgs {
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    ngram_min: usize,
    #[arg(long, default_value_t = 4)]
    ngram_max: usize,
    #[arg(long, default_value_t = 0)]
    hash_seed: u64,
}

impl HashArgs {
    fn config(&self) -> HashEmbedConfig {
        HashEmbedConfig {
            dim: self.dim,
            ngram: (self.ngram_min, self.ngram_max),
            seed: self.hash_seed,
        }
    }
}

#[derive(Args, Debug)]
struct EmbedArgs {
    /// Embedding provider. Only `hash` is built in; transformer archives
    /// come from an external extractor writing the same format.
    #[arg(long, default_value = "hash")]
    provider: String,
    #[arg(long)]
    corpus: PathBuf,
    /// Archive directory to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hash: HashArgs,
}

#[derive(Args, Debug)]
struct BankArgs {
    /// Training archive; every document must be normal.
    #[arg(long)]
    archive: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "max")]
    pooling: String,
    #[arg(long, default_value = "none")]
    subsample: String,
    #[arg(long, default_value_t = 1.0)]
    keep_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct AnnArgs {
    /// Use an approximate (HNSW) index for nearest-neighbor search.
    #[arg(long)]
    ann: bool,
    #[arg(long, default_value_t = 0.95)]
    ann_target_recall: f64,
    #[arg(long, default_value_t = 16)]
    ann_degree: usize,
    #[arg(long, default_value_t = 200)]
    ann_ef_construction: usize,
    #[arg(long, default_value_t = 128)]
    ann_ef_search: usize,
    #[arg(long, default_value_t = 1000)]
    ann_probes: usize,
}

impl AnnArgs {
    fn params(&self) -> AnnParams {
        AnnParams {
            enabled: self.ann,
            target_recall_at_1: self.ann_target_recall,
            max_degree: self.ann_degree,
            ef_construction: self.ann_ef_construction,
            ef_search: self.ann_ef_search,
            probe_size: self.ann_probes,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct DetectorArgs {
    /// tokencore | lof | iforest | ecod
    #[arg(long, default_value = "tokencore")]
    detector: String,
    #[arg(long, default_value_t = 20)]
    lof_k: usize,
    #[arg(long, default_value_t = 100)]
    n_trees: usize,
    /// iForest subsample size (default min(256, N)).
    #[arg(long)]
    psi: Option<usize>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Test archive.
    #[arg(long)]
    archive: PathBuf,
    /// Bank file (tokencore detector).
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Training archive (baseline detectors).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Scores JSONL to write.
    #[arg(long)]
    out: PathBuf,
    /// Pooling for test words; defaults to the bank's pooling, or max.
    #[arg(long)]
    pooling: Option<String>,
    /// mean | max | topk:K
    #[arg(long, default_value = "mean")]
    aggregator: String,
    #[command(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    ann: AnnArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Labeled corpus JSONL (the test split, or the full corpus with --train-frac).
    #[arg(long)]
    corpus: PathBuf,
    /// Treat --corpus as the full corpus and evaluate only its test split.
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report as JSON here (stdout table is always printed).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump raw (level, label, score) rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    vocab: VocabArgs,
    #[command(flatten)]
    corruption: CorruptionArgs,
    #[command(flatten)]
    hash: HashArgs,
    #[arg(long, default_value_t = 0.5)]
    train_frac: f64,
    #[arg(long, default_value = "max")]
    pooling: String,
    #[arg(long, default_value = "mean")]
    aggregator: String,
    #[command(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    ann: AnnArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Written next to a scores file so `eval` can echo the configuration.
#[derive(Serialize, Deserialize)]
struct ScoresMeta {
    pooling: String,
    aggregator: String,
    detector: String,
    seed: u64,
}

fn meta_path(scores: &Path) -> PathBuf {
    let mut name = scores.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T> {
    s.parse()
}

fn cmd_inject(args: InjectArgs) -> Result<()> {
    let cfg = args.corruption.config(args.seed.wrapping_add(1));
    cfg.validate()?;
    let corpus = match &args.input {
        Some(path) => read_corpus_jsonl(path)?,
        None => {
            let vocab = args.vocab.config();
            vocab.validate()?;
            gen_normal_corpus(&vocab, args.vocab.docs, args.seed)?
        }
    };
    let corrupted = inject_gibberish(&corpus, &cfg)?;
    write_corpus_jsonl(&corrupted, &args.output)?;
    let n_anom = corrupted
        .documents
        .iter()
        .filter(|d| d.has_anomaly())
        .count();
    eprintln!(
        "wrote {} documents ({n_anom} anomalous) to {}",
        corrupted.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    let corpus = read_corpus_jsonl(&args.corpus)?;
    let (train, test) = split_corpus(&corpus, args.train_frac, args.seed)?;
    write_corpus_jsonl(&train, &args.train_out)?;
    write_corpus_jsonl(&test, &args.test_out)?;
    eprintln!(
        "train {} documents, test {} documents",
        train.len(),
        test.len()
    );
    Ok(())
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    if args.provider != "hash" {
        return Err(Error::Param(format!(
            "provider {:?} is not built in; only `hash` is available here",
            args.provider
        )));
    }
    let cfg = args.hash.config();
    cfg.validate()?;
    let corpus = read_corpus_jsonl(&args.corpus)?;
    let archive = embed_corpus(&corpus, &cfg)?;
    archive.write(&args.out)?;
    eprintln!(
        "embedded {} words from {} documents into {}",
        archive.matrix.n_rows(),
        corpus.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_bank(args: BankArgs) -> Result<()> {
    let pooling: PoolingMode = parse(&args.pooling)?;
    let sub = SubsampleConfig {
        mode: parse::<SubsampleMode>(&args.subsample)?,
        keep_fraction: args.keep_fraction,
        seed: args.seed,
    };
    sub.validate()?;
    let archive = read_archive(&args.archive)?;
    let bank = build_bank(&archive, pooling, &sub)?;
    save_bank(&bank, &args.out)?;
    eprintln!(
        "bank of {} vectors (dim {}) written to {}",
        bank.len(),
        bank.dim(),
        args.out.display()
    );
    Ok(())
}

fn detector_params(args: &DetectorArgs, seed: u64) -> DetectorParams {
    DetectorParams {
        lof_k: args.lof_k,
        n_trees: args.n_trees,
        psi: args.psi,
        seed,
    }
}

fn write_scores(path: &Path, scored: &[ScoredDocument]) -> Result<()> {
    let mut out = Vec::new();
    for s in scored {
        serde_json::to_writer(&mut out, s).expect("scores serialize");
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_scores(path: &Path) -> Result<Vec<ScoredDocument>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Schema(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let method: Method = parse(&args.detector.detector)?;
    let agg: Aggregator = parse(&args.aggregator)?;
    let explicit_pooling = args
        .pooling
        .as_deref()
        .map(parse::<PoolingMode>)
        .transpose()?;
    let ann = args.ann.params();
    ann.validate()?;
    let (scored, pooling) = match method.detector() {
        None => {
            let bank_path = args.bank.as_ref().ok_or_else(|| {
                Error::Param("--bank is required for the tokencore detector".into())
            })?;
            let bank = load_bank(bank_path)?;
            let pooling = explicit_pooling.unwrap_or(bank.provenance().pooling);
            let test = read_archive(&args.archive)?;
            let bank = bank.with_ann_index(&ann)?;
            (bank.score_archive(&test, pooling, agg)?, pooling)
        }
        Some(kind) => {
            let train_path = args.train.as_ref().ok_or_else(|| {
                Error::Param(format!("--train is required for the {kind} detector"))
            })?;
            let pooling = explicit_pooling.unwrap_or_default();
            let train = read_archive(train_path)?;
            let test = read_archive(&args.archive)?;
            let params = detector_params(&args.detector, args.seed);
            (
                score_with_detector(kind, &params, &train, &test, pooling, agg)?,
                pooling,
            )
        }
    };
    write_scores(&args.out, &scored)?;
    let meta = ScoresMeta {
        pooling: pooling.to_string(),
        aggregator: agg.to_string(),
        detector: method.to_string(),
        seed: args.seed,
    };
    fs::write(
        meta_path(&args.out),
        serde_json::to_vec_pretty(&meta).expect("meta serializes"),
    )?;
    eprintln!(
        "scored {} documents into {}",
        scored.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let scored = read_scores(&args.scores)?;
    let mut corpus = read_corpus_jsonl(&args.corpus)?;
    if let Some(frac) = args.train_frac {
        corpus = split_corpus(&corpus, frac, args.seed)?.1;
    }
    let echo = match fs::read(meta_path(&args.scores)) {
        Ok(bytes) => {
            let m: ScoresMeta = serde_json::from_slice(&bytes)
                .map_err(|e| Error::Schema(format!("scores metadata: {e}")))?;
            RunConfigEcho {
                pooling: m.pooling,
                aggregator: m.aggregator,
                detector: m.detector,
                seed: m.seed,
            }
        }
        Err(_) => RunConfigEcho {
            seed: args.seed,
            ..RunConfigEcho::default()
        },
    };
    let arrays = EvalArrays::collect(&scored, &corpus)?;
    if let Some(csv) = &args.csv {
        fs::write(csv, arrays.to_csv())?;
    }
    let report = arrays.evaluate(echo)?;
    emit_report(&report, args.out.as_deref())
}

fn emit_report(report: &tokencore::EvalReport, out: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    match out {
        Some(path) => fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    print!("{}", report.to_table());
    std::io::stdout().flush()?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = ExperimentConfig {
        n_docs: args.vocab.docs,
        vocab: args.vocab.config(),
        corruption: args.corruption.config(0),
        embed: args.hash.config(),
        train_frac: args.train_frac,
        pooling: parse(&args.pooling)?,
        aggregator: parse(&args.aggregator)?,
        method: parse(&args.detector.detector)?,
        detector: detector_params(&args.detector, 0),
        ann: args.ann.params(),
        ..ExperimentConfig::default()
    }
    .with_seed(args.seed);
    let out = run_experiment(&cfg)?;
    emit_report(&out.report, args.out.as_deref())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("TOKENCORE_THREADS") {
        let n: usize = v.parse().map_err(|_| {
            Error::Param(format!(
                "TOKENCORE_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        if n == 0 {
            return Err(Error::Param("TOKENCORE_THREADS must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Param(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Inject(a) => cmd_inject(a),
        Command::Split(a) => cmd_split(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Bank(a) => cmd_bank(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Run(a) => cmd_run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
