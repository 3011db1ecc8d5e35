//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs with `cargo test --test acceptance`.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tokencore::bank::Provenance;
use tokencore::baselines::{DetectorKind, DetectorModel, DetectorParams};
use tokencore::distance::sq_l2;
use tokencore::pipeline::{run_experiment, ExperimentConfig, ExperimentOutput};
use tokencore::{
    auprc, auroc, load_bank, pool_word, save_bank, Aggregator, AnnParams, MemoryBank, PoolingMode,
};

type Outcome = std::result::Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| rng.sample::<f32, _>(StandardNormal))
                .collect()
        })
        .collect()
}

fn bank_of(rows: &[Vec<f32>], seed: u64) -> MemoryBank {
    let prov = Provenance {
        source: "acceptance".into(),
        pooling: PoolingMode::Max,
    };
    MemoryBank::from_vectors(rows[0].len(), rows.iter(), prov, seed).unwrap()
}

fn pool(n: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
}

fn synthetic_config(ann: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        n_docs: 500,
        ..ExperimentConfig::default()
    }
    .with_seed(20240);
    cfg.corruption.doc_anomaly_rate = 0.1;
    cfg.embed.dim = 64;
    cfg.train_frac = 0.5;
    if ann {
        cfg.ann = AnnParams::enabled();
    }
    cfg
}

fn output_bytes(out: &ExperimentOutput) -> (Vec<u8>, Vec<u8>) {
    let mut scores = Vec::new();
    for s in &out.scored {
        serde_json::to_writer(&mut scores, s).unwrap();
        scores.push(b'\n');
    }
    (scores, serde_json::to_vec(&out.report).unwrap())
}

fn c1_exact_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows = gaussian_rows(&mut rng, 1000, 32);
    let queries = gaussian_rows(&mut rng, 200, 32);
    let start = Instant::now();
    let bank = bank_of(&rows, 1);
    let got: Vec<f64> = queries
        .iter()
        .map(|q| bank.score_token(q).unwrap())
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    for (q, g) in queries.iter().zip(&got) {
        // Independent O(N*M) scan in plain f64.
        let want = rows
            .iter()
            .map(|r| {
                r.iter()
                    .zip(q)
                    .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max((g - want).abs());
    }
    if worst > 1e-5 {
        return Err(format!("max abs error {worst:e} > 1e-5"));
    }
    if elapsed >= 5.0 {
        return Err(format!("took {elapsed:.2} s"));
    }
    Ok(format!(
        "200 queries, max abs error {worst:e}, {elapsed:.3} s"
    ))
}

fn run_props<S, F>(name: &str, strategy: S, test: F) -> std::result::Result<(), String>
where
    S: Strategy,
    F: Fn(S::Value) -> std::result::Result<(), TestCaseError>,
{
    let mut runner = TestRunner::new(PtConfig {
        cases: 1000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    runner
        .run(&strategy, test)
        .map_err(|e| format!("{name}: {e}"))
}

fn subword_lists() -> impl Strategy<Value = Vec<Vec<f32>>> {
    (1usize..8, 1usize..10)
        .prop_flat_map(|(d, n)| prop::collection::vec(prop::collection::vec(-1e3f32..1e3, d), n))
}

fn c2_pooling_aggregation() -> Outcome {
    run_props("max dominance", subword_lists(), |v| {
        let p = pool_word(&v, PoolingMode::Max).unwrap();
        for j in 0..p.len() {
            prop_assert!(v.iter().all(|r| p[j] >= r[j]));
            prop_assert!(v.iter().any(|r| p[j] == r[j]));
        }
        Ok(())
    })?;
    run_props(
        "single subword identity",
        prop::collection::vec(-1e3f32..1e3, 1..16),
        |r| {
            for mode in [PoolingMode::Max, PoolingMode::Mean, PoolingMode::First] {
                prop_assert_eq!(
                    pool_word(std::slice::from_ref(&r), mode).unwrap(),
                    r.clone()
                );
            }
            Ok(())
        },
    )?;
    let permuted = subword_lists().prop_flat_map(|v| {
        let n = v.len();
        (Just(v), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    });
    run_props("permutation invariance", permuted, |(v, perm)| {
        let w: Vec<Vec<f32>> = perm.iter().map(|&i| v[i].clone()).collect();
        prop_assert_eq!(
            pool_word(&v, PoolingMode::Max).unwrap(),
            pool_word(&w, PoolingMode::Max).unwrap()
        );
        let a = pool_word(&v, PoolingMode::Mean).unwrap();
        let b = pool_word(&w, PoolingMode::Mean).unwrap();
        for j in 0..a.len() {
            // Summation order can move the f32 result by one rounding step.
            let scale = v.iter().map(|r| r[j].abs()).fold(1.0f32, f32::max);
            prop_assert!(
                (a[j] - b[j]).abs() <= f32::EPSILON * scale,
                "{} vs {}",
                a[j],
                b[j]
            );
        }
        Ok(())
    })?;
    let scores = prop::collection::vec(0.0f64..1e6, 1..64);
    run_props("aggregation", scores, |s| {
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = Aggregator::Mean.aggregate(&s).unwrap();
        prop_assert!(mean >= lo && mean <= hi);
        prop_assert_eq!(Aggregator::Max.aggregate(&s).unwrap(), hi);
        Ok(())
    })?;
    Ok("4 properties x 1000 cases, 0 failures".into())
}

fn pairwise_auroc(labels: &[bool], scores: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            den += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / den
}

fn sweep_auprc(labels: &[bool], scores: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (l, s) in labels.iter().zip(scores) {
            if *s >= t {
                if *l {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / pos;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

fn c3_metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case in 0..500 {
        let n = rng.gen_range(10..=500);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        // Small integer grid forces ties; exact under the cubic map below.
        let levels = rng.gen_range(2..40);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64).collect();
        let roc = auroc(&labels, &scores).unwrap();
        let prc = auprc(&labels, &scores).unwrap();
        worst = worst
            .max((roc - pairwise_auroc(&labels, &scores)).abs())
            .max((prc - sweep_auprc(&labels, &scores)).abs());
        if worst > 1e-9 {
            return Err(format!("case {case}: oracle mismatch {worst:e}"));
        }
        let warped: Vec<f64> = scores.iter().map(|x| x * x * x + 2.0 * x - 7.0).collect();
        if auroc(&labels, &warped).unwrap() != roc || auprc(&labels, &warped).unwrap() != prc {
            return Err(format!("case {case}: not invariant under a monotone map"));
        }
        let negated: Vec<f64> = scores.iter().map(|x| -x).collect();
        if auroc(&labels, &negated).unwrap() != 1.0 - roc {
            return Err(format!(
                "case {case}: negation gives {} vs {}",
                auroc(&labels, &negated).unwrap(),
                1.0 - roc
            ));
        }
    }
    Ok(format!("500 sets, max oracle error {worst:e}"))
}

fn c4_synthetic() -> Outcome {
    let start = Instant::now();
    let out = pool(1)
        .install(|| run_experiment(&synthetic_config(false)))
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let r = &out.report;
    let msg = format!(
        "token AUROC {:.4}, doc AUROC {:.4}, {:.2} s single-threaded",
        r.token_auroc, r.doc_auroc, elapsed
    );
    if r.token_auroc >= 0.90 && r.doc_auroc >= 0.90 && elapsed < 60.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn toy_blob(seed: u64) -> (Vec<Vec<f32>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = gaussian_rows(&mut rng, 200, 2);
    let mut labels = vec![false; 200];
    while labels.len() < 210 {
        let p = vec![rng.gen_range(-10.0f32..10.0), rng.gen_range(-10.0f32..10.0)];
        if p[0].abs().max(p[1].abs()) >= 6.0 {
            rows.push(p);
            labels.push(true);
        }
    }
    (rows, labels)
}

fn toy_scores(kind: DetectorKind) -> Vec<f64> {
    let (rows, _) = toy_blob(5);
    let params = DetectorParams {
        seed: 5,
        ..DetectorParams::default()
    };
    let model = DetectorModel::fit(kind, &params, &rows).unwrap();
    rows.iter().map(|r| model.score(r).unwrap()).collect()
}

fn c5_baselines() -> Outcome {
    let (_, labels) = toy_blob(5);
    let mut parts = Vec::new();
    let mut failed = false;
    for kind in [DetectorKind::Lof, DetectorKind::IForest, DetectorKind::Ecod] {
        let scores = toy_scores(kind);
        let roc = auroc(&labels, &scores).unwrap();
        failed |= roc < 0.95;
        parts.push(format!("{kind} {roc:.4}"));
        if kind == DetectorKind::IForest {
            let min_out = scores[200..].iter().copied().fold(f64::INFINITY, f64::min);
            let max_in = scores[..200]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            failed |= min_out <= max_in;
            parts.push(format!(
                "iforest min outlier {min_out:.4} > max inlier {max_in:.4}"
            ));
        }
    }
    let msg = parts.join(", ");
    if failed {
        Err(msg)
    } else {
        Ok(msg)
    }
}

fn ann_recall() -> (f64, Vec<(usize, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows = gaussian_rows(&mut rng, 10_000, 32);
    let queries = gaussian_rows(&mut rng, 1000, 32);
    let exact = bank_of(&rows, 6);
    let ann = exact.clone().with_ann_index(&AnnParams::enabled()).unwrap();
    let mut hits = 0;
    let mut answers = Vec::with_capacity(queries.len());
    for q in &queries {
        let a = ann.nearest(q).unwrap();
        let e = exact.nearest_exact(q).unwrap();
        if a.1 == e.1 {
            hits += 1;
        }
        answers.push(a);
    }
    (hits as f64 / queries.len() as f64, answers)
}

fn c6_ann() -> Outcome {
    let (recall, _) = ann_recall();
    let exact = run_experiment(&synthetic_config(false))
        .map_err(|e| e.to_string())?
        .report;
    let approx = run_experiment(&synthetic_config(true))
        .map_err(|e| e.to_string())?
        .report;
    let dt = (exact.token_auroc - approx.token_auroc).abs();
    let dd = (exact.doc_auroc - approx.doc_auroc).abs();
    let msg = format!("recall@1 {recall:.3} on 10k x 32, AUROC shift token {dt:.4} doc {dd:.4}");
    if recall >= 0.95 && dt <= 0.02 && dd <= 0.02 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn cli_pipeline(dir: &Path, threads: &str) -> Vec<u8> {
    let exe = env!("CARGO_BIN_EXE_tokencore");
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec![
            "inject",
            "--generate",
            "--docs",
            "500",
            "--rate",
            "0.1",
            "--seed",
            "11",
            "--output",
            &p("c.jsonl"),
        ],
        vec![
            "split",
            "--corpus",
            &p("c.jsonl"),
            "--seed",
            "11",
            "--train-out",
            &p("tr.jsonl"),
            "--test-out",
            &p("te.jsonl"),
        ],
        vec!["embed", "--corpus", &p("tr.jsonl"), "--out", &p("tr")],
        vec!["embed", "--corpus", &p("te.jsonl"), "--out", &p("te")],
        vec!["bank", "--archive", &p("tr"), "--out", &p("b.tkbk")],
        vec![
            "score",
            "--bank",
            &p("b.tkbk"),
            "--archive",
            &p("te"),
            "--ann",
            "--out",
            &p("s.jsonl"),
        ],
        vec![
            "score",
            "--detector",
            "iforest",
            "--train",
            &p("tr"),
            "--archive",
            &p("te"),
            "--out",
            &p("f.jsonl"),
        ],
        vec![
            "eval",
            "--scores",
            &p("s.jsonl"),
            "--corpus",
            &p("te.jsonl"),
            "--out",
            &p("r.json"),
        ],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for args in steps {
        let status = Command::new(exe)
            .args(&args)
            .env("TOKENCORE_THREADS", threads)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&status.stderr)
        );
    }
    let mut all = Vec::new();
    for f in ["c.jsonl", "b.tkbk", "s.jsonl", "f.jsonl", "r.json"] {
        all.extend(std::fs::read(dir.join(f)).unwrap());
    }
    all
}

fn c7_determinism() -> Outcome {
    let mut runs = Vec::new();
    for threads in [1, 4, 1] {
        let p = pool(threads);
        let synth = p.install(|| output_bytes(&run_experiment(&synthetic_config(false)).unwrap()));
        let synth_ann =
            p.install(|| output_bytes(&run_experiment(&synthetic_config(true)).unwrap()));
        let toy: Vec<u64> = p.install(|| {
            [DetectorKind::Lof, DetectorKind::IForest, DetectorKind::Ecod]
                .into_iter()
                .flat_map(toy_scores)
                .map(f64::to_bits)
                .collect()
        });
        let ann: Vec<(usize, u64)> = p.install(|| {
            ann_recall()
                .1
                .into_iter()
                .map(|(i, d)| (i, d.to_bits()))
                .collect()
        });
        runs.push((synth, synth_ann, toy, ann));
    }
    if runs.iter().any(|r| *r != runs[0]) {
        return Err("in-process reruns differ across 1/4/1 threads".into());
    }
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if cli_pipeline(a.path(), "1") != cli_pipeline(b.path(), "4") {
        return Err("CLI outputs differ between TOKENCORE_THREADS=1 and 4".into());
    }
    Ok("criteria 4-6 bit-identical over 3 reruns (1/4/1 threads); CLI files identical at 1 and 4 threads".into())
}

fn c8_persistence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bank = bank_of(&gaussian_rows(&mut rng, 2000, 48), 8);
    let queries = gaussian_rows(&mut rng, 100, 48);
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.tkbk"), dir.path().join("b.tkbk"));
    save_bank(&bank, &p1).map_err(|e| e.to_string())?;
    let loaded = load_bank(&p1).map_err(|e| e.to_string())?;
    save_bank(&loaded, &p2).map_err(|e| e.to_string())?;
    if std::fs::read(&p1).unwrap() != std::fs::read(&p2).unwrap() {
        return Err("re-saved bank differs".into());
    }
    if loaded != bank {
        return Err("loaded bank differs".into());
    }
    for q in &queries {
        if bank.score_token(q).unwrap().to_bits() != loaded.score_token(q).unwrap().to_bits() {
            return Err("query score changed after reload".into());
        }
        // Sanity on the scorer itself: the returned row really is that far.
        let (i, d) = loaded.nearest_exact(q).unwrap();
        assert_eq!(sq_l2(loaded.vector(i), q), d);
    }
    Ok(format!(
        "{} bytes round trip identical, 100 query scores bit-identical",
        std::fs::metadata(&p1).unwrap().len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "exact score oracle", c1_exact_oracle),
        (2, "pooling and aggregation algebra", c2_pooling_aggregation),
        (3, "metrics oracle", c3_metrics_oracle),
        (4, "synthetic end to end", c4_synthetic),
        (5, "baseline sanity", c5_baselines),
        (6, "ANN contract", c6_ann),
        (7, "determinism", c7_determinism),
        (8, "persistence", c8_persistence),
    ];
    // Quiet the default hook; failures are reported on the criterion line.
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (n, name, f) in criteria {
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {n} ({name}): PASS: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n} ({name}): FAIL: {detail}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
