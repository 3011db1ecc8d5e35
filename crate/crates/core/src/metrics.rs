//! AUROC / AUPRC, the train/test split, and run reports.
//!
//! AUROC uses the Mann-Whitney statistic with average ranks for ties.
//! AUPRC is average precision with tied scores treated as one threshold.
//! Token metrics are always computed over the concatenation of every test
//! token, never averaged per document.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label};
use crate::error::{Error, Result};
use crate::scoring::ScoredDocument;

fn check_inputs(labels: &[bool], scores: &[f64]) -> Result<(usize, usize)> {
    if labels.len() != scores.len() {
        return Err(Error::schema(format!(
            "{} labels for {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::data("scores must be finite"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate(format!(
            "need both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

/// Indices sorted by score, then grouped into runs of equal score.
fn tie_groups(scores: &[f64], descending: bool) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let o = scores[a].total_cmp(&scores[b]);
        if descending {
            o.reverse()
        } else {
            o
        }
    });
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

pub fn auroc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    let (pos, neg) = check_inputs(labels, scores)?;
    // Twice the Mann-Whitney U, kept integral so ties stay exact.
    let mut twice_rank_sum = 0u128;
    let mut next_rank = 1u128;
    for group in tie_groups(scores, false) {
        let size = group.len() as u128;
        let positives = group.iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum += (2 * next_rank + size - 1) * positives;
        next_rank += size;
    }
    let (p, n) = (pos as u128, neg as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    let total = 2 * p * n;
    // Below one half, round via the complement so that negating the scores
    // yields exactly `1 - auroc`.
    Ok(if 2 * twice_u >= total {
        twice_u as f64 / total as f64
    } else {
        1.0 - (total - twice_u) as f64 / total as f64
    })
}

pub fn auprc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    let (pos, _) = check_inputs(labels, scores)?;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0f64;
    for group in tie_groups(scores, true) {
        let group_tp = group.iter().filter(|&&i| labels[i]).count();
        tp += group_tp;
        seen += group.len();
        if group_tp > 0 {
            let precision = tp as f64 / seen as f64;
            ap += (group_tp as f64 / pos as f64) * precision;
        }
    }
    Ok(ap)
}

/// Randomly moves `train_frac` of the normal documents into the training
/// corpus; everything else, normal or anomalous, goes to the test corpus.
/// Unlabeled documents without anomalous words count as normal. Both
/// outputs keep the input document order.
pub fn split_corpus(corpus: &Corpus, train_frac: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::param(format!(
            "train_frac must be in (0, 1) so normals remain for testing, got {train_frac}"
        )));
    }
    let normals: Vec<usize> = corpus
        .documents
        .iter()
        .enumerate()
        .filter(|(_, d)| !d.has_anomaly())
        .map(|(i, _)| i)
        .collect();
    if normals.len() < 2 {
        return Err(Error::degenerate(format!(
            "split needs at least 2 normal documents, found {}",
            normals.len()
        )));
    }
    let n_train =
        ((train_frac * normals.len() as f64).round() as usize).clamp(1, normals.len() - 1);
    let mut shuffled = normals;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; corpus.documents.len()];
    for &i in &shuffled[..n_train] {
        in_train[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (doc, keep) in corpus.documents.iter().zip(in_train) {
        if keep { &mut train } else { &mut test }.push(doc.clone());
    }
    Ok((
        Corpus::new(format!("{}.train", corpus.name), train),
        Corpus::new(format!("{}.test", corpus.name), test),
    ))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfigEcho {
    pub pooling: String,
    pub aggregator: String,
    pub detector: String,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub token_auroc: f64,
    pub token_auprc: f64,
    pub doc_auroc: f64,
    pub doc_auprc: f64,
    pub token_counts: ClassCounts,
    pub doc_counts: ClassCounts,
    pub config: RunConfigEcho,
}

impl EvalReport {
    /// Plain-text table: one row per granularity, ROC and PRC columns.
    pub fn to_table(&self) -> String {
        let method = if self.config.detector.is_empty() {
            "-"
        } else {
            self.config.detector.as_str()
        };
        let mut s = String::new();
        s.push_str(&format!(
            "{:<10}{:<12}{:>8}{:>8}{:>10}{:>10}\n",
            "level", "method", "ROC", "PRC", "pos", "neg"
        ));
        s.push_str(&format!(
            "{:<10}{:<12}{:>8.4}{:>8.4}{:>10}{:>10}\n",
            "Token",
            method,
            self.token_auroc,
            self.token_auprc,
            self.token_counts.positives,
            self.token_counts.negatives
        ));
        s.push_str(&format!(
            "{:<10}{:<12}{:>8.4}{:>8.4}{:>10}{:>10}\n",
            "Document",
            method,
            self.doc_auroc,
            self.doc_auprc,
            self.doc_counts.positives,
            self.doc_counts.negatives
        ));
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}

/// Labels and scores laid out flat, test-corpus order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalArrays {
    pub token_labels: Vec<bool>,
    pub token_scores: Vec<f64>,
    pub doc_labels: Vec<bool>,
    pub doc_scores: Vec<f64>,
}

impl EvalArrays {
    /// Matches scored documents to the labeled test corpus by `doc_id`.
    /// Scored documents absent from the corpus are ignored.
    pub fn collect(scored: &[ScoredDocument], test: &Corpus) -> Result<Self> {
        let by_id: HashMap<&str, &ScoredDocument> =
            scored.iter().map(|s| (s.doc_id.as_str(), s)).collect();
        let mut out = EvalArrays::default();
        for doc in &test.documents {
            let doc_label = doc
                .label
                .ok_or_else(|| Error::schema(format!("document {:?} has no label", doc.doc_id)))?;
            let word_labels = doc.word_labels().ok_or_else(|| {
                Error::schema(format!("document {:?} has unlabeled words", doc.doc_id))
            })?;
            if word_labels.iter().any(|l| l.is_anomalous()) && doc_label == Label::Normal {
                return Err(Error::schema(format!(
                    "document {:?} has an anomalous word but a normal label",
                    doc.doc_id
                )));
            }
            let s = by_id.get(doc.doc_id.as_str()).ok_or_else(|| {
                Error::schema(format!("document {:?} was not scored", doc.doc_id))
            })?;
            if s.token_scores.len() != word_labels.len() {
                return Err(Error::schema(format!(
                    "document {:?}: {} token scores for {} words",
                    doc.doc_id,
                    s.token_scores.len(),
                    word_labels.len()
                )));
            }
            out.token_labels
                .extend(word_labels.iter().map(|l| l.as_bool()));
            out.token_scores.extend_from_slice(&s.token_scores);
            out.doc_labels.push(doc_label.as_bool());
            out.doc_scores.push(s.doc_score);
        }
        Ok(out)
    }

    pub fn evaluate(&self, config: RunConfigEcho) -> Result<EvalReport> {
        let counts = |labels: &[bool]| {
            let positives = labels.iter().filter(|&&l| l).count();
            ClassCounts {
                positives,
                negatives: labels.len() - positives,
            }
        };
        Ok(EvalReport {
            token_auroc: auroc(&self.token_labels, &self.token_scores)?,
            token_auprc: auprc(&self.token_labels, &self.token_scores)?,
            doc_auroc: auroc(&self.doc_labels, &self.doc_scores)?,
            doc_auprc: auprc(&self.doc_labels, &self.doc_scores)?,
            token_counts: counts(&self.token_labels),
            doc_counts: counts(&self.doc_labels),
            config,
        })
    }

    /// `level,label,score` rows for external re-analysis.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,label,score\n");
        for (l, v) in self.token_labels.iter().zip(&self.token_scores) {
            s.push_str(&format!("token,{},{}\n", u8::from(*l), v));
        }
        for (l, v) in self.doc_labels.iter().zip(&self.doc_scores) {
            s.push_str(&format!("document,{},{}\n", u8::from(*l), v));
        }
        s
    }
}

pub fn evaluate_run(
    scored: &[ScoredDocument],
    test: &Corpus,
    config: RunConfigEcho,
) -> Result<EvalReport> {
    EvalArrays::collect(scored, test)?.evaluate(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, WordToken};

    #[test]
    fn auroc_basic_cases() {
        assert_eq!(auroc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(auroc(&[true, false], &[0.1, 0.9]).unwrap(), 0.0);
        assert_eq!(auroc(&[true, false, true, false], &[0.5; 4]).unwrap(), 0.5);
    }

    #[test]
    fn auprc_basic_cases() {
        assert_eq!(auprc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(auprc(&[false, true], &[0.9, 0.1]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_degenerate() {
        assert!(matches!(
            auroc(&[true, true], &[0.1, 0.2]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(auprc(&[false], &[0.1]), Err(Error::Degenerate(_))));
        assert!(matches!(auroc(&[true], &[0.1, 0.2]), Err(Error::Schema(_))));
    }

    fn labeled_corpus(normals: usize, anomalies: usize) -> Corpus {
        let mut docs = Vec::new();
        for i in 0..normals {
            docs.push(Document::new(
                format!("n{i}"),
                vec![WordToken::labeled("ok", Label::Normal)],
                Some(Label::Normal),
            ));
        }
        for i in 0..anomalies {
            docs.push(Document::new(
                format!("a{i}"),
                vec![
                    WordToken::labeled("ok", Label::Normal),
                    WordToken::labeled("zzq", Label::Anomalous),
                ],
                Some(Label::Anomalous),
            ));
        }
        Corpus::new("c", docs)
    }

    #[test]
    fn half_of_normals_go_to_train() {
        let c = labeled_corpus(10, 2);
        let (train, test) = split_corpus(&c, 0.5, 3).unwrap();
        assert_eq!(train.len(), 5);
        assert!(train.documents.iter().all(|d| !d.has_anomaly()));
        assert_eq!(test.len(), 7);
        assert_eq!(test.documents.iter().filter(|d| d.has_anomaly()).count(), 2);
        let mut ids: Vec<_> = train
            .documents
            .iter()
            .chain(&test.documents)
            .map(|d| d.doc_id.clone())
            .collect();
        ids.sort();
        let mut all: Vec<_> = c.documents.iter().map(|d| d.doc_id.clone()).collect();
        all.sort();
        assert_eq!(ids, all);
        assert_eq!(split_corpus(&c, 0.5, 3).unwrap(), (train, test));
    }

    #[test]
    fn split_rejects_full_fraction_and_no_normals() {
        let c = labeled_corpus(10, 2);
        assert!(matches!(split_corpus(&c, 1.0, 0), Err(Error::Param(_))));
        let only_anomalies = labeled_corpus(0, 3);
        assert!(matches!(
            split_corpus(&only_anomalies, 0.5, 0),
            Err(Error::Degenerate(_))
        ));
    }

    fn score_perfect(c: &Corpus) -> Vec<ScoredDocument> {
        c.documents
            .iter()
            .map(|d| {
                let token_scores: Vec<f64> = d
                    .words
                    .iter()
                    .map(|w| {
                        if w.label == Some(Label::Anomalous) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let doc_score = token_scores.iter().sum::<f64>() / token_scores.len() as f64;
                ScoredDocument {
                    doc_id: d.doc_id.clone(),
                    token_scores,
                    doc_score,
                }
            })
            .collect()
    }

    #[test]
    fn perfect_detector_scores_one_everywhere() {
        let c = labeled_corpus(4, 3);
        let r = evaluate_run(&score_perfect(&c), &c, RunConfigEcho::default()).unwrap();
        assert_eq!(
            (r.token_auroc, r.token_auprc, r.doc_auroc, r.doc_auprc),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(
            r.doc_counts,
            ClassCounts {
                positives: 3,
                negatives: 4
            }
        );
        assert_eq!(
            r.token_counts,
            ClassCounts {
                positives: 3,
                negatives: 7
            }
        );
        assert!(r.to_table().contains("Token"));
    }

    #[test]
    fn constant_scores_give_half() {
        let c = labeled_corpus(4, 3);
        let mut s = score_perfect(&c);
        for d in &mut s {
            d.token_scores.iter_mut().for_each(|v| *v = 0.3);
            d.doc_score = 0.3;
        }
        let r = evaluate_run(&s, &c, RunConfigEcho::default()).unwrap();
        assert_eq!((r.token_auroc, r.doc_auroc), (0.5, 0.5));
    }

    #[test]
    fn missing_labels_are_schema_errors() {
        let mut c = labeled_corpus(2, 1);
        c.documents[0].label = None;
        let s = score_perfect(&c);
        assert!(matches!(
            evaluate_run(&s, &c, RunConfigEcho::default()),
            Err(Error::Schema(_))
        ));
    }
}
