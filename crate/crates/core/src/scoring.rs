//! Token scores to document scores.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How token scores combine into a document score. `Mean` is the default;
/// `Max` and `TopKMean` trade dilution of single strong tokens against
/// sensitivity to isolated false positives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Mean,
    Max,
    TopKMean(usize),
}

impl Aggregator {
    /// Aggregates non-empty `scores`. Sums run in input order in `f64`.
    pub fn aggregate(self, scores: &[f64]) -> Result<f64> {
        if scores.is_empty() {
            return Err(Error::empty("cannot aggregate zero token scores"));
        }
        Ok(match self {
            Aggregator::Mean => mean(scores),
            Aggregator::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregator::TopKMean(k) => {
                let mut sorted = scores.to_vec();
                sorted.sort_by(|a, b| b.total_cmp(a));
                sorted.truncate(k.max(1));
                mean(&sorted)
            }
        })
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregator::Mean => f.write_str("mean"),
            Aggregator::Max => f.write_str("max"),
            Aggregator::TopKMean(k) => write!(f, "topk:{k}"),
        }
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    /// Accepts `mean`, `max`, and `topk:K`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "mean" => Ok(Aggregator::Mean),
            "max" => Ok(Aggregator::Max),
            _ => {
                let k = lower
                    .strip_prefix("topk:")
                    .or_else(|| lower.strip_prefix("topk_mean:"))
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| Error::param(format!("unknown aggregator {s:?}")))?;
                if k == 0 {
                    return Err(Error::param("topk aggregator needs k >= 1"));
                }
                Ok(Aggregator::TopKMean(k))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub doc_id: String,
    pub token_scores: Vec<f64>,
    pub doc_score: f64,
}

/// Anything that maps one word vector to an anomaly score, higher meaning
/// more anomalous.
pub trait TokenScorer: Sync {
    fn dim(&self) -> usize;

    fn score_vector(&self, v: &[f32]) -> Result<f64>;
}

/// Scores every word of one document and aggregates.
pub fn score_words<S, V>(
    scorer: &S,
    doc_id: &str,
    words: &[V],
    agg: Aggregator,
) -> Result<ScoredDocument>
where
    S: TokenScorer + ?Sized,
    V: AsRef<[f32]>,
{
    if words.is_empty() {
        return Err(Error::empty(format!("document {doc_id:?} has no tokens")));
    }
    let token_scores = words
        .iter()
        .map(|w| scorer.score_vector(w.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let doc_score = agg.aggregate(&token_scores)?;
    Ok(ScoredDocument {
        doc_id: doc_id.to_owned(),
        token_scores,
        doc_score,
    })
}

/// Scores many documents in parallel; output order matches input order.
pub fn score_documents<S, V>(
    scorer: &S,
    docs: &[(String, Vec<V>)],
    agg: Aggregator,
) -> Result<Vec<ScoredDocument>>
where
    S: TokenScorer + ?Sized,
    V: AsRef<[f32]> + Sync,
{
    docs.par_iter()
        .map(|(id, words)| score_words(scorer, id, words, agg))
        .collect()
}
