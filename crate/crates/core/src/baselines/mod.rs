//! Classic outlier detectors over word vectors, behind one fit/score
//! interface. Every detector scores higher for more anomalous points.

mod ecod;
mod iforest;
mod lof;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ecod::{Ecod, EcodTails};
pub use iforest::{average_path_length, IsolationForest};
pub use lof::Lof;

use crate::error::{Error, Result};
use crate::scoring::TokenScorer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Lof,
    IForest,
    Ecod,
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorKind::Lof => "lof",
            DetectorKind::IForest => "iforest",
            DetectorKind::Ecod => "ecod",
        })
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lof" => Ok(DetectorKind::Lof),
            "iforest" => Ok(DetectorKind::IForest),
            "ecod" => Ok(DetectorKind::Ecod),
            other => Err(Error::param(format!("unknown detector {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub lof_k: usize,
    pub n_trees: usize,
    /// iForest subsample size; `None` means `min(256, N)`.
    pub psi: Option<usize>,
    pub seed: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            lof_k: 20,
            n_trees: 100,
            psi: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub enum DetectorModel {
    Lof(Lof),
    IForest(IsolationForest),
    Ecod(Ecod),
}

impl DetectorModel {
    pub fn fit<V: AsRef<[f32]> + Sync>(
        kind: DetectorKind,
        params: &DetectorParams,
        train: &[V],
    ) -> Result<Self> {
        Ok(match kind {
            DetectorKind::Lof => DetectorModel::Lof(Lof::fit(train, params.lof_k)?),
            DetectorKind::IForest => {
                let psi = params.psi.unwrap_or_else(|| train.len().min(256));
                DetectorModel::IForest(IsolationForest::fit(
                    train,
                    params.n_trees,
                    psi,
                    params.seed,
                )?)
            }
            DetectorKind::Ecod => DetectorModel::Ecod(Ecod::fit(train)?),
        })
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorModel::Lof(_) => DetectorKind::Lof,
            DetectorModel::IForest(_) => DetectorKind::IForest,
            DetectorModel::Ecod(_) => DetectorKind::Ecod,
        }
    }

    pub fn score(&self, x: &[f32]) -> Result<f64> {
        match self {
            DetectorModel::Lof(m) => m.score(x),
            DetectorModel::IForest(m) => m.score(x),
            DetectorModel::Ecod(m) => m.score(x),
        }
    }
}

impl TokenScorer for DetectorModel {
    fn dim(&self) -> usize {
        match self {
            DetectorModel::Lof(m) => m.dim(),
            DetectorModel::IForest(m) => m.dim(),
            DetectorModel::Ecod(m) => m.dim(),
        }
    }

    fn score_vector(&self, v: &[f32]) -> Result<f64> {
        self.score(v)
    }
}

pub(crate) fn flatten<V: AsRef<[f32]>>(rows: &[V]) -> Result<(usize, Vec<f32>)> {
    let dim = rows
        .first()
        .map(|r| r.as_ref().len())
        .ok_or_else(|| Error::empty("no training vectors"))?;
    if dim == 0 {
        return Err(Error::schema("training vectors must have dimension >= 1"));
    }
    let mut data = Vec::with_capacity(rows.len() * dim);
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(Error::schema(format!(
                "training vector {i} has dimension {}, expected {dim}",
                r.len()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "training vector {i} has a non-finite value"
            )));
        }
        data.extend_from_slice(r);
    }
    Ok((dim, data))
}

pub(crate) fn check_dim(dim: usize, x: &[f32]) -> Result<()> {
    if x.len() != dim {
        return Err(Error::schema(format!(
            "query has dimension {}, model expects {dim}",
            x.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn ecod_tails_are_rank_based(
            train in prop::collection::vec(prop::collection::vec(-10i16..10, 2), 2..30),
            q in prop::collection::vec(-12i16..12, 2),
        ) {
            // x^3 + 2x is strictly increasing and exact in f32 on these integers
            let f = |x: i16| { let x = x as f32; x * x * x + 2.0 * x };
            let tr: Vec<Vec<f32>> = train.iter().map(|r| r.iter().map(|&x| x as f32).collect()).collect();
            let qr: Vec<f32> = q.iter().map(|&x| x as f32).collect();
            let tt: Vec<Vec<f32>> = train.iter().map(|r| r.iter().map(|&x| f(x)).collect()).collect();
            let qt: Vec<f32> = q.iter().map(|&x| f(x)).collect();
            let a = Ecod::fit(&tr).unwrap().tails(&qr).unwrap();
            let b = Ecod::fit(&tt).unwrap().tails(&qt).unwrap();
            prop_assert_eq!(a.left, b.left);
            prop_assert_eq!(a.right, b.right);
        }

        #[test]
        fn ecod_invariant_under_positive_affine(
            train in prop::collection::vec(prop::collection::vec(-10i16..10, 3), 2..30),
            q in prop::collection::vec(-12i16..12, 3),
            scale in 1u8..5,
            shift in -8i8..8,
        ) {
            let f = |x: i16| (x as f32) * scale as f32 + shift as f32;
            let tr: Vec<Vec<f32>> = train.iter().map(|r| r.iter().map(|&x| x as f32).collect()).collect();
            let qr: Vec<f32> = q.iter().map(|&x| x as f32).collect();
            let tt: Vec<Vec<f32>> = train.iter().map(|r| r.iter().map(|&x| f(x)).collect()).collect();
            let qt: Vec<f32> = q.iter().map(|&x| f(x)).collect();
            let a = Ecod::fit(&tr).unwrap().score(&qr).unwrap();
            let b = Ecod::fit(&tt).unwrap().score(&qt).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn detectors_are_finite_and_oriented(
            train in prop::collection::vec(prop::collection::vec(-3f32..3.0, 2), 25..60),
            q in prop::collection::vec(-5f32..5.0, 2),
        ) {
            let params = DetectorParams { lof_k: 5, n_trees: 20, psi: Some(16), seed: 1 };
            for kind in [DetectorKind::Lof, DetectorKind::IForest, DetectorKind::Ecod] {
                let m = DetectorModel::fit(kind, &params, &train).unwrap();
                let s = m.score(&q).unwrap();
                prop_assert!(s.is_finite());
                match kind {
                    DetectorKind::IForest => prop_assert!(s > 0.0 && s < 1.0),
                    _ => prop_assert!(s >= 0.0),
                }
            }
        }
    }

    #[test]
    fn default_psi_is_capped_by_train_size() {
        let train: Vec<Vec<f32>> = (0..40).map(|i| vec![i as f32]).collect();
        let m =
            DetectorModel::fit(DetectorKind::IForest, &DetectorParams::default(), &train).unwrap();
        match m {
            DetectorModel::IForest(f) => assert_eq!(f.psi(), 40),
            _ => unreachable!(),
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("LOF".parse::<DetectorKind>().unwrap(), DetectorKind::Lof);
        assert!("svdd".parse::<DetectorKind>().is_err());
    }
}
