//! Local outlier factor in novelty mode: densities are fitted on the
//! training set, queries are scored against it.

use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::distance::sq_l2;
use crate::error::{Error, Result};

/// Added to the mean reachability distance so duplicate-heavy data never
/// divides by zero.
const REACH_EPS: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Lof {
    dim: usize,
    k: usize,
    data: Vec<f32>,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
struct Near {
    sq: f64,
    idx: usize,
}

impl Eq for Near {}

impl Ord for Near {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sq.total_cmp(&other.sq).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Near {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// The `k` nearest rows to `q`, ascending, skipping row `skip`.
fn knn(data: &[f32], dim: usize, q: &[f32], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
    let mut heap: BinaryHeap<Near> = BinaryHeap::with_capacity(k + 1);
    for (idx, row) in data.chunks_exact(dim).enumerate() {
        if Some(idx) == skip {
            continue;
        }
        let cand = Near {
            sq: sq_l2(q, row),
            idx,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("k >= 1") {
            heap.pop();
            heap.push(cand);
        }
    }
    heap.into_sorted_vec()
        .into_iter()
        .map(|n| (n.idx, n.sq.sqrt()))
        .collect()
}

fn lrd_from(neighbors: &[(usize, f64)], k_distance: &[f64]) -> f64 {
    let reach: f64 = neighbors
        .iter()
        .map(|&(o, d)| d.max(k_distance[o]))
        .sum::<f64>()
        / neighbors.len() as f64;
    1.0 / (reach + REACH_EPS)
}

impl Lof {
    pub fn fit<V: AsRef<[f32]>>(train: &[V], k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::param("LOF needs k >= 1"));
        }
        if train.len() <= k {
            return Err(Error::param(format!(
                "LOF needs more than k={k} training points, got {}",
                train.len()
            )));
        }
        let (dim, data) = super::flatten(train)?;
        let n = train.len();
        let neighbors: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| knn(&data, dim, &data[i * dim..(i + 1) * dim], k, Some(i)))
            .collect();
        let k_distance: Vec<f64> = neighbors.iter().map(|nb| nb[k - 1].1).collect();
        let lrd = neighbors
            .iter()
            .map(|nb| lrd_from(nb, &k_distance))
            .collect();
        Ok(Lof {
            dim,
            k,
            data,
            k_distance,
            lrd,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Mean lrd of the query's k neighbors over the query's own lrd.
    /// Around 1 for inliers, larger for outliers.
    pub fn score(&self, x: &[f32]) -> Result<f64> {
        super::check_dim(self.dim, x)?;
        let nb = knn(&self.data, self.dim, x, self.k, None);
        let lrd_x = lrd_from(&nb, &self.k_distance);
        let mean_lrd = nb.iter().map(|&(o, _)| self.lrd[o]).sum::<f64>() / nb.len() as f64;
        Ok(mean_lrd / lrd_x)
    }
}
