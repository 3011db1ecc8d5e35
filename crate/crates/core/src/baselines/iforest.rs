//! Isolation forest: random axis-aligned partitioning, scored by how
//! quickly a point gets isolated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average unsuccessful-search path length in a BST of `n` nodes.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Split {
        feature: usize,
        threshold: f32,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn grow(
        data: &[f32],
        dim: usize,
        sample: &mut [usize],
        height_limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        tree.build(data, dim, sample, 0, height_limit, rng);
        tree
    }

    fn build(
        &mut self,
        data: &[f32],
        dim: usize,
        rows: &mut [usize],
        depth: usize,
        height_limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= height_limit || rows.len() <= 1 {
            return id;
        }
        let value = |r: usize, f: usize| data[r * dim + f];
        let spread: Vec<(usize, f32, f32)> = (0..dim)
            .filter_map(|f| {
                let (lo, hi) =
                    rows.iter()
                        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &r| {
                            let v = value(r, f);
                            (lo.min(v), hi.max(v))
                        });
                (lo < hi).then_some((f, lo, hi))
            })
            .collect();
        if spread.is_empty() {
            return id;
        }
        let (feature, lo, hi) = spread[rng.gen_range(0..spread.len())];
        let mut threshold = rng.gen_range(lo..hi);
        if threshold <= lo {
            // both sides must be non-empty
            threshold = lo.next_up();
        }
        let mut split = 0;
        for i in 0..rows.len() {
            if value(rows[i], feature) < threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.build(data, dim, l, depth + 1, height_limit, rng);
        let right = self.build(data, dim, r, depth + 1, height_limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn path_length(&self, x: &[f32]) -> f64 {
        let mut node = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth as f64 + average_path_length(size),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[feature] < threshold { left } else { right };
                    depth += 1;
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct IsolationForest {
    dim: usize,
    psi: usize,
    seed: u64,
    trees: Vec<Tree>,
}

impl IsolationForest {
    /// Each tree gets its own generator derived from `seed` and the tree
    /// index, so parallel growth stays deterministic.
    pub fn fit<V: AsRef<[f32]>>(
        train: &[V],
        n_trees: usize,
        psi: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_trees < 1 {
            return Err(Error::param("iForest needs at least one tree"));
        }
        if psi < 2 {
            return Err(Error::param("iForest subsample size must be >= 2"));
        }
        if psi > train.len() {
            return Err(Error::param(format!(
                "iForest subsample size {psi} exceeds training size {}",
                train.len()
            )));
        }
        let (dim, data) = super::flatten(train)?;
        let n = train.len();
        let height_limit = (psi as f64).log2().ceil() as usize;
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let mut sample = rand::seq::index::sample(&mut rng, n, psi).into_vec();
                Tree::grow(&data, dim, &mut sample, height_limit, &mut rng)
            })
            .collect();
        Ok(IsolationForest {
            dim,
            psi,
            seed,
            trees,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn psi(&self) -> usize {
        self.psi
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Mean path length over the forest.
    pub fn expected_path_length(&self, x: &[f32]) -> Result<f64> {
        super::check_dim(self.dim, x)?;
        Ok(self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// `2^(-E[h(x)] / c(psi))`, in (0, 1).
    pub fn score(&self, x: &[f32]) -> Result<f64> {
        let h = self.expected_path_length(x)?;
        Ok(2f64.powf(-h / average_path_length(self.psi)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn normalizer_values() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        // 2(ln 255 + gamma) - 2*255/256
        let want = 2.0 * (255f64.ln() + EULER_GAMMA) - 2.0 * 255.0 / 256.0;
        assert!((average_path_length(256) - want).abs() < 1e-12);
    }

    fn blob_with_outlier() -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut pts: Vec<Vec<f32>> = (0..100)
            .map(|_| {
                vec![
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ]
            })
            .collect();
        pts.push(vec![9.0, -9.0]);
        pts
    }

    #[test]
    fn outlier_scores_highest_and_center_is_low() {
        let pts = blob_with_outlier();
        let f = IsolationForest::fit(&pts, 100, 64, 7).unwrap();
        let outlier = f.score(&pts[100]).unwrap();
        for p in &pts[..100] {
            assert!(f.score(p).unwrap() < outlier);
        }
        let center = f.score(&[0.0, 0.0]).unwrap();
        assert!(center < 0.5, "center {center}");
        assert!(outlier > 0.0 && outlier < 1.0);
    }

    #[test]
    fn same_seed_same_scores() {
        let pts = blob_with_outlier();
        let a = IsolationForest::fit(&pts, 50, 32, 3).unwrap();
        let b = IsolationForest::fit(&pts, 50, 32, 3).unwrap();
        for p in &pts {
            assert_eq!(a.score(p).unwrap().to_bits(), b.score(p).unwrap().to_bits());
        }
    }

    #[test]
    fn params_checked() {
        let pts = blob_with_outlier();
        assert!(matches!(
            IsolationForest::fit(&pts, 10, 500, 0),
            Err(Error::Param(_))
        ));
        assert!(matches!(
            IsolationForest::fit(&pts, 10, 1, 0),
            Err(Error::Param(_))
        ));
        assert!(matches!(
            IsolationForest::fit(&pts, 0, 8, 0),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn constant_data_is_fine() {
        let pts = vec![vec![2.0f32, 2.0]; 16];
        let f = IsolationForest::fit(&pts, 5, 8, 0).unwrap();
        let s = f.score(&[2.0, 2.0]).unwrap();
        assert!(s > 0.0 && s < 1.0);
    }
}
