//! Empirical-CDF outlier detection. Parameter free: each dimension keeps
//! its sorted training values and the sign of its sample skewness.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Ecod {
    n: usize,
    /// `sorted[j]` holds the training values of dimension `j`, ascending.
    sorted: Vec<Vec<f64>>,
    /// True where the dimension's sample skewness is negative.
    left_skewed: Vec<bool>,
}

/// Tail negative-log-probabilities of one query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcodTails {
    pub left: f64,
    pub right: f64,
    pub auto: f64,
}

impl EcodTails {
    pub fn score(&self) -> f64 {
        self.left.max(self.right).max(self.auto)
    }
}

pub fn sample_skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (m2, m3) = xs.iter().fold((0.0, 0.0), |(m2, m3), &x| {
        let d = x - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let (m2, m3) = (m2 / n, m3 / n);
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

impl Ecod {
    pub fn fit<V: AsRef<[f32]>>(train: &[V]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::empty("ECOD needs at least one training point"));
        }
        let (dim, data) = super::flatten(train)?;
        let n = train.len();
        let mut sorted = Vec::with_capacity(dim);
        let mut left_skewed = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut col: Vec<f64> = (0..n).map(|i| f64::from(data[i * dim + j])).collect();
            left_skewed.push(sample_skewness(&col) < 0.0);
            col.sort_by(f64::total_cmp);
            sorted.push(col);
        }
        Ok(Ecod {
            n,
            sorted,
            left_skewed,
        })
    }

    pub fn dim(&self) -> usize {
        self.sorted.len()
    }

    /// Smoothed tails per dimension: left `(#{v <= x} + 1) / (n + 1)`,
    /// right `(#{v >= x} + 1) / (n + 1)`, summed as negative logs.
    pub fn tails(&self, x: &[f32]) -> Result<EcodTails> {
        super::check_dim(self.dim(), x)?;
        let denom = (self.n + 1) as f64;
        let mut t = EcodTails {
            left: 0.0,
            right: 0.0,
            auto: 0.0,
        };
        for ((col, &skew_left), &xj) in self.sorted.iter().zip(&self.left_skewed).zip(x) {
            let xj = f64::from(xj);
            let le = col.partition_point(|&v| v <= xj);
            let ge = self.n - col.partition_point(|&v| v < xj);
            let left = -(((le + 1) as f64) / denom).ln();
            let right = -(((ge + 1) as f64) / denom).ln();
            t.left += left;
            t.right += right;
            t.auto += if skew_left { left } else { right };
        }
        Ok(t)
    }

    pub fn score(&self, x: &[f32]) -> Result<f64> {
        Ok(self.tails(x)?.score())
    }
}
