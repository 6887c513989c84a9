//! Concept discovery by overclustering and reassignment: mini-batch k-means
//! to many clusters, then spectral clustering of the cluster centers.

mod kmeans;
mod ocra;
mod spectral;

pub use kmeans::{lloyd, minibatch_kmeans, nearest_center, KMeansFit, KMeansModel, KMeansParams, LloydTrace};
pub use ocra::{ocra, OcraParams, OcraResult};
pub use spectral::{spectral_reassign, ReassignMap};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Dense row-major `f64` matrix of points.
#[derive(Clone, Debug, PartialEq)]
pub struct Points {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {rows}x{dim} points",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("point coordinate {v}")));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("ragged point rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn from_embeddings(m: &EmbeddingMatrix) -> Self {
        Self {
            rows: m.len(),
            dim: m.dim(),
            data: m.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select(&self, indices: &[usize]) -> Points {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Points {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn comb2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items. Two
/// labelings that are both a single cluster (or both all singletons) score 1.
pub fn adjusted_rand_index(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len() as u64;
    let mut table = std::collections::HashMap::<(u32, u32), u64>::new();
    let mut rows = std::collections::HashMap::<u32, u64>::new();
    let mut cols = std::collections::HashMap::<u32, u64>::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&v| comb2(v)).sum();
    let sum_rows: f64 = rows.values().map(|&v| comb2(v)).sum();
    let sum_cols: f64 = cols.values().map(|&v| comb2(v)).sum();
    let expected = sum_rows * sum_cols / comb2(n).max(1.0);
    let max = 0.5 * (sum_rows + sum_cols);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
