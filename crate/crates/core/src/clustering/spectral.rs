use nalgebra::{DMatrix, SymmetricEigen};

use super::kmeans::lloyd_restarts;
use super::{sq_dist, Points};
use crate::error::{Error, Result};

const LABEL_RESTARTS: usize = 10;

/// Overcluster id → concept id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReassignMap {
    pub concepts: Vec<u32>,
    pub c: usize,
}

impl ReassignMap {
    pub fn identity(k: usize) -> Self {
        Self {
            concepts: (0..k as u32).collect(),
            c: k,
        }
    }

    pub fn get(&self, overcluster: u32) -> u32 {
        self.concepts[overcluster as usize]
    }
}

/// Relabels so concept ids appear in increasing order along the center index.
fn canonical(labels: &[u32]) -> Vec<u32> {
    let mut remap = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = remap.len() as u32;
            *remap.entry(l).or_insert(next)
        })
        .collect()
}

/// Normalized spectral clustering of `points` into `c` groups using the
/// Gaussian-kernel affinity `exp(-sigma · ‖x_j − x_k‖²)`. All points must
/// have positive degree.
fn spectral_labels(affinity: &DMatrix<f64>, degree: &[f64], c: usize, seed: u64) -> Vec<u32> {
    let k = degree.len();
    if c == 1 {
        return vec![0; k];
    }
    if c >= k {
        return (0..k as u32).collect();
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let lap = DMatrix::from_fn(k, k, |i, j| {
        let norm = affinity[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 - norm
        } else {
            -norm
        }
    });
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut rows = Vec::with_capacity(k * c);
    for i in 0..k {
        let row: Vec<f64> = order[..c].iter().map(|&e| eig.eigenvectors[(i, e)]).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        rows.extend(row.iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }));
    }
    let embedded = Points::new(k, c, rows).expect("finite spectral embedding");
    lloyd_restarts(&embedded, c, LABEL_RESTARTS, seed)
}

/// Groups `centers` into `c` concepts by normalized spectral clustering.
///
/// Affinity is `exp(-sigma · d²)` off the diagonal and 0 on it; the
/// embedding is the row-normalized eigenvectors of the `c` smallest
/// eigenvalues of `I − D^{-1/2} A D^{-1/2}`, labeled by seeded k-means.
/// Centers with zero degree cannot be embedded: each gets its own concept
/// while concepts remain (keeping at least one for the connected centers),
/// and any beyond that join the concept of their nearest labeled center.
pub fn spectral_reassign(centers: &Points, c: usize, sigma: f64, seed: u64) -> Result<ReassignMap> {
    let k = centers.len();
    if c == 0 || k < c {
        return Err(Error::InvalidParameter(format!(
            "spectral reassignment needs K >= C >= 1, got K = {k}, C = {c}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spectral sigma must be > 0, got {sigma}"
        )));
    }
    let full = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            0.0
        } else {
            (-sigma * sq_dist(centers.row(i), centers.row(j))).exp()
        }
    });
    let degree: Vec<f64> = (0..k).map(|i| full.row(i).sum()).collect();
    let connected: Vec<usize> = (0..k).filter(|&i| degree[i] > 0.0).collect();
    let isolated: Vec<usize> = (0..k).filter(|&i| degree[i] <= 0.0).collect();

    let reserve = usize::from(!connected.is_empty());
    let own = isolated.len().min(c - reserve.min(c));
    let c_connected = if connected.is_empty() { 0 } else { c - own };

    let mut labels = vec![u32::MAX; k];
    if !connected.is_empty() {
        let sub = DMatrix::from_fn(connected.len(), connected.len(), |i, j| {
            full[(connected[i], connected[j])]
        });
        let sub_degree: Vec<f64> = connected.iter().map(|&i| degree[i]).collect();
        let sub_labels = spectral_labels(&sub, &sub_degree, c_connected, seed);
        for (&i, l) in connected.iter().zip(sub_labels) {
            labels[i] = l;
        }
    }
    for (n, &i) in isolated.iter().take(own).enumerate() {
        labels[i] = (c_connected + n) as u32;
    }
    for &i in isolated.iter().skip(own) {
        let nearest = (0..k)
            .filter(|&j| labels[j] != u32::MAX)
            .min_by(|&a, &b| {
                sq_dist(centers.row(i), centers.row(a))
                    .total_cmp(&sq_dist(centers.row(i), centers.row(b)))
                    .then(a.cmp(&b))
            })
            .expect("at least one labeled center");
        labels[i] = labels[nearest];
    }
    Ok(ReassignMap {
        concepts: canonical(&labels),
        c,
    })
}
