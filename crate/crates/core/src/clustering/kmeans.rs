use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{sq_dist, Points};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub batch_size: usize,
    pub max_iter: usize,
    /// Consecutive quiet batches required to stop early.
    pub patience: usize,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            batch_size: 1000,
            max_iter: 10_000,
            patience: 100,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansModel {
    pub centers: Points,
    /// Mean squared ℓ2 distance of each point to its assigned center.
    pub inertia: f64,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Centers as an `SGDE` matrix keyed `(0, center_index)`.
    pub fn to_embeddings(&self) -> Result<EmbeddingMatrix> {
        let rows = (0..self.k())
            .map(|i| ((0, i as u32), self.centers.row(i).iter().map(|&v| v as f32).collect()))
            .collect();
        EmbeddingMatrix::from_rows(self.centers.dim(), rows)
    }

    pub fn from_embeddings(m: &EmbeddingMatrix) -> Result<Self> {
        for (i, key) in m.keys().iter().enumerate() {
            if *key != (0, i as u32) {
                return Err(Error::InvalidParameter(format!(
                    "center file key ({}, {}) at row {i}, expected (0, {i})",
                    key.0, key.1
                )));
            }
        }
        Ok(Self {
            centers: Points::from_embeddings(m),
            inertia: f64::NAN,
        })
    }
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub model: KMeansModel,
    pub assignments: Vec<u32>,
    /// Mini-batches processed.
    pub batches: usize,
}

/// Nearest center by squared ℓ2 distance; ties go to the lowest index.
pub fn nearest_center(point: &[f64], centers: &Points) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for j in 0..centers.len() {
        let d = sq_dist(point, centers.row(j));
        if d < best.1 {
            best = (j as u32, d);
        }
    }
    best
}

fn assign_all(points: &Points, centers: &Points) -> (Vec<u32>, f64) {
    let pairs: Vec<(u32, f64)> = (0..points.len())
        .into_par_iter()
        .map(|i| nearest_center(points.row(i), centers))
        .collect();
    // Sequential sum keeps the result independent of thread scheduling.
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    (pairs.into_iter().map(|p| p.0).collect(), total)
}

/// k-means++ seeding: first center uniform, each next one sampled with
/// probability proportional to squared distance to the nearest chosen center
/// (uniform when every point coincides with a center).
pub(crate) fn kmeans_plus_plus(points: &Points, k: usize, rng: &mut ChaCha8Rng) -> Points {
    let n = points.len();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.gen_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    points.select(&chosen)
}

/// Mini-batch k-means with k-means++ seeding and per-center running-count
/// updates. Stops after `max_iter` batches or once `patience` consecutive
/// batches each move the centers by less than `1e-8 · D` in total squared
/// displacement; final assignments come from one full pass.
pub fn minibatch_kmeans(points: &Points, params: &KMeansParams) -> Result<KMeansFit> {
    let (n, dim, k) = (points.len(), points.dim(), params.k);
    if k == 0 || params.batch_size == 0 {
        return Err(Error::InvalidParameter("k and batch_size must be >= 1".into()));
    }
    if n < k {
        return Err(Error::TooFewPoints { n, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centers = kmeans_plus_plus(points, k, &mut rng);
    let mut counts = vec![0u64; k];
    let tol = 1e-8 * dim as f64;
    let mut quiet = 0;
    let mut batches = 0;
    let all: Vec<usize> = (0..n).collect();
    while batches < params.max_iter {
        let batch: Vec<usize> = if params.batch_size >= n {
            all.clone()
        } else {
            index::sample(&mut rng, n, params.batch_size).into_vec()
        };
        let nearest: Vec<u32> = batch
            .par_iter()
            .map(|&i| nearest_center(points.row(i), &centers).0)
            .collect();
        let before = centers.clone();
        for (&i, &c) in batch.iter().zip(&nearest) {
            let c = c as usize;
            counts[c] += 1;
            let eta = 1.0 / counts[c] as f64;
            let x = points.row(i);
            let row = &mut centers.data[c * dim..(c + 1) * dim];
            for (m, &v) in row.iter_mut().zip(x) {
                *m += eta * (v - *m);
            }
        }
        batches += 1;
        let moved = sq_dist(&before.data, &centers.data);
        quiet = if moved < tol { quiet + 1 } else { 0 };
        if quiet >= params.patience {
            break;
        }
    }
    let (assignments, total) = assign_all(points, &centers);
    Ok(KMeansFit {
        model: KMeansModel {
            centers,
            inertia: total / n as f64,
        },
        assignments,
        batches,
    })
}

#[derive(Clone, Debug)]
pub struct LloydTrace {
    pub centers: Points,
    pub assignments: Vec<u32>,
    /// Mean squared distance after each assignment step.
    pub inertia: Vec<f64>,
}

/// Full-batch Lloyd iterations from the given centers until assignments stop
/// changing or `max_iter` is reached. Empty clusters keep their center.
pub fn lloyd(points: &Points, init: &Points, max_iter: usize) -> LloydTrace {
    let (n, dim, k) = (points.len(), points.dim(), init.len());
    let mut centers = init.clone();
    let mut assignments: Vec<u32> = Vec::new();
    let mut inertia = Vec::new();
    for _ in 0..max_iter.max(1) {
        let (next, total) = assign_all(points, &centers);
        inertia.push(total / n.max(1) as f64);
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c as usize] += 1;
            for (s, &v) in sums[c as usize * dim..(c as usize + 1) * dim]
                .iter_mut()
                .zip(points.row(i))
            {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centers.data[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                }
            }
        }
    }
    LloydTrace {
        centers,
        assignments,
        inertia,
    }
}

/// Best of `restarts` k-means++ + Lloyd runs by final inertia.
pub(crate) fn lloyd_restarts(points: &Points, k: usize, restarts: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<u32>)> = None;
    for _ in 0..restarts.max(1) {
        let init = kmeans_plus_plus(points, k, &mut rng);
        let trace = lloyd(points, &init, 300);
        let score = *trace.inertia.last().unwrap();
        if best.as_ref().is_none_or(|b| score < b.0 - 1e-12) {
            best = Some((score, trace.assignments));
        }
    }
    best.unwrap().1
}
