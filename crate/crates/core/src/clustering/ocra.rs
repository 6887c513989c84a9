use super::kmeans::{minibatch_kmeans, KMeansFit, KMeansParams};
use super::spectral::{spectral_reassign, ReassignMap};
use super::{sq_dist, Points};
use crate::embedding::{EmbeddingMatrix, Key};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OcraParams {
    /// Overcluster count.
    pub k: usize,
    /// Concept count.
    pub c: usize,
    pub batch_size: usize,
    pub max_iter: usize,
    pub patience: usize,
    pub spectral_sigma: f64,
    pub seed: u64,
    /// ℓ2-normalize embeddings before clustering.
    pub normalize: bool,
}

impl OcraParams {
    pub fn new(k: usize, c: usize, seed: u64) -> Self {
        Self {
            k,
            c,
            batch_size: 1000,
            max_iter: 10_000,
            patience: 100,
            spectral_sigma: 1e-5,
            seed,
            normalize: false,
        }
    }

    fn kmeans(&self) -> KMeansParams {
        KMeansParams {
            k: self.k,
            batch_size: self.batch_size,
            max_iter: self.max_iter,
            patience: self.patience,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OcraResult {
    pub kmeans: KMeansFit,
    pub reassign: ReassignMap,
    pub keys: Vec<Key>,
    /// Overcluster id per row of the input.
    pub overclusters: Vec<u32>,
    /// Concept id per row of the input.
    pub concepts: Vec<u32>,
}

impl OcraResult {
    /// Points per concept, including empty concepts.
    pub fn concept_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.reassign.c];
        for &c in &self.concepts {
            sizes[c as usize] += 1;
        }
        sizes
    }

    pub fn overcluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.kmeans.model.k()];
        for &o in &self.overclusters {
            sizes[o as usize] += 1;
        }
        sizes
    }
}

/// Overclustering + reassignment: k-means to `K` clusters, then spectral
/// clustering of the non-empty centers down to `C` concepts. Empty
/// overclusters inherit the concept of their nearest non-empty center. With
/// `K == C` the reassignment is the identity.
pub fn ocra(x: &EmbeddingMatrix, params: &OcraParams) -> Result<OcraResult> {
    if params.c == 0 || params.k < params.c {
        return Err(Error::InvalidParameter(format!(
            "need K >= C >= 1, got K = {}, C = {}",
            params.k, params.c
        )));
    }
    let x = if params.normalize { x.l2_normalized() } else { x.clone() };
    let points = Points::from_embeddings(&x);
    let fit = minibatch_kmeans(&points, &params.kmeans())?;
    let k = params.k;
    let reassign = if k == params.c {
        ReassignMap::identity(k)
    } else {
        let mut sizes = vec![0usize; k];
        for &a in &fit.assignments {
            sizes[a as usize] += 1;
        }
        let alive: Vec<usize> = (0..k).filter(|&j| sizes[j] > 0).collect();
        let alive_centers = fit.model.centers.select(&alive);
        let alive_map = if alive.len() <= params.c {
            ReassignMap::identity(alive.len())
        } else {
            spectral_reassign(
                &alive_centers,
                params.c,
                params.spectral_sigma,
                params.seed.wrapping_add(0x5eed),
            )?
        };
        let mut concepts = vec![0u32; k];
        for (pos, &j) in alive.iter().enumerate() {
            concepts[j] = alive_map.concepts[pos];
        }
        for j in (0..k).filter(|&j| sizes[j] == 0) {
            let center = fit.model.centers.row(j);
            let nearest = (0..alive.len())
                .min_by(|&a, &b| {
                    sq_dist(center, alive_centers.row(a))
                        .total_cmp(&sq_dist(center, alive_centers.row(b)))
                        .then(a.cmp(&b))
                })
                .expect("k-means leaves at least one non-empty cluster");
            concepts[j] = alive_map.concepts[nearest];
        }
        ReassignMap { concepts, c: params.c }
    };
    let concepts = fit.assignments.iter().map(|&o| reassign.get(o)).collect();
    Ok(OcraResult {
        overclusters: fit.assignments.clone(),
        kmeans: fit,
        reassign,
        keys: x.keys().to_vec(),
        concepts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..300u32)
            .map(|i| {
                let g = (i % 3) as f32 * 10.0;
                (
                    (0, i),
                    vec![g + rng.gen_range(-0.1..0.1), -g + rng.gen_range(-0.1..0.1)],
                )
            })
            .collect();
        EmbeddingMatrix::from_rows(2, rows).unwrap()
    }

    #[test]
    fn k_equals_c_skips_reassignment() {
        let x = blobs(1);
        let params = OcraParams::new(3, 3, 5);
        let res = ocra(&x, &params).unwrap();
        let direct = minibatch_kmeans(&Points::from_embeddings(&x), &params.kmeans()).unwrap();
        assert_eq!(res.concepts, direct.assignments);
        assert_eq!(res.reassign, ReassignMap::identity(3));
    }

    #[test]
    fn identical_points_collapse_to_one_concept() {
        let rows = (0..50u32).map(|i| ((i / 10, i % 10), vec![0.5, 0.5, 0.5])).collect();
        let x = EmbeddingMatrix::from_rows(3, rows).unwrap();
        let res = ocra(&x, &OcraParams::new(8, 3, 0)).unwrap();
        assert!(res.concepts.iter().all(|&c| c == res.concepts[0]));
        let sizes = res.concept_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 50);
        assert_eq!(sizes.iter().filter(|&&s| s == 0).count(), 2);
    }

    #[test]
    fn every_key_gets_one_label_in_range() {
        let x = blobs(2);
        let mut params = OcraParams::new(12, 3, 9);
        params.spectral_sigma = 0.05;
        let res = ocra(&x, &params).unwrap();
        assert_eq!(res.concepts.len(), x.len());
        assert_eq!(res.keys, x.keys());
        assert!(res.concepts.iter().all(|&c| c < 3));
        // Three well separated blobs come out as three concepts.
        let truth: Vec<u32> = (0..300).map(|i| i % 3).collect();
        assert_eq!(crate::clustering::adjusted_rand_index(&res.concepts, &truth), 1.0);
    }

    #[test]
    fn rejects_c_above_k() {
        assert!(ocra(&blobs(3), &OcraParams::new(2, 3, 0)).is_err());
    }
}
