//! Synthetic data with known ground truth.
//!
//! Hue-band images are Voronoi arrangements of four textured region types;
//! the two-scale point set is a tight blob inside a wide ring, the shape on
//! which plain k-means with `K = C` splits the ring instead of separating it
//! from the blob.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clustering::Points;
use crate::dataset::Manifest;
use crate::error::{Error, Result};
use crate::image::{hsv_to_pixel, Image, LabelMap};
use crate::refine::derive_seed;

pub const REGION_TYPES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HueBandParams {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// Voronoi sites per image; every region type owns at least one site.
    pub sites: usize,
    /// Half-width of the per-pixel hue jitter, degrees.
    pub hue_noise: f32,
    /// Half-width of the per-pixel saturation and value jitter.
    pub tone_noise: f32,
    pub seed: u64,
}

impl Default for HueBandParams {
    fn default() -> Self {
        Self {
            count: 20,
            height: 128,
            width: 128,
            sites: 7,
            hue_noise: 12.0,
            tone_noise: 0.1,
            seed: 0,
        }
    }
}

/// Band center of region type `t`, degrees.
pub fn band_hue(t: usize) -> f32 {
    22.5 + 90.0 * t as f32
}

/// One image and its region-type map.
pub fn hue_band_image(params: &HueBandParams, rng: &mut impl Rng) -> Result<(Image, LabelMap)> {
    if params.sites < REGION_TYPES || params.height == 0 || params.width == 0 {
        return Err(Error::InvalidParameter(format!(
            "need at least {REGION_TYPES} sites and a non-empty image"
        )));
    }
    let mut types: Vec<u32> = (0..REGION_TYPES as u32).collect();
    types.extend((REGION_TYPES..params.sites).map(|_| rng.gen_range(0..REGION_TYPES as u32)));
    types.shuffle(rng);
    let sites: Vec<(f64, f64)> = (0..params.sites)
        .map(|_| {
            (
                rng.gen_range(0.0..params.height as f64),
                rng.gen_range(0.0..params.width as f64),
            )
        })
        .collect();
    let gt = LabelMap::from_fn(params.height, params.width, |r, c| {
        let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
        let nearest = (0..sites.len())
            .min_by(|&a, &b| {
                let da = (sites[a].0 - y).powi(2) + (sites[a].1 - x).powi(2);
                let db = (sites[b].0 - y).powi(2) + (sites[b].1 - x).powi(2);
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .unwrap();
        types[nearest]
    })?;
    let img = Image::from_fn(params.height, params.width, |r, c| {
        let t = gt.get(r, c) as usize;
        let hue = band_hue(t) + rng.gen_range(-params.hue_noise..=params.hue_noise);
        let s = 0.7 + rng.gen_range(-params.tone_noise..=params.tone_noise);
        let v = 0.75 + rng.gen_range(-params.tone_noise..=params.tone_noise);
        hsv_to_pixel(hue, s, v)
    })?;
    Ok((img, gt))
}

/// `params.count` images, each generated from its own seeded stream.
pub fn hue_band_dataset(params: &HueBandParams) -> Result<Vec<(Image, LabelMap)>> {
    (0..params.count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, 0x5e7, i as u64));
            hue_band_image(params, &mut rng)
        })
        .collect()
}

/// Paths written by [`write_hue_band_dataset`].
#[derive(Clone, Debug)]
pub struct SynthPaths {
    pub manifest: PathBuf,
    pub gt_manifest: PathBuf,
}

/// Writes `images/NNN.png`, `gt/NNN.png`, `manifest.txt` and
/// `gt_manifest.txt` under `dir`.
pub fn write_hue_band_dataset(dir: &Path, params: &HueBandParams) -> Result<SynthPaths> {
    let images = dir.join("images");
    let gts = dir.join("gt");
    for d in [&images, &gts] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut img_paths = Vec::new();
    let mut gt_paths = Vec::new();
    for (i, (img, gt)) in hue_band_dataset(params)?.into_iter().enumerate() {
        let name = format!("{i:03}.png");
        img.save_png(images.join(&name))?;
        gt.save_png(gts.join(&name))?;
        img_paths.push(PathBuf::from("images").join(&name));
        gt_paths.push(PathBuf::from("gt").join(&name));
    }
    let paths = SynthPaths {
        manifest: dir.join("manifest.txt"),
        gt_manifest: dir.join("gt_manifest.txt"),
    };
    Manifest::new(img_paths)?.save(&paths.manifest)?;
    Manifest::new(gt_paths)?.save(&paths.gt_manifest)?;
    Ok(paths)
}

/// `per_concept` points in a Gaussian blob (std 0.25) at the origin, label
/// 0, and `per_concept` points uniform in angle on an annulus of radii
/// 4.5 to 5.5, label 1.
pub fn two_scale_points(per_concept: usize, seed: u64) -> (Points, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(2 * per_concept);
    let mut labels = Vec::with_capacity(2 * per_concept);
    for _ in 0..per_concept {
        // Box-Muller.
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = 0.25 * (-2.0 * u1.ln()).sqrt();
        let t = std::f64::consts::TAU * u2;
        rows.push(vec![r * t.cos(), r * t.sin()]);
        labels.push(0);
    }
    for _ in 0..per_concept {
        let r: f64 = rng.gen_range(4.5..5.5);
        let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        rows.push(vec![r * t.cos(), r * t.sin()]);
        labels.push(1);
    }
    (Points::from_rows(&rows).expect("finite points"), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::pixel_to_hsv;

    #[test]
    fn every_type_present_and_hues_in_band() {
        let params = HueBandParams {
            count: 3,
            height: 40,
            width: 50,
            ..HueBandParams::default()
        };
        for (img, gt) in hue_band_dataset(&params).unwrap() {
            let mut seen = [false; REGION_TYPES];
            for r in 0..40 {
                for c in 0..50 {
                    let t = gt.get(r, c) as usize;
                    seen[t] = true;
                    let (h, _, _) = pixel_to_hsv(img.get(r, c));
                    let d = crate::primitives::hue_distance(h as f64, band_hue(t) as f64);
                    assert!(d <= 15.0, "hue {h} for type {t}");
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn dataset_is_reproducible() {
        let params = HueBandParams {
            count: 2,
            height: 16,
            width: 16,
            ..HueBandParams::default()
        };
        assert_eq!(hue_band_dataset(&params).unwrap(), hue_band_dataset(&params).unwrap());
    }

    #[test]
    fn two_scale_shapes() {
        let (pts, labels) = two_scale_points(500, 1);
        assert_eq!(pts.len(), 1000);
        for (i, &l) in labels.iter().enumerate() {
            let r = pts.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if l == 1 {
                assert!((4.5..=5.5).contains(&r));
            } else {
                assert!(r < 2.0);
            }
        }
    }
}
