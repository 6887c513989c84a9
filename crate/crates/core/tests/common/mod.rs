//! Independent oracles and fixtures shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segdiscover::image::{pixel_to_hsv, Image, LabelMap};

/// Best total agreement over all injective group → class maps, by
/// exhaustive search.
pub fn brute_force_objective(cm: &[Vec<u64>]) -> u64 {
    fn go(cm: &[Vec<u64>], p: usize, used: &mut Vec<bool>) -> u64 {
        if p == cm.len() {
            return 0;
        }
        // Group p may stay unmatched only when there are more groups than
        // classes; skipping is always allowed since counts are nonnegative.
        let mut best = go(cm, p + 1, used);
        for g in 0..used.len() {
            if !used[g] {
                used[g] = true;
                best = best.max(cm[p][g] + go(cm, p + 1, used));
                used[g] = false;
            }
        }
        best
    }
    let g = cm.first().map_or(0, |r| r.len());
    go(cm, 0, &mut vec![false; g])
}

/// Random image of axis-aligned colored blocks with per-pixel noise.
pub fn random_block_image(rng: &mut ChaCha8Rng) -> Image {
    let h = rng.gen_range(12..48);
    let w = rng.gen_range(12..48);
    let blocks = rng.gen_range(1..6);
    let rects: Vec<(usize, usize, usize, usize, [u8; 3])> = (0..blocks)
        .map(|_| {
            let r0 = rng.gen_range(0..h);
            let c0 = rng.gen_range(0..w);
            let r1 = rng.gen_range(r0 + 1..=h);
            let c1 = rng.gen_range(c0 + 1..=w);
            (r0, c0, r1, c1, [rng.gen(), rng.gen(), rng.gen()])
        })
        .collect();
    let base: [u8; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let noise = rng.gen_range(0..40u8);
    Image::from_fn(h, w, |r, c| {
        let mut px = base;
        for &(r0, c0, r1, c1, col) in &rects {
            if (r0..r1).contains(&r) && (c0..c1).contains(&c) {
                px = col;
            }
        }
        px.map(|v| v.saturating_add(rng.gen_range(0..=noise)))
    })
    .unwrap()
}

pub fn random_images(n: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_block_image(&mut rng)).collect()
}

/// Components of pixels with equal `key`, by breadth-first flood fill over
/// 4- or 8-neighborhoods. Ids follow raster order of first pixel.
pub fn components(h: usize, w: usize, eight: bool, key: impl Fn(usize, usize) -> u64) -> Vec<u32> {
    let mut out = vec![u32::MAX; h * w];
    let mut next = 0;
    let mut offsets = vec![(-1i64, 0i64), (1, 0), (0, -1), (0, 1)];
    if eight {
        offsets.extend([(-1, -1), (-1, 1), (1, -1), (1, 1)]);
    }
    for start in 0..h * w {
        if out[start] != u32::MAX {
            continue;
        }
        let k = key(start / w, start % w);
        out[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (r, c) = ((p / w) as i64, (p % w) as i64);
            for &(dr, dc) in &offsets {
                let (rr, cc) = (r + dr, c + dc);
                if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                    continue;
                }
                let q = rr as usize * w + cc as usize;
                if out[q] == u32::MAX && key(rr as usize, cc as usize) == k {
                    out[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    out
}

/// True when two labelings induce the same partition of pixels.
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    let mut ab = BTreeMap::new();
    let mut ba = BTreeMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}

/// Per-primitive facts recomputed from scratch for the merge oracle.
#[derive(Clone, Debug)]
pub struct OracleStats {
    pub area: usize,
    pub perimeter: usize,
    pub hue: f64,
}

pub fn oracle_stats(map: &LabelMap, img: &Image) -> Vec<OracleStats> {
    let (h, w) = map.dims();
    let n = map.label_count();
    let mut area = vec![0; n];
    let mut perimeter = vec![0; n];
    let mut sc = vec![(0.0f64, 0.0f64); n];
    for r in 0..h {
        for c in 0..w {
            let l = map.get(r, c);
            let j = l as usize;
            area[j] += 1;
            let (hue, _, _) = pixel_to_hsv(img.get(r, c));
            let t = (hue as f64).to_radians();
            sc[j].0 += t.sin();
            sc[j].1 += t.cos();
            // Each of the four sides is a boundary edge unless the pixel
            // across it has the same label.
            let sides = [
                r > 0 && map.get(r - 1, c) == l,
                r + 1 < h && map.get(r + 1, c) == l,
                c > 0 && map.get(r, c - 1) == l,
                c + 1 < w && map.get(r, c + 1) == l,
            ];
            perimeter[j] += sides.iter().filter(|&&same| !same).count();
        }
    }
    (0..n)
        .map(|j| {
            let hue = if sc[j].0.abs() < 1e-9 && sc[j].1.abs() < 1e-9 {
                0.0
            } else {
                sc[j].0.atan2(sc[j].1).to_degrees().rem_euclid(360.0)
            };
            OracleStats {
                area: area[j],
                perimeter: perimeter[j],
                hue,
            }
        })
        .collect()
}

/// Neighbors of each primitive ranked by shared 2×2 windows, most first,
/// ties by id, top three.
pub fn oracle_neighbors(map: &LabelMap) -> Vec<Vec<u32>> {
    let (h, w) = map.dims();
    let n = map.label_count();
    let mut counts = vec![BTreeMap::<u32, u32>::new(); n];
    for r in 0..h.saturating_sub(1).max(1) {
        for c in 0..w.saturating_sub(1).max(1) {
            let mut present = Vec::new();
            for rr in r..(r + 2).min(h) {
                for cc in c..(c + 2).min(w) {
                    present.push(map.get(rr, cc));
                }
            }
            present.sort_unstable();
            present.dedup();
            for &a in &present {
                for &b in &present {
                    if a != b {
                        *counts[a as usize].entry(b).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    counts
        .into_iter()
        .map(|m| {
            let mut v: Vec<(u32, u32)> = m.into_iter().collect();
            v.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
            v.into_iter().take(3).map(|(id, _)| id).collect()
        })
        .collect()
}

pub fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 360.0;
    d.min(360.0 - d)
}

/// The three merge conditions for `j` into `nb`, each evaluated on its own.
pub fn conditions(stats: &[OracleStats], flags: &[bool], j: usize, nb: usize, image_area: usize) -> [bool; 3] {
    let s = &stats[j];
    let p = s.perimeter as f64 / (s.area as f64).sqrt();
    let irregular = (s.area as f64) < 0.001 * image_area as f64 * p * p || p > 9.0;
    [circ_dist(s.hue, stats[nb].hue) < 40.0, !flags[j], irregular]
}

/// Expected merge log `(source, target)` from a direct walk over primitives
/// in id order with per-primitive merged flags.
pub fn oracle_merges(map: &LabelMap, img: &Image) -> Vec<(u32, u32)> {
    let stats = oracle_stats(map, img);
    let neighbors = oracle_neighbors(map);
    let area = map.pixel_count();
    let mut flags = vec![false; stats.len()];
    // Owner of each primitive's pixels as merges happen.
    let mut owner: Vec<usize> = (0..stats.len()).collect();
    let mut log = Vec::new();
    for j in 0..stats.len() {
        for &nb in &neighbors[j] {
            let nb = nb as usize;
            if !conditions(&stats, &flags, j, nb, area).iter().all(|&c| c) {
                continue;
            }
            let mut o = nb;
            while owner[o] != o {
                o = owner[o];
            }
            if o == j {
                continue;
            }
            owner[j] = o;
            flags[j] = true;
            log.push((j as u32, nb as u32));
            break;
        }
    }
    log
}
