//! Concept primitives: per-segment geometry and hue, 2×2-window adjacency,
//! the irregular-primitive merging pass, and mean-color-filled crops.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::image::{HsvImage, Image, LabelMap};

#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveStats {
    pub primitive_id: u32,
    pub area: usize,
    /// Unit pixel edges bordering another primitive or the image border.
    pub perimeter: usize,
    /// `perimeter / sqrt(area)`.
    pub p_ratio: f64,
    /// Circular mean hue in degrees, [0, 360).
    pub mean_hue: f64,
    /// Inclusive `(row_min, col_min, row_max, col_max)`.
    pub bbox: (usize, usize, usize, usize),
    pub merged: bool,
}

/// Circular distance between two hues in degrees.
pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Circular mean of angles given as summed unit vectors; 0 when the sum
/// vanishes.
fn circular_mean_deg(sin_sum: f64, cos_sum: f64) -> f64 {
    if sin_sum.abs() < 1e-9 && cos_sum.abs() < 1e-9 {
        return 0.0;
    }
    let deg = sin_sum.atan2(cos_sum).to_degrees();
    let deg = if deg < 0.0 { deg + 360.0 } else { deg };
    if deg >= 360.0 {
        0.0
    } else {
        deg
    }
}

pub fn shape_stats(map: &LabelMap, hsv: &HsvImage) -> Result<Vec<PrimitiveStats>> {
    if map.dims() != hsv.dims() {
        return Err(Error::DimensionMismatch(format!(
            "label map {:?} vs hsv {:?}",
            map.dims(),
            hsv.dims()
        )));
    }
    let n = map.check_partition()?;
    let (h, w) = map.dims();
    let mut area = vec![0usize; n];
    let mut perimeter = vec![0usize; n];
    let mut sin_sum = vec![0.0f64; n];
    let mut cos_sum = vec![0.0f64; n];
    let mut bbox = vec![(usize::MAX, usize::MAX, 0usize, 0usize); n];
    for r in 0..h {
        for c in 0..w {
            let l = map.get(r, c);
            let j = l as usize;
            area[j] += 1;
            let hue = (hsv.hue[r * w + c] as f64).to_radians();
            sin_sum[j] += hue.sin();
            cos_sum[j] += hue.cos();
            let b = &mut bbox[j];
            *b = (b.0.min(r), b.1.min(c), b.2.max(r), b.3.max(c));
            let differs = |rr: Option<usize>, cc: Option<usize>| match (rr, cc) {
                (Some(rr), Some(cc)) if rr < h && cc < w => map.get(rr, cc) != l,
                _ => true,
            };
            perimeter[j] += [
                differs(r.checked_sub(1), Some(c)),
                differs(Some(r + 1), Some(c)),
                differs(Some(r), c.checked_sub(1)),
                differs(Some(r), Some(c + 1)),
            ]
            .iter()
            .filter(|&&d| d)
            .count();
        }
    }
    Ok((0..n)
        .map(|j| PrimitiveStats {
            primitive_id: j as u32,
            area: area[j],
            perimeter: perimeter[j],
            p_ratio: perimeter[j] as f64 / (area[j] as f64).sqrt(),
            mean_hue: circular_mean_deg(sin_sum[j], cos_sum[j]),
            bbox: bbox[j],
            merged: false,
        })
        .collect())
}

/// For each primitive, its top neighbors as `(neighbor_id, contact_count)`,
/// sorted by count descending then id ascending, truncated to
/// [`Adjacency::TOP`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    pub neighbors: Vec<Vec<(u32, u32)>>,
}

impl Adjacency {
    pub const TOP: usize = 3;
}

/// Number of 2×2 windows containing both primitives of each unordered pair
/// `(a, b)` with `a < b`. Windows are anchored at every position that fits;
/// on single-row or single-column images they degrade to 1×2 / 2×1.
pub fn contact_counts(map: &LabelMap) -> BTreeMap<(u32, u32), u32> {
    let (h, w) = map.dims();
    let mut counts = BTreeMap::new();
    for r in 0..h.saturating_sub(1).max(1) {
        for c in 0..w.saturating_sub(1).max(1) {
            let mut present: Vec<u32> = Vec::with_capacity(4);
            for rr in r..(r + 2).min(h) {
                for cc in c..(c + 2).min(w) {
                    let l = map.get(rr, cc);
                    if !present.contains(&l) {
                        present.push(l);
                    }
                }
            }
            present.sort_unstable();
            for i in 0..present.len() {
                for k in i + 1..present.len() {
                    *counts.entry((present[i], present[k])).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

pub fn build_adjacency(map: &LabelMap) -> Result<Adjacency> {
    let n = map.check_partition()?;
    let mut neighbors: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
    for ((a, b), count) in contact_counts(map) {
        neighbors[a as usize].push((b, count));
        neighbors[b as usize].push((a, count));
    }
    for list in &mut neighbors {
        list.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
        list.truncate(Adjacency::TOP);
    }
    Ok(Adjacency { neighbors })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeParams {
    /// Maximum circular hue distance (exclusive), degrees.
    pub hue_threshold: f64,
    /// Factor `a` in `area < a · image_area · p_ratio²`.
    pub area_factor: f64,
    /// Primitives with a larger perimeter ratio are always irregular.
    pub p_ratio_threshold: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        Self {
            hue_threshold: 40.0,
            area_factor: 0.001,
            p_ratio_threshold: 9.0,
        }
    }
}

impl MergeParams {
    pub fn hue_similar(&self, a: &PrimitiveStats, b: &PrimitiveStats) -> bool {
        hue_distance(a.mean_hue, b.mean_hue) < self.hue_threshold
    }

    /// Small area relative to perimeter, or very irregular outline.
    pub fn irregular(&self, s: &PrimitiveStats, image_area: usize) -> bool {
        (s.area as f64) < self.area_factor * image_area as f64 * s.p_ratio * s.p_ratio
            || s.p_ratio > self.p_ratio_threshold
    }
}

/// One merge in original primitive ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MergeRecord {
    pub source: u32,
    pub target: u32,
}

#[derive(Clone, Debug)]
pub struct MergeOutcome {
    pub map: LabelMap,
    pub log: Vec<MergeRecord>,
    /// Stats with `merged` flags as set by the pass.
    pub stats: Vec<PrimitiveStats>,
}

fn find(parent: &[u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        x = parent[x as usize];
    }
    x
}

/// Single ascending-id pass: primitive `j` merges into the first of its top
/// neighbors that has a similar hue, provided `j` has not merged already and
/// is irregular. Stats are not refreshed during the pass. When a neighbor has
/// itself been absorbed, `j` joins whatever now holds the neighbor's pixels;
/// a candidate that already resolves to `j` is skipped.
pub fn merge_primitives(
    map: &LabelMap,
    stats: &[PrimitiveStats],
    adjacency: &Adjacency,
    image_area: usize,
    params: &MergeParams,
) -> Result<MergeOutcome> {
    let n = stats.len();
    let total: usize = stats.iter().map(|s| s.area).sum();
    if total != image_area || image_area != map.pixel_count() {
        return Err(Error::InconsistentStats(format!(
            "areas sum to {total}, image area {image_area}, map has {} pixels",
            map.pixel_count()
        )));
    }
    if adjacency.neighbors.len() != n || map.label_count() != n {
        return Err(Error::InconsistentStats(format!(
            "{n} stats, {} adjacency lists, {} labels in map",
            adjacency.neighbors.len(),
            map.label_count()
        )));
    }
    let mut stats = stats.to_vec();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    let mut log = Vec::new();
    for j in 0..n {
        for &(nb, _) in &adjacency.neighbors[j] {
            let (src, dst) = (&stats[j], &stats[nb as usize]);
            if !(params.hue_similar(src, dst) && !src.merged && params.irregular(src, image_area)) {
                continue;
            }
            let root = find(&parent, nb);
            if root == j as u32 {
                continue;
            }
            parent[j] = root;
            stats[j].merged = true;
            log.push(MergeRecord {
                source: j as u32,
                target: nb,
            });
            break;
        }
    }
    let roots: Vec<u32> = (0..n as u32).map(|j| find(&parent, j)).collect();
    let mut compact = vec![u32::MAX; n];
    let mut next = 0;
    for j in 0..n {
        if roots[j] == j as u32 {
            compact[j] = next;
            next += 1;
        }
    }
    let labels = map
        .labels()
        .iter()
        .map(|&l| compact[roots[l as usize] as usize])
        .collect();
    let (h, w) = map.dims();
    Ok(MergeOutcome {
        map: LabelMap::new(h, w, labels)?,
        log,
        stats,
    })
}

/// Crops the primitive's bounding box, fills non-primitive pixels with the
/// rounded `mean_color`, and resizes to `target × target` bilinearly.
pub fn extract_crop(
    img: &Image,
    map: &LabelMap,
    primitive_id: u32,
    mean_color: [f64; 3],
    target: usize,
) -> Result<Image> {
    if img.dims() != map.dims() {
        return Err(Error::DimensionMismatch(format!(
            "image {:?} vs label map {:?}",
            img.dims(),
            map.dims()
        )));
    }
    let (h, w) = map.dims();
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for r in 0..h {
        for c in 0..w {
            if map.get(r, c) == primitive_id {
                bbox = Some(match bbox {
                    None => (r, c, r, c),
                    Some(b) => (b.0.min(r), b.1.min(c), b.2.max(r), b.3.max(c)),
                });
            }
        }
    }
    let (r0, c0, r1, c1) = bbox.ok_or(Error::UnknownPrimitive(primitive_id))?;
    let fill = mean_color.map(|v| v.round().clamp(0.0, 255.0) as u8);
    let crop = Image::from_fn(r1 - r0 + 1, c1 - c0 + 1, |r, c| {
        if map.get(r0 + r, c0 + c) == primitive_id {
            img.get(r0 + r, c0 + c)
        } else {
            fill
        }
    })?;
    Ok(crop.resize_bilinear(target, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::rgb_to_hsv;

    fn map(rows: &[&[u32]]) -> LabelMap {
        let h = rows.len();
        let w = rows[0].len();
        LabelMap::new(h, w, rows.concat()).unwrap()
    }

    #[test]
    fn two_by_two_window_links_all_pairs() {
        let adj = build_adjacency(&map(&[&[0, 1], &[2, 3]])).unwrap();
        for (j, list) in adj.neighbors.iter().enumerate() {
            let mut ids: Vec<u32> = list.iter().map(|x| x.0).collect();
            ids.sort();
            let expect: Vec<u32> = (0..4).filter(|&k| k != j as u32).collect();
            assert_eq!(ids, expect);
            assert!(list.iter().all(|x| x.1 == 1));
        }
    }

    #[test]
    fn single_primitive_has_no_neighbors() {
        let adj = build_adjacency(&LabelMap::filled(3, 3, 0).unwrap()).unwrap();
        assert_eq!(adj.neighbors, vec![Vec::<(u32, u32)>::new()]);
    }

    #[test]
    fn one_row_map_uses_degenerate_window() {
        let adj = build_adjacency(&map(&[&[0, 1]])).unwrap();
        assert_eq!(adj.neighbors, vec![vec![(1, 1)], vec![(0, 1)]]);
    }

    #[test]
    fn adjacency_truncates_to_top_three_with_id_ties() {
        // Primitive 0 is a center column touching four others.
        let m = map(&[&[1, 0, 2], &[1, 0, 2], &[3, 0, 4]]);
        let adj = build_adjacency(&m).unwrap();
        assert_eq!(adj.neighbors[0].len(), 3);
        assert_eq!(adj.neighbors[0][0], (1, 2));
        assert_eq!(adj.neighbors[0][1], (2, 2));
        assert_eq!(adj.neighbors[0][2], (3, 1));
    }

    #[test]
    fn square_and_strip_geometry() {
        let img = Image::filled(4, 4, [255, 0, 0]).unwrap();
        let s = shape_stats(&LabelMap::filled(4, 4, 0).unwrap(), &rgb_to_hsv(&img)).unwrap();
        assert_eq!((s[0].area, s[0].perimeter, s[0].p_ratio), (16, 16, 4.0));
        assert_eq!(s[0].mean_hue, 0.0);
        assert_eq!(s[0].bbox, (0, 0, 3, 3));

        let img = Image::filled(1, 4, [0, 255, 0]).unwrap();
        let s = shape_stats(&LabelMap::filled(1, 4, 0).unwrap(), &rgb_to_hsv(&img)).unwrap();
        assert_eq!((s[0].area, s[0].perimeter, s[0].p_ratio), (4, 10, 5.0));
        assert!((s[0].mean_hue - 120.0).abs() < 1e-9);
    }

    #[test]
    fn circular_mean_handles_wraparound() {
        // Hues near 350 and 10 average to ~0, not 180.
        let img = Image::new(1, 2, vec![255, 0, 42, 255, 42, 0]).unwrap();
        let s = shape_stats(&LabelMap::filled(1, 2, 0).unwrap(), &rgb_to_hsv(&img)).unwrap();
        assert!(hue_distance(s[0].mean_hue, 0.0) < 1e-6, "{}", s[0].mean_hue);
    }

    #[test]
    fn hue_distance_is_circular() {
        assert_eq!(hue_distance(350.0, 10.0), 20.0);
        assert_eq!(hue_distance(0.0, 180.0), 180.0);
        assert_eq!(hue_distance(90.0, 45.0), 45.0);
    }

    #[test]
    fn inconsistent_stats_rejected() {
        let m = LabelMap::filled(2, 2, 0).unwrap();
        let img = Image::filled(2, 2, [1, 2, 3]).unwrap();
        let mut stats = shape_stats(&m, &rgb_to_hsv(&img)).unwrap();
        stats[0].area = 3;
        let adj = build_adjacency(&m).unwrap();
        assert!(matches!(
            merge_primitives(&m, &stats, &adj, 4, &MergeParams::default()),
            Err(Error::InconsistentStats(_))
        ));
    }

    /// 100×100 red field (primitive 0) with 1×30 horizontal slivers at the
    /// given rows, each its own primitive colored `sliver_rgb`.
    fn sliver_fixture(rows: &[usize], sliver_rgb: [u8; 3]) -> (LabelMap, Image) {
        let m = LabelMap::from_fn(100, 100, |r, c| match rows.iter().position(|&s| s == r) {
            Some(k) if (10..40).contains(&c) => k as u32 + 1,
            _ => 0,
        })
        .unwrap();
        let img = Image::from_fn(100, 100, |r, c| if m.get(r, c) == 0 { [255, 0, 0] } else { sliver_rgb }).unwrap();
        (m, img)
    }

    fn run_merge(m: &LabelMap, img: &Image) -> MergeOutcome {
        let stats = shape_stats(m, &rgb_to_hsv(img)).unwrap();
        let adj = build_adjacency(m).unwrap();
        merge_primitives(m, &stats, &adj, m.pixel_count(), &MergeParams::default()).unwrap()
    }

    #[test]
    fn red_sliver_merges_into_red_field() {
        let (m, img) = sliver_fixture(&[50], [250, 5, 0]);
        let stats = shape_stats(&m, &rgb_to_hsv(&img)).unwrap();
        // 1×30 interior strip: 2·30 + 2 boundary edges.
        assert_eq!((stats[1].area, stats[1].perimeter), (30, 62));
        assert!(stats[1].p_ratio > 9.0);
        let out = run_merge(&m, &img);
        assert_eq!(out.log, vec![MergeRecord { source: 1, target: 0 }]);
        assert!(out.map.labels().iter().all(|&l| l == 0));
        assert!(out.stats[1].merged && !out.stats[0].merged);
    }

    #[test]
    fn opposite_hue_sliver_stays() {
        let (m, img) = sliver_fixture(&[50], [0, 255, 255]);
        let out = run_merge(&m, &img);
        assert!(out.log.is_empty());
        assert_eq!(out.map, m);
    }

    #[test]
    fn two_slivers_share_a_target() {
        let (m, img) = sliver_fixture(&[20, 70], [255, 10, 0]);
        let out = run_merge(&m, &img);
        assert_eq!(
            out.log,
            vec![
                MergeRecord { source: 1, target: 0 },
                MergeRecord { source: 2, target: 0 }
            ]
        );
        assert_eq!(out.map.label_count(), 1);
        assert_eq!(
            out.stats.iter().map(|s| s.merged).collect::<Vec<_>>(),
            vec![false, true, true]
        );
    }

    #[test]
    fn merged_target_resolves_to_its_new_owner() {
        // Field 1 has hue 0; horizontal strip 0 (hue 30) merges into it.
        // Vertical strip 2 (hue 60) hangs off strip 0 and is too far in hue
        // from the field, so it takes strip 0, which by then belongs to the
        // field.
        let m = LabelMap::from_fn(20, 20, |r, c| match (r, c) {
            (5, 0..=9) => 0,
            (6..=15, 0) => 2,
            _ => 1,
        })
        .unwrap();
        let img = Image::from_fn(20, 20, |r, c| match m.get(r, c) {
            0 => [255, 128, 0],
            2 => [255, 255, 0],
            _ => [255, 0, 0],
        })
        .unwrap();
        let out = run_merge(&m, &img);
        assert_eq!(
            out.log,
            vec![
                MergeRecord { source: 0, target: 1 },
                MergeRecord { source: 2, target: 0 }
            ]
        );
        assert!(out.map.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn crop_of_whole_image_has_no_fill() {
        let img = Image::from_fn(4, 4, |r, c| [(r * 60) as u8, (c * 60) as u8, 0]).unwrap();
        let m = LabelMap::filled(4, 4, 0).unwrap();
        let crop = extract_crop(&img, &m, 0, [1.0, 2.0, 3.0], 8).unwrap();
        assert_eq!(crop, img.resize_bilinear(8, 8));
    }

    #[test]
    fn single_pixel_crop_is_constant() {
        let img = Image::from_fn(3, 3, |r, c| if (r, c) == (1, 2) { [255, 0, 0] } else { [0, 0, 255] }).unwrap();
        let m = LabelMap::from_fn(3, 3, |r, c| if (r, c) == (1, 2) { 1 } else { 0 }).unwrap();
        let crop = extract_crop(&img, &m, 1, [100.0, 100.0, 100.0], 8).unwrap();
        assert_eq!(crop, Image::filled(8, 8, [255, 0, 0]).unwrap());
    }

    #[test]
    fn l_shape_crop_fills_missing_corner() {
        let img = Image::filled(2, 2, [200, 10, 10]).unwrap();
        let m = map(&[&[0, 0], &[0, 1]]);
        let crop = extract_crop(&img, &m, 0, [99.6, 50.2, 0.4], 2).unwrap();
        assert_eq!(crop.get(1, 1), [100, 50, 0]);
        assert_eq!(crop.get(0, 0), [200, 10, 10]);
    }

    #[test]
    fn crop_of_unknown_primitive_is_error() {
        let img = Image::filled(2, 2, [0; 3]).unwrap();
        let m = LabelMap::filled(2, 2, 0).unwrap();
        assert!(matches!(
            extract_crop(&img, &m, 5, [0.0; 3], 4),
            Err(Error::UnknownPrimitive(5))
        ));
    }
}
