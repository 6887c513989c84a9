//! Graph-based superpixel segmentation.
//!
//! The image is smoothed with a separable Gaussian, turned into an
//! 8-connected pixel graph weighted by Euclidean RGB distance, and segmented
//! by Kruskal-style merging with the adaptive threshold
//! `Int(C) + scale / |C|`. A second pass over the same sorted edges absorbs
//! components smaller than `min_size`.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::image::{Image, LabelMap};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FelzParams {
    pub scale: f64,
    /// Gaussian pre-smoothing standard deviation in pixels; 0 disables it.
    pub sigma: f64,
    pub min_size: usize,
}

impl FelzParams {
    pub fn new(scale: f64, sigma: f64, min_size: usize) -> Result<Self> {
        if !(scale > 0.0) || !(sigma >= 0.0) || min_size == 0 {
            return Err(Error::InvalidParameter(format!(
                "felzenszwalb needs scale > 0, sigma >= 0, min_size >= 1 (got {scale}, {sigma}, {min_size})"
            )));
        }
        Ok(Self { scale, sigma, min_size })
    }
}

/// Minimum segment size scaled to the image area, relative to a 768×1024
/// reference image that uses 5000 pixels, floored at 250.
pub fn dynamic_min_size(height: usize, width: usize) -> usize {
    let scaled = (height as f64 / 768.0) * (width as f64 / 1024.0) * 5000.0;
    scaled.max(250.0).round() as usize
}

/// Mirror index with edge repetition (`d c b a | a b c d | d c b a`), valid
/// for any offset.
#[inline]
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    let period = 2 * len as isize;
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian smoothing of each RGB channel into `f32` planes laid
/// out as `[r, g, b]` per pixel.
pub fn gaussian_smooth(img: &Image, sigma: f64) -> Vec<f32> {
    let (h, w) = img.dims();
    let src: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    if sigma <= 0.0 {
        return src.iter().map(|&v| v as f32).collect();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0f64; src.len()];
    for r in 0..h {
        for c in 0..w {
            for ch in 0..3 {
                let mut acc = 0.0;
                for (t, kv) in kernel.iter().enumerate() {
                    let cc = reflect_index(c as isize + t as isize - radius, w);
                    acc += kv * src[(r * w + cc) * 3 + ch];
                }
                tmp[(r * w + c) * 3 + ch] = acc;
            }
        }
    }
    let mut out = vec![0.0f32; src.len()];
    for r in 0..h {
        for c in 0..w {
            for ch in 0..3 {
                let mut acc = 0.0;
                for (t, kv) in kernel.iter().enumerate() {
                    let rr = reflect_index(r as isize + t as isize - radius, h);
                    acc += kv * tmp[(rr * w + c) * 3 + ch];
                }
                out[(r * w + c) * 3 + ch] = acc as f32;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Edge {
    pub weight: f32,
    pub a: u32,
    pub b: u32,
}

impl Edge {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

/// 8-connected grid edges, each emitted once with `a < b`.
pub(crate) fn grid_edges(smoothed: &[f32], height: usize, width: usize) -> Vec<Edge> {
    let dist = |i: usize, j: usize| -> f32 {
        let (p, q) = (&smoothed[i * 3..i * 3 + 3], &smoothed[j * 3..j * 3 + 3]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    };
    let mut edges = Vec::with_capacity(height * width * 4);
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            let mut push = |j: usize| {
                edges.push(Edge {
                    weight: dist(i, j),
                    a: i as u32,
                    b: j as u32,
                })
            };
            if c + 1 < width {
                push(i + 1);
            }
            if r + 1 < height {
                push(i + width);
                if c + 1 < width {
                    push(i + width + 1);
                }
                if c > 0 {
                    push(i + width - 1);
                }
            }
        }
    }
    edges
}

struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
    /// Largest MST edge weight inside each root's component.
    internal: Vec<f32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Joins two roots; the larger component (lower index on ties) stays root.
    fn union(&mut self, a: u32, b: u32, weight: f32) -> u32 {
        let (big, small) = match self.size[a as usize].cmp(&self.size[b as usize]) {
            Ordering::Greater => (a, b),
            Ordering::Less => (b, a),
            Ordering::Equal => (a.min(b), a.max(b)),
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.internal[big as usize] = weight
            .max(self.internal[big as usize])
            .max(self.internal[small as usize]);
        big
    }
}

/// Runs both merge passes over an edge list; the list is sorted here by
/// `(weight, a, b)` so its incoming order does not matter.
pub(crate) fn segment_edges(mut edges: Vec<Edge>, height: usize, width: usize, params: &FelzParams) -> LabelMap {
    let n = height * width;
    edges.sort_by(Edge::key_cmp);
    let mut ds = DisjointSet::new(n);
    let scale = params.scale as f32;
    for e in &edges {
        let (ra, rb) = (ds.find(e.a), ds.find(e.b));
        if ra == rb {
            continue;
        }
        let ta = ds.internal[ra as usize] + scale / ds.size[ra as usize] as f32;
        let tb = ds.internal[rb as usize] + scale / ds.size[rb as usize] as f32;
        if e.weight <= ta.min(tb) {
            ds.union(ra, rb, e.weight);
        }
    }
    let min_size = params.min_size as u32;
    for e in &edges {
        let (ra, rb) = (ds.find(e.a), ds.find(e.b));
        if ra != rb && (ds.size[ra as usize] < min_size || ds.size[rb as usize] < min_size) {
            ds.union(ra, rb, e.weight);
        }
    }
    let roots: Vec<u32> = (0..n as u32).map(|i| ds.find(i)).collect();
    LabelMap::new(height, width, roots)
        .expect("label count matches pixel count")
        .relabel_contiguous()
}

/// Segments `img` into a full partition with contiguous ids assigned in
/// raster order of first appearance.
pub fn felzenszwalb_segment(img: &Image, params: &FelzParams) -> LabelMap {
    let (h, w) = img.dims();
    let smoothed = gaussian_smooth(img, params.sigma);
    segment_edges(grid_edges(&smoothed, h, w), h, w, params)
}
