//! Primitive embeddings: the built-in color/layout descriptor and the `SGDE`
//! binary interchange format.
//!
//! `SGDE` layout, little-endian:
//!
//! ```text
//! "SGDE" | u32 version = 1 | u32 N | u32 D | N × ( u32 image_id | u32 primitive_id | D × f32 )
//! ```
//!
//! Records are sorted strictly by `(image_id, primitive_id)`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{pixel_to_hsv, Image};

pub const MAGIC: &[u8; 4] = b"SGDE";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 16;

pub const HUE_BINS: usize = 8;
pub const SAT_BINS: usize = 4;
pub const VAL_BINS: usize = 4;
pub const HIST_DIM: usize = HUE_BINS * SAT_BINS * VAL_BINS;
pub const BUILTIN_DIM: usize = HIST_DIM + 12;

pub type Key = (u32, u32);

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    keys: Vec<Key>,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from rows in any order; rows are sorted by key.
    pub fn from_rows(dim: usize, rows: Vec<(Key, Vec<f32>)>) -> Result<Self> {
        let mut rows = rows;
        rows.sort_by_key(|r| r.0);
        let mut keys = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (key, row) in rows {
            if keys.last() == Some(&key) {
                return Err(Error::DuplicateKey(key.0, key.1));
            }
            if row.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row ({}, {}) has {} values, expected {dim}",
                    key.0,
                    key.1,
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{v} in row ({}, {})", key.0, key.1)));
            }
            keys.push(key);
            data.extend_from_slice(&row);
        }
        Ok(Self { keys, dim, data })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = (Key, &[f32])> {
        self.keys.iter().copied().zip(self.data.chunks_exact(self.dim.max(1)))
    }

    pub fn index_of(&self, key: Key) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }

    /// Rows scaled to unit ℓ2 norm; zero rows are left unchanged.
    pub fn l2_normalized(&self) -> Self {
        let mut out = self.clone();
        if self.dim == 0 {
            return out;
        }
        for row in out.data.chunks_exact_mut(self.dim) {
            let norm = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN as usize + self.len() * (8 + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (i, key) in self.keys.iter().enumerate() {
            out.extend_from_slice(&key.0.to_le_bytes());
            out.extend_from_slice(&key.1.to_le_bytes());
            for v in self.row(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic(origin.to_string()));
        }
        if (bytes.len() as u64) < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len() as u64,
            });
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::VersionMismatch {
                expected: VERSION,
                found: version,
            });
        }
        let n = u32_at(8) as u64;
        let dim = u32_at(12) as u64;
        let expected = HEADER_LEN + n * (8 + 4 * dim);
        if bytes.len() as u64 != expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len() as u64,
            });
        }
        let (n, dim) = (n as usize, dim as usize);
        let mut keys = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dim);
        let mut pos = HEADER_LEN as usize;
        for _ in 0..n {
            let key = (u32_at(pos), u32_at(pos + 4));
            pos += 8;
            if let Some(&prev) = keys.last() {
                if key == prev {
                    return Err(Error::DuplicateKey(key.0, key.1));
                }
                if key < prev {
                    return Err(Error::UnsortedKeys(key.0, key.1));
                }
            }
            keys.push(key);
            for _ in 0..dim {
                let v = f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("{v} in row ({}, {})", key.0, key.1)));
                }
                data.push(v);
                pos += 4;
            }
        }
        Ok(Self { keys, dim, data })
    }
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&matrix.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes, &path.display().to_string())
}

fn hsv_bin(rgb: [u8; 3]) -> usize {
    let (h, s, v) = pixel_to_hsv(rgb);
    let hb = ((h / (360.0 / HUE_BINS as f32)) as usize).min(HUE_BINS - 1);
    let sb = ((s * SAT_BINS as f32) as usize).min(SAT_BINS - 1);
    let vb = ((v * VAL_BINS as f32) as usize).min(VAL_BINS - 1);
    (hb * SAT_BINS + sb) * VAL_BINS + vb
}

/// Color/layout descriptor for a crop: a hard-binned 8×4×4 HSV histogram
/// (fractions of pixels) followed by mean RGB/255 of the 2×2 spatial grid in
/// order top-left, top-right, bottom-left, bottom-right; ℓ2-normalized.
pub fn embed_builtin(crop: &Image) -> Vec<f32> {
    let (h, w) = crop.dims();
    let mut hist = [0.0f64; HIST_DIM];
    let mut grid = [[0.0f64; 3]; 4];
    let mut grid_n = [0usize; 4];
    for r in 0..h {
        for c in 0..w {
            let px = crop.get(r, c);
            hist[hsv_bin(px)] += 1.0;
            let cell = usize::from(r >= h / 2 && h > 1) * 2 + usize::from(c >= w / 2 && w > 1);
            grid_n[cell] += 1;
            for ch in 0..3 {
                grid[cell][ch] += px[ch] as f64;
            }
        }
    }
    let total = (h * w) as f64;
    let mut v: Vec<f64> = hist.iter().map(|&x| x / total).collect();
    for (sums, &n) in grid.iter().zip(&grid_n) {
        for &sum in sums {
            v.push(if n > 0 { sum / n as f64 / 255.0 } else { 0.0 });
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|&x| (x / norm) as f32).collect()
}
