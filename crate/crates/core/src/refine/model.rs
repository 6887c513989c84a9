use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::features::{features, FEATURES};
use crate::error::{Error, Result};
use crate::image::{Image, LabelMap};

pub const HIDDEN: usize = 64;
const MAGIC: &[u8; 4] = b"SGDR";
const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 * 4;
const CHUNK: usize = 256;
/// Features are shifted by this before the hidden layer.
const INPUT_CENTER: f64 = 0.5;
/// Hidden activations are scaled by `1/√HIDDEN` before the output layer.
const HIDDEN_SCALE: f64 = 0.125;

/// Two-layer per-pixel classifier: `FEATURES → HIDDEN (tanh) → C` logits,
/// `z = W2 · tanh(W1 · (x − 0.5) + b1) / √HIDDEN + b2`.
///
/// Parameters are held as `f64` and stored on disk as `f32`; trained models
/// are rounded to `f32` precision so a saved and reloaded model is identical.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinerModel {
    c: usize,
    /// `HIDDEN × FEATURES`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `C × HIDDEN`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Same layout as the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros(c: usize) -> Self {
        Self {
            w1: vec![0.0; HIDDEN * FEATURES],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; c * HIDDEN],
            b2: vec![0.0; c],
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// All entries in block order.
    pub fn flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }
}

/// Per-pixel argmax labels and the full softmax, `H × W × C`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub labels: LabelMap,
    pub probabilities: Vec<f32>,
}

impl RefinerModel {
    /// Xavier-uniform weights with zero biases; the hidden scaling keeps
    /// initial predictions close to uniform.
    pub fn init(c: usize, seed: u64) -> Result<Self> {
        if c < 2 {
            return Err(Error::InvalidParameter(format!(
                "the refiner needs at least 2 concepts, got C = {c}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = (6.0 / (FEATURES + HIDDEN) as f64).sqrt();
        let a2 = (6.0 / (HIDDEN + c) as f64).sqrt();
        let mut model = Self {
            c,
            w1: (0..HIDDEN * FEATURES).map(|_| rng.gen_range(-a1..a1)).collect(),
            b1: vec![0.0; HIDDEN],
            w2: (0..c * HIDDEN).map(|_| rng.gen_range(-a2..a2)).collect(),
            b2: vec![0.0; c],
        };
        model.quantize();
        Ok(model)
    }

    pub fn concepts(&self) -> usize {
        self.c
    }

    pub fn param_count(&self) -> usize {
        HIDDEN * FEATURES + HIDDEN + self.c * HIDDEN + self.c
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Parameter `i` in block order (`w1, b1, w2, b2`).
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for block in self.blocks_mut() {
            if i < block.len() {
                return &mut block[i];
            }
            i -= block.len();
        }
        panic!("parameter index out of range");
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn quantize(&mut self) {
        for block in self.blocks_mut() {
            for v in block.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    fn hidden(&self, x: &[f64], h: &mut [f64; HIDDEN]) {
        for (j, hj) in h.iter_mut().enumerate() {
            let w = &self.w1[j * FEATURES..(j + 1) * FEATURES];
            let pre = self.b1[j] + w.iter().zip(x).map(|(a, b)| a * (b - INPUT_CENTER)).sum::<f64>();
            *hj = pre.tanh();
        }
    }

    fn logits(&self, h: &[f64; HIDDEN], z: &mut [f64]) {
        for (k, zk) in z.iter_mut().enumerate() {
            let w = &self.w2[k * HIDDEN..(k + 1) * HIDDEN];
            *zk = self.b2[k] + HIDDEN_SCALE * w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// In-place softmax; returns log-sum-exp.
    fn softmax(z: &mut [f64]) -> f64 {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        for v in z.iter_mut() {
            *v = (*v - lse).exp();
        }
        lse
    }

    fn chunk_loss_grad(&self, x: &[f64], y: &[u32], grad: Option<&mut Gradients>) -> f64 {
        let mut h = [0.0; HIDDEN];
        let mut z = vec![0.0; self.c];
        let mut dh = [0.0; HIDDEN];
        let mut loss = 0.0;
        let mut grad = grad;
        for (xi, &yi) in x.chunks_exact(FEATURES).zip(y) {
            self.hidden(xi, &mut h);
            self.logits(&h, &mut z);
            let target = z[yi as usize];
            let lse = Self::softmax(&mut z);
            loss += lse - target;
            let Some(g) = grad.as_deref_mut() else { continue };
            z[yi as usize] -= 1.0;
            dh.fill(0.0);
            for (k, &dz) in z.iter().enumerate() {
                g.b2[k] += dz;
                let w = &self.w2[k * HIDDEN..(k + 1) * HIDDEN];
                let gw = &mut g.w2[k * HIDDEN..(k + 1) * HIDDEN];
                for j in 0..HIDDEN {
                    gw[j] += dz * HIDDEN_SCALE * h[j];
                    dh[j] += dz * HIDDEN_SCALE * w[j];
                }
            }
            for j in 0..HIDDEN {
                let dpre = dh[j] * (1.0 - h[j] * h[j]);
                g.b1[j] += dpre;
                let gw = &mut g.w1[j * FEATURES..(j + 1) * FEATURES];
                for (gv, xv) in gw.iter_mut().zip(xi) {
                    *gv += dpre * (xv - INPUT_CENTER);
                }
            }
        }
        loss
    }

    fn check_batch(&self, x: &[f64], y: &[u32]) -> Result<()> {
        if x.len() != y.len() * FEATURES {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values for {} labels",
                x.len(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&l| l as usize >= self.c) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                count: self.c,
            });
        }
        Ok(())
    }

    /// Summed cross-entropy over the batch (`n × FEATURES` features).
    pub fn loss(&self, x: &[f64], y: &[u32]) -> Result<f64> {
        self.check_batch(x, y)?;
        Ok(x.par_chunks(CHUNK * FEATURES)
            .zip(y.par_chunks(CHUNK))
            .map(|(xc, yc)| self.chunk_loss_grad(xc, yc, None))
            .collect::<Vec<_>>()
            .into_iter()
            .sum())
    }

    /// Summed cross-entropy and its gradient. Chunks are reduced in a fixed
    /// order so the result does not depend on thread scheduling.
    pub fn loss_and_grad(&self, x: &[f64], y: &[u32]) -> Result<(f64, Gradients)> {
        self.check_batch(x, y)?;
        let parts: Vec<(f64, Gradients)> = x
            .par_chunks(CHUNK * FEATURES)
            .zip(y.par_chunks(CHUNK))
            .map(|(xc, yc)| {
                let mut g = Gradients::zeros(self.c);
                let l = self.chunk_loss_grad(xc, yc, Some(&mut g));
                (l, g)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = Gradients::zeros(self.c);
        for (l, g) in &parts {
            loss += l;
            grad.add(g);
        }
        Ok((loss, grad))
    }

    /// Softmax over concepts for every pixel; labels take the highest
    /// probability with ties going to the lowest concept id.
    pub fn predict(&self, img: &Image) -> Prediction {
        let f = features(img);
        let (h, w) = img.dims();
        let c = self.c;
        let mut probabilities = vec![0f32; h * w * c];
        let mut labels = vec![0u32; h * w];
        probabilities
            .par_chunks_mut(CHUNK * c)
            .zip(labels.par_chunks_mut(CHUNK))
            .enumerate()
            .for_each(|(chunk, (probs, labs))| {
                let mut hid = [0.0; HIDDEN];
                let mut z = vec![0.0; c];
                for (n, (p, l)) in probs.chunks_exact_mut(c).zip(labs.iter_mut()).enumerate() {
                    self.hidden(f.pixel(chunk * CHUNK + n), &mut hid);
                    self.logits(&hid, &mut z);
                    Self::softmax(&mut z);
                    let mut best = 0;
                    for k in 1..c {
                        if z[k] > z[best] {
                            best = k;
                        }
                    }
                    *l = best as u32;
                    for (pk, zk) in p.iter_mut().zip(&z) {
                        *pk = *zk as f32;
                    }
                }
            });
        Prediction {
            labels: LabelMap::new(h, w, labels).expect("matching dims"),
            probabilities,
        }
    }

    /// `"SGDR"`, version, C, FEATURES, HIDDEN as little-endian `u32`, then
    /// `w1, b1, w2, b2` as little-endian `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 4 * self.param_count());
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.c as u32, FEATURES as u32, HIDDEN as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for block in [&self.w1, &self.b1, &self.w2, &self.b2] {
            for &v in block.iter() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < HEADER {
            return Err(Error::Truncated {
                expected: HEADER as u64,
                found: bytes.len() as u64,
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::BadMagic(origin.display().to_string()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != VERSION {
            return Err(Error::VersionMismatch {
                expected: VERSION,
                found: word(0),
            });
        }
        let (c, f, hidden) = (word(1) as usize, word(2) as usize, word(3) as usize);
        if f != FEATURES || hidden != HIDDEN || c < 2 {
            return Err(Error::InvalidParameter(format!(
                "model shape C = {c}, features = {f}, hidden = {hidden} is not supported"
            )));
        }
        let mut model = Self {
            c,
            w1: vec![0.0; HIDDEN * FEATURES],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; c * HIDDEN],
            b2: vec![0.0; c],
        };
        let expected = HEADER + 4 * model.param_count();
        if bytes.len() != expected {
            return Err(Error::Truncated {
                expected: expected as u64,
                found: bytes.len() as u64,
            });
        }
        let mut values = bytes[HEADER..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()));
        for block in model.blocks_mut() {
            for v in block.iter_mut() {
                let x = values.next().unwrap();
                if !x.is_finite() {
                    return Err(Error::NonFinite(format!("parameter in {}", origin.display())));
                }
                *v = x as f64;
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
