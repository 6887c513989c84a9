use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::augment::{augment, AugmentPlan, AugmentToggles};
use super::derive_seed;
use super::features::{features, FEATURES};
use super::model::{Gradients, RefinerModel};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::image::{Image, LabelMap};

/// An image and its pseudo-label map over concepts `0..C`.
#[derive(Clone, Debug)]
pub struct TrainingPair {
    pub image: Image,
    pub labels: LabelMap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainParams {
    pub c: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub pixels_per_step: usize,
    pub augment: AugmentToggles,
    pub seed: u64,
}

impl TrainParams {
    pub fn new(c: usize, seed: u64) -> Self {
        Self {
            c,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 30,
            pixels_per_step: 4096,
            augment: AugmentToggles::ALL,
            seed,
        }
    }

    pub fn from_config(cfg: &Config) -> Self {
        Self {
            c: cfg.c,
            lr: cfg.lr,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
            epochs: cfg.epochs,
            pixels_per_step: cfg.pixels_per_step,
            augment: AugmentToggles {
                crop: cfg.augment_crop,
                flip: cfg.augment_flip,
                saturation: cfg.augment_saturation,
            },
            seed: cfg.seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: RefinerModel,
    /// Mean per-pixel loss; entry 0 is the initial model on unaugmented
    /// images, entry `e` the running mean over epoch `e`'s steps.
    pub trace: Vec<f64>,
}

impl TrainOutcome {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (e, l) in self.trace.iter().enumerate() {
            out.push_str(&format!("{e},{l:.8}\n"));
        }
        out
    }
}

struct Batch {
    x: Vec<f64>,
    y: Vec<u32>,
}

fn sample_batch(img: &Image, labels: &LabelMap, n: usize, rng: &mut ChaCha8Rng) -> Batch {
    let f = features(img);
    let total = img.pixel_count();
    let mut picks = index::sample(rng, total, n.min(total)).into_vec();
    picks.sort_unstable();
    let mut x = Vec::with_capacity(picks.len() * FEATURES);
    let mut y = Vec::with_capacity(picks.len());
    for &p in &picks {
        x.extend_from_slice(f.pixel(p));
        y.push(labels.labels()[p]);
    }
    Batch { x, y }
}

fn prepare(pairs: &[TrainingPair], params: &TrainParams, epoch: u64, toggles: AugmentToggles) -> Vec<Batch> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, epoch, i as u64));
            let (h, w) = pair.image.dims();
            let plan = AugmentPlan::sample(&mut rng, h, w, toggles);
            let (img, labels) = augment(&pair.image, &pair.labels, &plan);
            sample_batch(&img, &labels, params.pixels_per_step, &mut rng)
        })
        .collect()
}

/// `v ← momentum·v + (g + weight_decay·θ)`, `θ ← θ − lr·v`.
pub(crate) fn sgd_step(model: &mut RefinerModel, grad: &Gradients, velocity: &mut Gradients, params: &TrainParams) {
    for ((theta, g), v) in model
        .blocks_mut()
        .into_iter()
        .zip(grad.blocks())
        .zip(velocity.blocks_mut())
    {
        for ((t, &gi), vi) in theta.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = params.momentum * *vi + gi + params.weight_decay * *t;
            *t -= params.lr * *vi;
        }
    }
}

fn validate(pairs: &[TrainingPair], params: &TrainParams) -> Result<()> {
    if params.c < 2 {
        return Err(Error::InvalidParameter(format!(
            "the refiner needs at least 2 concepts, got C = {}",
            params.c
        )));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no training images".into()));
    }
    if params.pixels_per_step == 0 || !(params.lr > 0.0) || !(params.momentum >= 0.0) || !(params.weight_decay >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "invalid optimizer settings: lr {}, momentum {}, weight decay {}, pixels per step {}",
            params.lr, params.momentum, params.weight_decay, params.pixels_per_step
        )));
    }
    for (i, pair) in pairs.iter().enumerate() {
        if pair.image.dims() != pair.labels.dims() {
            return Err(Error::DimensionMismatch(format!(
                "image {i} is {:?} but its pseudo-labels are {:?}",
                pair.image.dims(),
                pair.labels.dims()
            )));
        }
        if let Some(&bad) = pair.labels.labels().iter().find(|&&l| l as usize >= params.c) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                count: params.c,
            });
        }
    }
    Ok(())
}

/// Trains a refiner on pseudo-labels with pixel-wise softmax cross-entropy.
///
/// Each epoch visits every image once in a seeded shuffled order; each visit
/// augments the pair, draws up to `pixels_per_step` pixels and takes one SGD
/// step on the summed loss over them. Augmentation and feature extraction run
/// in parallel; the result depends only on the inputs and the seed.
pub fn train_refiner(pairs: &[TrainingPair], params: &TrainParams) -> Result<TrainOutcome> {
    validate(pairs, params)?;
    let mut model = RefinerModel::init(params.c, derive_seed(params.seed, u64::MAX, 0))?;
    let mut velocity = model.loss_and_grad(&[], &[])?.1;

    let initial = prepare(pairs, params, 0, AugmentToggles::NONE);
    let (mut sum, mut count) = (0.0, 0usize);
    for b in &initial {
        sum += model.loss(&b.x, &b.y)?;
        count += b.y.len();
    }
    let mut trace = vec![sum / count as f64];
    log::info!("epoch 0: mean loss {:.6}", trace[0]);

    for epoch in 1..=params.epochs {
        let batches = prepare(pairs, params, epoch as u64, params.augment);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            params.seed,
            epoch as u64,
            u64::MAX,
        )));
        let (mut sum, mut count) = (0.0, 0usize);
        for &i in &order {
            let b = &batches[i];
            let (loss, grad) = model.loss_and_grad(&b.x, &b.y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss {loss} at epoch {epoch}, image {i} (lr {}, momentum {})",
                    params.lr, params.momentum
                )));
            }
            sgd_step(&mut model, &grad, &mut velocity, params);
            sum += loss;
            count += b.y.len();
        }
        let mean = sum / count as f64;
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        trace.push(mean);
    }
    if model.blocks_mut().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
        return Err(Error::Diverged("non-finite weights after training".into()));
    }
    model.quantize();
    Ok(TrainOutcome { model, trace })
}
