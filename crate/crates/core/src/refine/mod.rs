//! Concept refinement: pseudo-labels assembled from primitive concepts
//! supervise a per-pixel classifier over multi-scale color context, trained
//! with pixel-wise softmax cross-entropy and SGD with momentum.

mod augment;
mod features;
mod model;
mod train;

pub use augment::{augment, AugmentPlan, AugmentToggles, CropWindow};
pub use features::{box_mean, features, FeatureMap, FEATURES};
pub use model::{Gradients, Prediction, RefinerModel, HIDDEN};
pub use train::{train_refiner, TrainOutcome, TrainParams, TrainingPair};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::image::LabelMap;

/// Broadcasts each primitive's concept to its pixels.
pub fn assemble_pseudolabels(map: &LabelMap, concepts: &BTreeMap<u32, u32>) -> Result<LabelMap> {
    let mut out = map.clone();
    for l in out.labels_mut() {
        *l = *concepts.get(l).ok_or(Error::MissingConcept(*l))?;
    }
    Ok(out)
}

/// Deterministic 64-bit mix of a seed with stream coordinates.
pub(crate) fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
