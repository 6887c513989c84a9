use rand::Rng;

use crate::image::{hsv_to_pixel, pixel_to_hsv, Image, LabelMap};

/// Which augmentations are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentToggles {
    pub crop: bool,
    pub flip: bool,
    pub saturation: bool,
}

impl AugmentToggles {
    pub const ALL: Self = Self {
        crop: true,
        flip: true,
        saturation: true,
    };
    pub const NONE: Self = Self {
        crop: false,
        flip: false,
        saturation: false,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropWindow {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// One concrete draw of the augmentations, applied identically to an image
/// and its label map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentPlan {
    pub crop: Option<CropWindow>,
    pub flip: bool,
    pub saturation: Option<f64>,
}

impl AugmentPlan {
    pub const IDENTITY: Self = Self {
        crop: None,
        flip: false,
        saturation: None,
    };

    /// Crop scale `U(0.5, 1)` at the source aspect with a uniform position,
    /// horizontal flip with probability 0.5, saturation factor
    /// `U(0.6, 1.4)`. All draws happen regardless of the toggles so that the
    /// random stream does not depend on them.
    pub fn sample(rng: &mut impl Rng, height: usize, width: usize, toggles: AugmentToggles) -> Self {
        let scale: f64 = rng.gen_range(0.5..1.0);
        let ch = ((height as f64 * scale).round() as usize).clamp(1, height);
        let cw = ((width as f64 * scale).round() as usize).clamp(1, width);
        let top = rng.gen_range(0..=height - ch);
        let left = rng.gen_range(0..=width - cw);
        let flip = rng.gen_bool(0.5);
        let factor = rng.gen_range(0.6..1.4);
        Self {
            crop: toggles.crop.then_some(CropWindow {
                top,
                left,
                height: ch,
                width: cw,
            }),
            flip: toggles.flip && flip,
            saturation: toggles.saturation.then_some(factor),
        }
    }
}

/// Applies `plan`: crop then resize back to the source size (bilinear for the
/// image, nearest for labels), flip, then saturation scaling on the image.
pub fn augment(img: &Image, labels: &LabelMap, plan: &AugmentPlan) -> (Image, LabelMap) {
    let (h, w) = img.dims();
    let (mut img, mut labels) = match plan.crop {
        Some(win) => {
            let ci = Image::from_fn(win.height, win.width, |r, c| img.get(win.top + r, win.left + c))
                .expect("non-empty crop");
            let cl = LabelMap::from_fn(win.height, win.width, |r, c| labels.get(win.top + r, win.left + c))
                .expect("non-empty crop");
            (ci.resize_bilinear(h, w), cl.resize_nearest(h, w))
        }
        None => (img.clone(), labels.clone()),
    };
    if plan.flip {
        img = img.flip_horizontal();
        labels = labels.flip_horizontal();
    }
    if let Some(factor) = plan.saturation {
        img = Image::from_fn(h, w, |r, c| {
            let (hue, s, v) = pixel_to_hsv(img.get(r, c));
            hsv_to_pixel(hue, (s as f64 * factor).min(1.0) as f32, v)
        })
        .expect("same dims");
    }
    (img, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn fixture() -> (Image, LabelMap) {
        let img = Image::from_fn(20, 30, |r, c| [(r * 10) as u8, (c * 8) as u8, 100]).unwrap();
        let labels = LabelMap::from_fn(20, 30, |r, c| ((r / 7) * 5 + c / 7) as u32).unwrap();
        (img, labels)
    }

    #[test]
    fn identity_plan_is_noop() {
        let (img, labels) = fixture();
        let (a, b) = augment(&img, &labels, &AugmentPlan::IDENTITY);
        assert_eq!((a, b), (img, labels));
    }

    #[test]
    fn flip_applies_to_both() {
        let (img, labels) = fixture();
        let plan = AugmentPlan {
            flip: true,
            ..AugmentPlan::IDENTITY
        };
        let (a, b) = augment(&img, &labels, &plan);
        assert_eq!(a.get(3, 0), img.get(3, 29));
        assert_eq!(b.get(3, 0), labels.get(3, 29));
    }

    #[test]
    fn augmented_labels_are_a_subset_with_same_dims() {
        let (img, labels) = fixture();
        let source: BTreeSet<u32> = labels.labels().iter().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let plan = AugmentPlan::sample(&mut rng, 20, 30, AugmentToggles::ALL);
            let (a, b) = augment(&img, &labels, &plan);
            assert_eq!(a.dims(), (20, 30));
            assert_eq!(b.dims(), (20, 30));
            assert!(b.labels().iter().all(|l| source.contains(l)));
        }
    }

    #[test]
    fn sampled_parameters_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let plan = AugmentPlan::sample(&mut rng, 40, 60, AugmentToggles::ALL);
            let win = plan.crop.unwrap();
            assert!(win.height >= 20 && win.height <= 40);
            assert!(win.top + win.height <= 40 && win.left + win.width <= 60);
            let f = plan.saturation.unwrap();
            assert!((0.6..1.4).contains(&f));
        }
    }

    #[test]
    fn toggles_disable_without_shifting_stream() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let off = AugmentPlan::sample(&mut a, 10, 10, AugmentToggles::NONE);
        assert_eq!(off, AugmentPlan::IDENTITY);
        AugmentPlan::sample(&mut b, 10, 10, AugmentToggles::ALL);
        assert_eq!(
            AugmentPlan::sample(&mut a, 10, 10, AugmentToggles::ALL),
            AugmentPlan::sample(&mut b, 10, 10, AugmentToggles::ALL)
        );
    }

    #[test]
    fn saturation_zero_grays_out() {
        let (img, labels) = fixture();
        let plan = AugmentPlan {
            saturation: Some(0.0),
            ..AugmentPlan::IDENTITY
        };
        let (a, _) = augment(&img, &labels, &plan);
        for px in a.data().chunks(3) {
            assert!(px[0] == px[1] && px[1] == px[2]);
        }
    }
}
