//! Color rendering of label maps.

use crate::eval::Matching;
use crate::image::{hsv_to_pixel, Image, LabelMap, IGNORE};

const BASE: [[u8; 3]; 27] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
    [128, 128, 0],
    [255, 215, 180],
    [0, 0, 128],
    [128, 128, 128],
    [255, 255, 255],
    [100, 60, 20],
    [0, 90, 40],
    [120, 160, 255],
    [255, 100, 100],
    [80, 0, 80],
    [190, 190, 0],
];

const GOLDEN_ANGLE: f32 = 137.507_77;

/// Fixed color for label `i`: 27 base colors, then hues stepped by the
/// golden angle.
pub fn palette_color(i: u32) -> [u8; 3] {
    match BASE.get(i as usize) {
        Some(&c) => c,
        None => {
            let k = i as usize - BASE.len();
            let hue = (k as f32 * GOLDEN_ANGLE) % 360.0;
            let value = [0.95, 0.75, 0.55][k % 3];
            hsv_to_pixel(hue, 0.8, value)
        }
    }
}

/// Renders labels directly through the palette; ignore pixels are black.
pub fn render(labels: &LabelMap) -> Image {
    let (h, w) = labels.dims();
    Image::from_fn(h, w, |r, c| match labels.get(r, c) {
        IGNORE => [0, 0, 0],
        l => palette_color(l),
    })
    .expect("label map dims are valid")
}

/// Renders predicted groups in the color of their matched class so that
/// the output lines up with a ground-truth rendering. Groups without a
/// class take colors past the class range.
pub fn render_matched(labels: &LabelMap, matching: &Matching, classes: usize) -> Image {
    let (h, w) = labels.dims();
    Image::from_fn(h, w, |r, c| match labels.get(r, c) {
        IGNORE => [0, 0, 0],
        l => match matching.map.get(l as usize).copied().flatten() {
            Some(g) => palette_color(g),
            None => palette_color(classes as u32 + l),
        },
    })
    .expect("label map dims are valid")
}
