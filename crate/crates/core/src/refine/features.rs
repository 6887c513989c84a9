use crate::image::Image;
use crate::superpixel::reflect_index;

/// Per-pixel feature count: RGB, box means at three radii, coordinates.
pub const FEATURES: usize = 14;
const RADII: [usize; 3] = [2, 8, 32];

/// `H × W × FEATURES` row-major features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    #[inline]
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * FEATURES..(index + 1) * FEATURES]
    }
}

/// Mean over a 1-D window of `2r + 1` samples with mirrored borders.
fn box_1d(src: &[f64], radius: usize, out: &mut [f64]) {
    let n = src.len();
    let mut prefix = Vec::with_capacity(n + 2 * radius + 1);
    prefix.push(0.0);
    for t in 0..n + 2 * radius {
        let v = src[reflect_index(t as isize - radius as isize, n)];
        prefix.push(prefix.last().unwrap() + v);
    }
    let width = (2 * radius + 1) as f64;
    for (i, o) in out.iter_mut().enumerate() {
        *o = (prefix[i + 2 * radius + 1] - prefix[i]) / width;
    }
}

/// Box mean of one channel plane (`H × W`) over a `(2r+1)²` window with
/// mirrored borders, applied separably.
pub fn box_mean(plane: &[f64], height: usize, width: usize, radius: usize) -> Vec<f64> {
    let mut rows = vec![0.0; height * width];
    for r in 0..height {
        box_1d(
            &plane[r * width..(r + 1) * width],
            radius,
            &mut rows[r * width..(r + 1) * width],
        );
    }
    let mut out = vec![0.0; height * width];
    let mut col = vec![0.0; height];
    let mut col_out = vec![0.0; height];
    for c in 0..width {
        for r in 0..height {
            col[r] = rows[r * width + c];
        }
        box_1d(&col, radius, &mut col_out);
        for r in 0..height {
            out[r * width + c] = col_out[r];
        }
    }
    out
}

/// Per pixel: RGB/255, box-mean RGB/255 at radii 2, 8 and 32, then
/// `(row / H, col / W)`.
pub fn features(img: &Image) -> FeatureMap {
    let (h, w) = img.dims();
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|ch| {
            img.data()
                .iter()
                .skip(ch)
                .step_by(3)
                .map(|&v| v as f64 / 255.0)
                .collect()
        })
        .collect();
    let smoothed: Vec<Vec<Vec<f64>>> = RADII
        .iter()
        .map(|&r| planes.iter().map(|p| box_mean(p, h, w, r)).collect())
        .collect();
    let mut data = Vec::with_capacity(h * w * FEATURES);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            for p in &planes {
                data.push(p[i]);
            }
            for scale in &smoothed {
                for p in scale {
                    data.push(p[i]);
                }
            }
            data.push(r as f64 / h as f64);
            data.push(c as f64 / w as f64);
        }
    }
    FeatureMap {
        height: h,
        width: w,
        data,
    }
}
