//! Raster types shared by every stage: RGB images, HSV planes and integer
//! label maps, plus their on-disk codecs.
//!
//! Images are read from 8-bit RGB PNG or binary PPM (`P6`, maxval 255) and
//! written as PNG. Label maps use 16-bit grayscale PNG where the sample value
//! is the label id and [`IGNORE`] marks unlabeled pixels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use crate::error::{Error, Result};

/// Reserved label value for pixels excluded from evaluation.
pub const IGNORE: u32 = 65535;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} bytes for {height}x{width} RGB, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Self::new(height, width, data)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for r in 0..height {
            for c in 0..width {
                data.extend_from_slice(&f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Decodes an 8-bit RGB PNG or a binary PPM, chosen by file signature.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(b"\x89PNG") {
            decode_rgb_png(path, &bytes)
        } else if bytes.starts_with(b"P6") {
            decode_ppm(path, &bytes)
        } else {
            Err(Error::Decode {
                path: path.into(),
                message: "neither PNG nor binary PPM".into(),
            })
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        write_png(
            path.as_ref(),
            self.width as u32,
            self.height as u32,
            png::ColorType::Rgb,
            png::BitDepth::Eight,
            &self.data,
        )
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                out.set(r, c, self.get(r, self.width - 1 - c));
            }
        }
        out
    }

    /// Bilinear resize with half-pixel centers and edge clamping; an
    /// equal-size resize is the identity.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Image {
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let mut data = Vec::with_capacity(height * width * 3);
        for r in 0..height {
            let (y0, y1, fy) = bilinear_taps(r, sy, self.height);
            for c in 0..width {
                let (x0, x1, fx) = bilinear_taps(c, sx, self.width);
                let p00 = self.get(y0, x0);
                let p01 = self.get(y0, x1);
                let p10 = self.get(y1, x0);
                let p11 = self.get(y1, x1);
                for ch in 0..3 {
                    let top = p00[ch] as f64 * (1.0 - fx) + p01[ch] as f64 * fx;
                    let bot = p10[ch] as f64 * (1.0 - fx) + p11[ch] as f64 * fx;
                    let v = top * (1.0 - fy) + bot * fy;
                    data.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Image { height, width, data }
    }
}

/// Source taps for output index `i` under half-pixel-center sampling.
pub(crate) fn bilinear_taps(i: usize, scale: f64, len: usize) -> (usize, usize, f64) {
    let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    let frac = if i1 == i0 { 0.0 } else { src - i0 as f64 };
    (i0, i1, frac)
}

/// Nearest-neighbor source index for output index `i`.
pub(crate) fn nearest_tap(i: usize, scale: f64, len: usize) -> usize {
    (((i as f64 + 0.5) * scale).floor() as usize).min(len - 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HsvImage {
    height: usize,
    width: usize,
    /// Degrees in [0, 360).
    pub hue: Vec<f32>,
    pub saturation: Vec<f32>,
    pub value: Vec<f32>,
}

impl HsvImage {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Hexcone HSV of one 8-bit pixel. Achromatic pixels get hue 0 and
/// saturation 0.
pub fn pixel_to_hsv(rgb: [u8; 3]) -> (f32, f32, f32) {
    let r = rgb[0] as f32 / 255.0;
    let g = rgb[1] as f32 / 255.0;
    let b = rgb[2] as f32 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta == 0.0 {
        return (0.0, 0.0, max);
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut hue = 60.0 * sector;
    if hue >= 360.0 {
        hue -= 360.0;
    }
    (hue, delta / max, max)
}

/// Inverse of [`pixel_to_hsv`], rounding to the nearest 8-bit value.
pub fn hsv_to_pixel(hue: f32, saturation: f32, value: f32) -> [u8; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let c = value * saturation;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = value - c;
    let to8 = |v: f32| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to8(r), to8(g), to8(b)]
}

pub fn rgb_to_hsv(img: &Image) -> HsvImage {
    let n = img.pixel_count();
    let mut hue = Vec::with_capacity(n);
    let mut saturation = Vec::with_capacity(n);
    let mut value = Vec::with_capacity(n);
    for px in img.data.chunks_exact(3) {
        let (h, s, v) = pixel_to_hsv([px[0], px[1], px[2]]);
        hue.push(h);
        saturation.push(s);
        value.push(v);
    }
    HsvImage {
        height: img.height,
        width: img.width,
        hue,
        saturation,
        value,
    }
}

/// Per-pixel integer labels. Superpixel, pseudo-label, prediction and ground
/// truth maps all use this type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::InvalidImage(format!(
                "expected {} labels for {height}x{width}, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self { height, width, labels })
    }

    pub fn filled(height: usize, width: usize, label: u32) -> Result<Self> {
        Self::new(height, width, vec![label; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u32) -> Result<Self> {
        let mut labels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                labels.push(f(r, c));
            }
        }
        Self::new(height, width, labels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, label: u32) {
        self.labels[row * self.width + col] = label;
    }

    /// One past the largest non-ignore label, or 0 when every pixel is ignore.
    pub fn label_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l != IGNORE)
            .max()
            .map_or(0, |&m| m as usize + 1)
    }

    /// Checks that labels are exactly `0..n` with no ignore pixels and
    /// returns `n`.
    pub fn check_partition(&self) -> Result<usize> {
        let n = self.label_count();
        let mut seen = vec![false; n];
        for &l in &self.labels {
            if l == IGNORE {
                return Err(Error::InvalidImage("partition contains ignore pixels".into()));
            }
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidImage(format!(
                "partition labels not contiguous: {missing} unused"
            )));
        }
        Ok(n)
    }

    /// Relabels to contiguous ids in order of first appearance in raster
    /// scan. Ignore pixels stay ignore.
    pub fn relabel_contiguous(&self) -> LabelMap {
        let mut remap = std::collections::HashMap::new();
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if l == IGNORE {
                    return IGNORE;
                }
                let next = remap.len() as u32;
                *remap.entry(l).or_insert(next)
            })
            .collect();
        LabelMap {
            height: self.height,
            width: self.width,
            labels,
        }
    }

    pub fn flip_horizontal(&self) -> LabelMap {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                out.set(r, c, self.get(r, self.width - 1 - c));
            }
        }
        out
    }

    pub fn resize_nearest(&self, height: usize, width: usize) -> LabelMap {
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        LabelMap::from_fn(height, width, |r, c| {
            self.get(nearest_tap(r, sy, self.height), nearest_tap(c, sx, self.width))
        })
        .expect("positive target dimensions")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let decoder = png::Decoder::new(BufReader::new(file));
        let mut reader = decoder.read_info().map_err(|e| decode_err(path, e))?;
        let info = reader.info();
        if info.bit_depth != png::BitDepth::Sixteen {
            return Err(Error::UnsupportedBitDepth {
                path: path.into(),
                depth: info.bit_depth as u8,
            });
        }
        if info.color_type != png::ColorType::Grayscale {
            return Err(Error::UnsupportedColorType {
                path: path.into(),
                color: format!("{:?}", info.color_type),
            });
        }
        let (width, height) = (info.width as usize, info.height as usize);
        let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(width * height * 2)];
        reader.next_frame(&mut buf).map_err(|e| decode_err(path, e))?;
        let labels = buf[..width * height * 2]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as u32)
            .collect();
        Self::new(height, width, labels)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.labels.len() * 2);
        for &l in &self.labels {
            let v = u16::try_from(l).map_err(|_| Error::LabelOutOfRange {
                label: l,
                count: IGNORE as usize,
            })?;
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        write_png(
            path.as_ref(),
            self.width as u32,
            self.height as u32,
            png::ColorType::Grayscale,
            png::BitDepth::Sixteen,
            &bytes,
        )
    }
}

fn decode_err(path: &Path, e: png::DecodingError) -> Error {
    Error::Decode {
        path: path.into(),
        message: e.to_string(),
    }
}

fn decode_rgb_png(path: &Path, bytes: &[u8]) -> Result<Image> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| decode_err(path, e))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedBitDepth {
            path: path.into(),
            depth: info.bit_depth as u8,
        });
    }
    if info.color_type != png::ColorType::Rgb {
        return Err(Error::UnsupportedColorType {
            path: path.into(),
            color: format!("{:?}", info.color_type),
        });
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(width * height * 3)];
    reader.next_frame(&mut buf).map_err(|e| decode_err(path, e))?;
    buf.truncate(width * height * 3);
    Image::new(height, width, buf)
}

fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<Image> {
    let bad = |message: &str| Error::Decode {
        path: path.into(),
        message: message.into(),
    };
    // Header: magic, width, height, maxval, separated by whitespace with
    // optional `#` comments, then exactly one whitespace byte.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated PPM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed PPM header"))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(bad("malformed PPM header"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedBitDepth {
            path: path.into(),
            depth: if maxval > 255 { 16 } else { 8 },
        });
    }
    let n = width * height * 3;
    let payload = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated PPM payload"))?;
    Image::new(height, width, payload.to_vec())
}

fn write_png(
    path: &Path,
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let encode_err = |e: png::EncodingError| Error::Decode {
        path: path.into(),
        message: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(data).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}
