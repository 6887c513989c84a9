//! Image manifests and dataset-wide statistics.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Ordered list of image paths; the image id is the zero-based position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    paths: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(paths: Vec<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, p) in paths.iter().enumerate() {
            if !seen.insert(p) {
                return Err(Error::Manifest {
                    path: p.clone(),
                    line: i + 1,
                    message: "duplicate path".into(),
                });
            }
        }
        Ok(Self { paths })
    }

    /// Parses one path per line. Blank lines and lines starting with `#`
    /// are skipped; relative paths resolve against the manifest's directory.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut paths = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let p = Path::new(line);
            let p = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            if !seen.insert(p.clone()) {
                return Err(Error::Manifest {
                    path: base.to_path_buf(),
                    line: lineno + 1,
                    message: format!("duplicate path {}", p.display()),
                });
            }
            paths.push(p);
        }
        Ok(Self { paths })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        for p in &self.paths {
            text.push_str(&p.to_string_lossy());
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &Path)> {
        self.paths.iter().enumerate().map(|(i, p)| (i as u32, p.as_path()))
    }
}

/// Per-channel RGB sums and pixel count; merging is exact integer addition
/// so the reduction is order-independent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ColorSums {
    pub sums: [u64; 3],
    pub pixels: u64,
}

impl ColorSums {
    pub fn of(img: &Image) -> Self {
        let mut sums = [0u64; 3];
        for px in img.data().chunks_exact(3) {
            for ch in 0..3 {
                sums[ch] += px[ch] as u64;
            }
        }
        Self {
            sums,
            pixels: img.pixel_count() as u64,
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            sums: [
                self.sums[0] + other.sums[0],
                self.sums[1] + other.sums[1],
                self.sums[2] + other.sums[2],
            ],
            pixels: self.pixels + other.pixels,
        }
    }

    pub fn mean(&self) -> Option<[f64; 3]> {
        (self.pixels > 0).then(|| self.sums.map(|s| s as f64 / self.pixels as f64))
    }
}

pub fn mean_color_of(images: &[Image]) -> Result<[f64; 3]> {
    images
        .par_iter()
        .map(ColorSums::of)
        .reduce(ColorSums::default, ColorSums::merge)
        .mean()
        .ok_or(Error::EmptyManifest)
}

/// Mean RGB over every pixel of every image; pixels weigh equally regardless
/// of which image they belong to.
pub fn dataset_mean_color(manifest: &Manifest) -> Result<[f64; 3]> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    manifest
        .paths()
        .par_iter()
        .map(|p| Image::load(p).map(|img| ColorSums::of(&img)))
        .try_reduce(ColorSums::default, |a, b| Ok(a.merge(b)))?
        .mean()
        .ok_or(Error::EmptyManifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn manifest_skips_comments_and_resolves_relative() {
        let m = Manifest::parse("# header\na.png\n\n/abs/b.png\n", Path::new("/data")).unwrap();
        assert_eq!(m.paths(), &[PathBuf::from("/data/a.png"), PathBuf::from("/abs/b.png")]);
    }

    #[test]
    fn manifest_rejects_duplicates() {
        assert!(Manifest::parse("a.png\na.png\n", Path::new(".")).is_err());
    }

    #[test]
    fn uniform_image_mean() {
        let img = Image::filled(3, 4, [10, 20, 30]).unwrap();
        assert_eq!(mean_color_of(&[img]).unwrap(), [10.0, 20.0, 30.0]);
    }

    #[test]
    fn two_point_mean() {
        let img = Image::new(1, 2, vec![0, 0, 0, 255, 255, 255]).unwrap();
        assert_eq!(mean_color_of(&[img]).unwrap(), [127.5, 127.5, 127.5]);
    }

    #[test]
    fn empty_manifest_is_error() {
        let m = Manifest::new(vec![]).unwrap();
        assert!(matches!(dataset_mean_color(&m), Err(Error::EmptyManifest)));
    }

    #[test]
    fn mean_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.ppm");
        Image::filled(1, 1, [0, 0, 0]).unwrap().save_png(&a).unwrap();
        Image::filled(1, 3, [100, 100, 100]).unwrap().save_ppm(&b).unwrap();
        let m = Manifest::new(vec![a, b]).unwrap();
        assert_eq!(dataset_mean_color(&m).unwrap(), [75.0, 75.0, 75.0]);
    }

    proptest! {
        #[test]
        fn mean_invariant_to_order_and_splitting(
            h in 2usize..6, w in 1usize..6, seed in any::<u64>(), split in 1usize..5
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = Image::from_fn(h, w, |_, _| rng.gen()).unwrap();
            let other = Image::from_fn(3, 2, |_, _| rng.gen()).unwrap();
            let split = split.min(h - 1);
            let top = Image::new(split, w, img.data()[..split * w * 3].to_vec()).unwrap();
            let bottom = Image::new(h - split, w, img.data()[split * w * 3..].to_vec()).unwrap();
            let whole = mean_color_of(&[img.clone(), other.clone()]).unwrap();
            prop_assert_eq!(whole, mean_color_of(&[other.clone(), img]).unwrap());
            prop_assert_eq!(whole, mean_color_of(&[top, other, bottom]).unwrap());
        }
    }
}
