//! Pipeline configuration as a flat `key = value` file.
//!
//! Defaults are the reference hyperparameters (COCO-Stuff settings). Every
//! field can be overridden from a file or from the command line, and the
//! resolved configuration is written back verbatim as a run snapshot.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinSize {
    Auto,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EmbeddingSource {
    Builtin,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub scale: f64,
    pub sigma: f64,
    pub min_size: MinSize,
    pub merge_hue_threshold: f64,
    pub merge_area_factor: f64,
    pub merge_p_ratio: f64,
    pub crop_size: usize,
    pub embeddings: EmbeddingSource,
    pub normalize_embeddings: bool,
    pub k: usize,
    pub c: usize,
    pub spectral_sigma: f64,
    pub batch_size: usize,
    pub max_iter: usize,
    pub patience: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub pixels_per_step: usize,
    pub augment_crop: bool,
    pub augment_flip: bool,
    pub augment_saturation: bool,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scale: 1000.0,
            sigma: 0.3,
            min_size: MinSize::Auto,
            merge_hue_threshold: 40.0,
            merge_area_factor: 0.001,
            merge_p_ratio: 9.0,
            crop_size: 64,
            embeddings: EmbeddingSource::Builtin,
            normalize_embeddings: false,
            k: 200,
            c: 27,
            spectral_sigma: 1e-5,
            batch_size: 1000,
            max_iter: 10_000,
            patience: 100,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 30,
            pixels_per_step: 4096,
            augment_crop: true,
            augment_flip: true,
            augment_saturation: true,
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

impl Config {
    pub const KEYS: &'static [&'static str] = &[
        "scale",
        "sigma",
        "min_size",
        "merge_hue_threshold",
        "merge_area_factor",
        "merge_p_ratio",
        "crop_size",
        "embeddings",
        "normalize_embeddings",
        "k",
        "c",
        "spectral_sigma",
        "batch_size",
        "max_iter",
        "patience",
        "lr",
        "momentum",
        "weight_decay",
        "epochs",
        "pixels_per_step",
        "augment_crop",
        "augment_flip",
        "augment_saturation",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "scale" => self.scale = parse_num(key, value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "min_size" => {
                self.min_size = if value == "auto" {
                    MinSize::Auto
                } else {
                    MinSize::Fixed(parse_num(key, value)?)
                }
            }
            "merge_hue_threshold" => self.merge_hue_threshold = parse_num(key, value)?,
            "merge_area_factor" => self.merge_area_factor = parse_num(key, value)?,
            "merge_p_ratio" => self.merge_p_ratio = parse_num(key, value)?,
            "crop_size" => self.crop_size = parse_num(key, value)?,
            "embeddings" => {
                self.embeddings = if value == "builtin" {
                    EmbeddingSource::Builtin
                } else {
                    EmbeddingSource::File(PathBuf::from(value))
                }
            }
            "normalize_embeddings" => self.normalize_embeddings = parse_bool(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "c" => self.c = parse_num(key, value)?,
            "spectral_sigma" => self.spectral_sigma = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "max_iter" => self.max_iter = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "momentum" => self.momentum = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "pixels_per_step" => self.pixels_per_step = parse_num(key, value)?,
            "augment_crop" => self.augment_crop = parse_bool(key, value)?,
            "augment_flip" => self.augment_flip = parse_bool(key, value)?,
            "augment_saturation" => self.augment_saturation = parse_bool(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. A key given twice in the
    /// same file is a conflict.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: `{key}` set more than once",
                    lineno + 1
                )));
            }
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let min_size = match self.min_size {
            MinSize::Auto => "auto".to_string(),
            MinSize::Fixed(n) => n.to_string(),
        };
        let embeddings = match &self.embeddings {
            EmbeddingSource::Builtin => "builtin".to_string(),
            EmbeddingSource::File(p) => p.to_string_lossy().into_owned(),
        };
        let values: [(&str, String); 24] = [
            ("scale", self.scale.to_string()),
            ("sigma", self.sigma.to_string()),
            ("min_size", min_size),
            ("merge_hue_threshold", self.merge_hue_threshold.to_string()),
            ("merge_area_factor", self.merge_area_factor.to_string()),
            ("merge_p_ratio", self.merge_p_ratio.to_string()),
            ("crop_size", self.crop_size.to_string()),
            ("embeddings", embeddings),
            ("normalize_embeddings", self.normalize_embeddings.to_string()),
            ("k", self.k.to_string()),
            ("c", self.c.to_string()),
            ("spectral_sigma", self.spectral_sigma.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("max_iter", self.max_iter.to_string()),
            ("patience", self.patience.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("pixels_per_step", self.pixels_per_step.to_string()),
            ("augment_crop", self.augment_crop.to_string()),
            ("augment_flip", self.augment_flip.to_string()),
            ("augment_saturation", self.augment_saturation.to_string()),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.scale > 0.0) {
            return fail(format!("scale must be > 0, got {}", self.scale));
        }
        if !(self.sigma >= 0.0) {
            return fail(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if self.min_size == MinSize::Fixed(0) {
            return fail("min_size must be >= 1".into());
        }
        if self.c == 0 || self.k < self.c {
            return fail(format!("need k >= c >= 1, got k = {}, c = {}", self.k, self.c));
        }
        if self.k > 1000 {
            return fail(format!(
                "k must be <= 1000 for dense eigendecomposition, got {}",
                self.k
            ));
        }
        if self.crop_size == 0 || self.batch_size == 0 || self.pixels_per_step == 0 {
            return fail("crop_size, batch_size and pixels_per_step must be >= 1".into());
        }
        if !(self.spectral_sigma > 0.0) {
            return fail(format!("spectral_sigma must be > 0, got {}", self.spectral_sigma));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return fail("need lr > 0, 0 <= momentum < 1, weight_decay >= 0".into());
        }
        Ok(())
    }
}
