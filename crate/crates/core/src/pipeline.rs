//! File-backed pipeline stages over a working directory.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.txt              resolved configuration snapshot
//! manifest.txt            image manifest with absolute paths
//! primitives/NNNNNN.png   merged primitive maps (16-bit labels)
//! merge_log.txt           image_id source_id -> target_id
//! crops/I_P.png           primitive crops
//! crops.txt               image_id primitive_id crop_path
//! embeddings.sgde         one row per primitive
//! kmeans.sgde             overcluster centers
//! assignments.txt         image_id primitive_id overcluster_id concept_id
//! pseudolabels/NNNNNN.png concept maps from the assignments
//! refiner.sgdr, loss.csv  trained refiner and its loss trace
//! predictions/NNNNNN.png  refined concept maps
//! metrics*.csv/.txt       evaluation against ground truth
//! diagnostic.txt          Hungarian assignments lacking a majority
//! viz/                    color renderings
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::clustering::{ocra, OcraParams};
use crate::config::{Config, EmbeddingSource, MinSize};
use crate::dataset::{dataset_mean_color, Manifest};
use crate::embedding::{embed_builtin, read_embeddings, write_embeddings, EmbeddingMatrix, Key, BUILTIN_DIM};
use crate::error::{Error, Result};
use crate::eval::{
    diagnostic_text, hungarian_match, majority_diagnostic, majority_match, metrics, ConfusionMatrix, MatchKind,
    MetricsReport,
};
use crate::image::{rgb_to_hsv, Image, LabelMap};
use crate::primitives::{build_adjacency, extract_crop, merge_primitives, shape_stats, MergeOutcome, MergeParams};
use crate::refine::{assemble_pseudolabels, train_refiner, RefinerModel, TrainOutcome, TrainParams, TrainingPair};
use crate::superpixel::{dynamic_min_size, felzenszwalb_segment, FelzParams};
use crate::viz;

pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const PRIMITIVES_DIR: &str = "primitives";
pub const MERGE_LOG_FILE: &str = "merge_log.txt";
pub const CROPS_DIR: &str = "crops";
pub const CROPS_FILE: &str = "crops.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.sgde";
pub const KMEANS_FILE: &str = "kmeans.sgde";
pub const ASSIGNMENTS_FILE: &str = "assignments.txt";
pub const PSEUDOLABELS_DIR: &str = "pseudolabels";
pub const MODEL_FILE: &str = "refiner.sgdr";
pub const LOSS_FILE: &str = "loss.csv";
pub const PREDICTIONS_DIR: &str = "predictions";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.txt";
pub const VIZ_DIR: &str = "viz";

/// Which label maps to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSource {
    /// Refiner output.
    Predictions,
    /// Cluster labels before refinement.
    Pseudolabels,
}

impl EvalSource {
    fn dir(self) -> &'static str {
        match self {
            EvalSource::Predictions => PREDICTIONS_DIR,
            EvalSource::Pseudolabels => PSEUDOLABELS_DIR,
        }
    }

    /// Base name of the metrics files.
    pub fn metrics_stem(self) -> &'static str {
        match self {
            EvalSource::Predictions => "metrics",
            EvalSource::Pseudolabels => "metrics_pseudolabels",
        }
    }
}

fn stage_err(stage: &'static str, path: &Path, message: impl Into<String>) -> Error {
    Error::Stage {
        stage,
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn require(stage: &'static str, path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(stage_err(stage, path, format!("{what} not found")))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn map_name(image_id: u32) -> String {
    format!("{image_id:06}.png")
}

/// Wraps an error from reading `path` with the stage that needed it.
fn in_stage<T>(stage: &'static str, path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => stage_err(stage, path, e.to_string()),
    })
}

/// Resolves the configuration for a run: the explicit file if given, else
/// the run's snapshot if present, else defaults; then `overrides`. If the
/// run already has a snapshot, the result must equal it.
pub fn resolve_config(workdir: &Path, file: Option<&Path>, overrides: &[(&str, String)]) -> Result<Config> {
    let snapshot = workdir.join(CONFIG_FILE);
    let mut cfg = match file {
        Some(p) => Config::load(p)?,
        None if snapshot.exists() => Config::load(&snapshot)?,
        None => Config::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run-level primitives for one image: Felzenszwalb segmentation followed by
/// one merging pass.
pub fn image_primitives(img: &Image, cfg: &Config) -> Result<MergeOutcome> {
    let (h, w) = img.dims();
    let min_size = match cfg.min_size {
        MinSize::Auto => dynamic_min_size(h, w),
        MinSize::Fixed(n) => n,
    };
    let seg = felzenszwalb_segment(img, &FelzParams::new(cfg.scale, cfg.sigma, min_size)?);
    let stats = shape_stats(&seg, &rgb_to_hsv(img))?;
    let adjacency = build_adjacency(&seg)?;
    let params = MergeParams {
        hue_threshold: cfg.merge_hue_threshold,
        area_factor: cfg.merge_area_factor,
        p_ratio_threshold: cfg.merge_p_ratio,
    };
    merge_primitives(&seg, &stats, &adjacency, h * w, &params)
}

/// One row of `assignments.txt`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub image: u32,
    pub primitive: u32,
    pub overcluster: u32,
    pub concept: u32,
}

pub fn parse_assignments(text: &str, origin: &Path) -> Result<Vec<Assignment>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<u32> = line
            .split_whitespace()
            .map(|f| f.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Manifest {
                path: origin.to_path_buf(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
        let [image, primitive, overcluster, concept] = fields[..] else {
            return Err(Error::Manifest {
                path: origin.to_path_buf(),
                line: lineno + 1,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        };
        out.push(Assignment {
            image,
            primitive,
            overcluster,
            concept,
        });
    }
    Ok(out)
}

/// One row of `crops.txt`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CropEntry {
    pub key: Key,
    pub path: PathBuf,
}

pub fn parse_crop_manifest(text: &str, base: &Path, origin: &Path) -> Result<Vec<CropEntry>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Manifest {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let mut parts = line.splitn(3, char::is_whitespace);
        let (Some(i), Some(p), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad("expected `image_id primitive_id path`".into()));
        };
        let i = i.parse::<u32>().map_err(|e| bad(e.to_string()))?;
        let p = p.parse::<u32>().map_err(|e| bad(e.to_string()))?;
        out.push(CropEntry {
            key: (i, p),
            path: base.join(path.trim()),
        });
    }
    Ok(out)
}

/// A working directory bound to one resolved configuration.
#[derive(Clone, Debug)]
pub struct Run {
    pub workdir: PathBuf,
    pub config: Config,
}

impl Run {
    /// Creates the directory if needed and writes the configuration
    /// snapshot, or checks it against an existing one.
    pub fn open(workdir: impl Into<PathBuf>, config: Config) -> Result<Self> {
        let workdir = workdir.into();
        create_dir(&workdir)?;
        config.validate()?;
        let snapshot = workdir.join(CONFIG_FILE);
        let text = config.to_text();
        if snapshot.exists() {
            let existing = Config::load(&snapshot)?;
            if existing != config {
                return Err(stage_err(
                    "config",
                    &snapshot,
                    "configuration differs from this run's snapshot; use a fresh working directory",
                ));
            }
        } else {
            write_text(&snapshot, &text)?;
        }
        Ok(Self { workdir, config })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.workdir.join(name)
    }

    /// The run's manifest copy, or `explicit` when given.
    pub fn manifest(&self, stage: &'static str, explicit: Option<&Path>) -> Result<Manifest> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => self.path(MANIFEST_FILE),
        };
        require(stage, &path, "manifest")?;
        let m = in_stage(stage, &path, Manifest::load(&path))?;
        if m.is_empty() {
            return Err(stage_err(stage, &path, "manifest is empty"));
        }
        Ok(m)
    }

    fn load_images(&self, stage: &'static str, manifest: &Manifest) -> Result<Vec<Image>> {
        manifest
            .paths()
            .par_iter()
            .map(|p| {
                require(stage, p, "image")?;
                in_stage(stage, p, Image::load(p))
            })
            .collect()
    }

    fn load_maps(&self, stage: &'static str, dir: &str, count: usize, what: &str) -> Result<Vec<LabelMap>> {
        let dir = self.path(dir);
        (0..count as u32)
            .into_par_iter()
            .map(|i| {
                let p = dir.join(map_name(i));
                require(stage, &p, what)?;
                in_stage(stage, &p, LabelMap::load(&p))
            })
            .collect()
    }

    /// Segments and merges every image; writes the manifest copy, the
    /// primitive maps and the merge log.
    pub fn primitives(&self, manifest: &Manifest) -> Result<()> {
        const STAGE: &str = "primitives";
        if manifest.is_empty() {
            return Err(Error::EmptyManifest);
        }
        let absolute: Vec<PathBuf> = manifest
            .paths()
            .iter()
            .map(|p| {
                require(STAGE, p, "image")?;
                std::fs::canonicalize(p).map_err(|e| Error::io(p, e))
            })
            .collect::<Result<_>>()?;
        Manifest::new(absolute)?.save(self.path(MANIFEST_FILE))?;
        let dir = self.path(PRIMITIVES_DIR);
        create_dir(&dir)?;
        let outcomes: Vec<MergeOutcome> = manifest
            .iter()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(id, p)| {
                let img = in_stage(STAGE, p, Image::load(p))?;
                let out = in_stage(STAGE, p, image_primitives(&img, &self.config))?;
                out.map.save_png(dir.join(map_name(id)))?;
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut log = String::from("# image_id source_id -> target_id\n");
        let mut total = 0;
        for (id, out) in outcomes.iter().enumerate() {
            total += out.map.label_count();
            for m in &out.log {
                let _ = writeln!(log, "{id} {} -> {}", m.source, m.target);
            }
        }
        write_text(&self.path(MERGE_LOG_FILE), &log)?;
        log::info!(
            "primitives: {} images, {total} primitives after merging",
            outcomes.len()
        );
        Ok(())
    }

    /// Writes one mean-color-filled crop per primitive and the crop manifest.
    pub fn crops(&self, manifest: &Manifest) -> Result<()> {
        const STAGE: &str = "crops";
        let maps = self.load_maps(STAGE, PRIMITIVES_DIR, manifest.len(), "primitive map")?;
        let mean = in_stage(STAGE, &self.path(MANIFEST_FILE), dataset_mean_color(manifest))?;
        let dir = self.path(CROPS_DIR);
        create_dir(&dir)?;
        let size = self.config.crop_size;
        let rows: Vec<Vec<String>> = manifest
            .paths()
            .par_iter()
            .zip(maps.par_iter())
            .enumerate()
            .map(|(id, (p, map))| {
                let img = in_stage(STAGE, p, Image::load(p))?;
                if img.dims() != map.dims() {
                    return Err(stage_err(STAGE, p, "image and primitive map sizes differ"));
                }
                (0..map.label_count() as u32)
                    .map(|prim| {
                        let name = format!("{id}_{prim}.png");
                        extract_crop(&img, map, prim, mean, size)?.save_png(dir.join(&name))?;
                        Ok(format!("{id} {prim} {CROPS_DIR}/{name}"))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let mut text = String::from("# image_id primitive_id crop_path\n");
        for line in rows.iter().flatten() {
            text.push_str(line);
            text.push('\n');
        }
        write_text(&self.path(CROPS_FILE), &text)?;
        log::info!(
            "crops: {} crops, fill color {mean:?}",
            rows.iter().map(Vec::len).sum::<usize>()
        );
        Ok(())
    }

    fn crop_entries(&self, stage: &'static str) -> Result<Vec<CropEntry>> {
        let path = self.path(CROPS_FILE);
        require(stage, &path, "crop manifest")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        parse_crop_manifest(&text, &self.workdir, &path)
    }

    /// Builds `embeddings.sgde` from the crops with the built-in descriptor,
    /// or validates and copies an external embedding file.
    pub fn embed(&self) -> Result<()> {
        const STAGE: &str = "embed";
        let entries = self.crop_entries(STAGE)?;
        let out = self.path(EMBEDDINGS_FILE);
        let matrix = match &self.config.embeddings {
            EmbeddingSource::Builtin => {
                let rows = entries
                    .par_iter()
                    .map(|e| {
                        require(STAGE, &e.path, "crop")?;
                        let crop = in_stage(STAGE, &e.path, Image::load(&e.path))?;
                        Ok((e.key, embed_builtin(&crop)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                EmbeddingMatrix::from_rows(BUILTIN_DIM, rows)?
            }
            EmbeddingSource::File(p) => {
                require(STAGE, p, "embedding file")?;
                let m = in_stage(STAGE, p, read_embeddings(p))?;
                let mut expected: Vec<Key> = entries.iter().map(|e| e.key).collect();
                expected.sort_unstable();
                if m.keys() != expected {
                    return Err(stage_err(STAGE, p, "embedding keys do not match the crop manifest"));
                }
                m
            }
        };
        write_embeddings(&matrix, &out)?;
        log::info!("embed: {} rows of dimension {}", matrix.len(), matrix.dim());
        Ok(())
    }

    /// Runs OC-RA and writes the centers and per-primitive assignments.
    pub fn cluster(&self) -> Result<()> {
        const STAGE: &str = "cluster";
        let path = self.path(EMBEDDINGS_FILE);
        require(STAGE, &path, "embedding file")?;
        let x = in_stage(STAGE, &path, read_embeddings(&path))?;
        let cfg = &self.config;
        let params = OcraParams {
            k: cfg.k,
            c: cfg.c,
            batch_size: cfg.batch_size,
            max_iter: cfg.max_iter,
            patience: cfg.patience,
            spectral_sigma: cfg.spectral_sigma,
            seed: cfg.seed,
            normalize: cfg.normalize_embeddings,
        };
        let res = in_stage(STAGE, &path, ocra(&x, &params))?;
        write_embeddings(&res.kmeans.model.to_embeddings()?, self.path(KMEANS_FILE))?;
        let mut text = String::from("# image_id primitive_id overcluster_id concept_id\n");
        for ((key, o), c) in res.keys.iter().zip(&res.overclusters).zip(&res.concepts) {
            let _ = writeln!(text, "{} {} {o} {c}", key.0, key.1);
        }
        write_text(&self.path(ASSIGNMENTS_FILE), &text)?;
        log::info!(
            "cluster: inertia {:.6}, concept sizes {:?}",
            res.kmeans.model.inertia,
            res.concept_sizes()
        );
        Ok(())
    }

    fn assignments(&self, stage: &'static str) -> Result<Vec<Assignment>> {
        let path = self.path(ASSIGNMENTS_FILE);
        require(stage, &path, "assignment file")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        parse_assignments(&text, &path)
    }

    /// Broadcasts concepts to pixels for every image.
    pub fn pseudolabel(&self, manifest: &Manifest) -> Result<()> {
        const STAGE: &str = "pseudolabel";
        let assignments = self.assignments(STAGE)?;
        let maps = self.load_maps(STAGE, PRIMITIVES_DIR, manifest.len(), "primitive map")?;
        let mut per_image: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); maps.len()];
        for a in &assignments {
            let slot = per_image.get_mut(a.image as usize).ok_or_else(|| {
                stage_err(
                    STAGE,
                    &self.path(ASSIGNMENTS_FILE),
                    format!("unknown image {}", a.image),
                )
            })?;
            slot.insert(a.primitive, a.concept);
        }
        let dir = self.path(PSEUDOLABELS_DIR);
        create_dir(&dir)?;
        maps.par_iter()
            .zip(per_image.par_iter())
            .enumerate()
            .try_for_each(|(id, (map, concepts))| {
                let out = dir.join(map_name(id as u32));
                let labels = in_stage(STAGE, &out, assemble_pseudolabels(map, concepts))?;
                labels.save_png(&out)
            })?;
        log::info!("pseudolabel: {} maps", maps.len());
        Ok(())
    }

    /// Trains the refiner on the pseudo-labels; writes the model and the
    /// loss trace.
    pub fn refine(&self, manifest: &Manifest) -> Result<TrainOutcome> {
        const STAGE: &str = "refine";
        let labels = self.load_maps(STAGE, PSEUDOLABELS_DIR, manifest.len(), "pseudo-label map")?;
        let images = self.load_images(STAGE, manifest)?;
        let pairs: Vec<TrainingPair> = images
            .into_iter()
            .zip(labels)
            .map(|(image, labels)| TrainingPair { image, labels })
            .collect();
        let outcome = in_stage(
            STAGE,
            &self.path(PSEUDOLABELS_DIR),
            train_refiner(&pairs, &TrainParams::from_config(&self.config)),
        )?;
        outcome.model.save(self.path(MODEL_FILE))?;
        write_text(&self.path(LOSS_FILE), &outcome.trace_csv())?;
        log::info!(
            "refine: loss {:.4} -> {:.4}",
            outcome.trace[0],
            outcome.trace.last().copied().unwrap_or(f64::NAN)
        );
        Ok(outcome)
    }

    /// Writes refined concept maps for every image.
    pub fn predict(&self, manifest: &Manifest) -> Result<()> {
        const STAGE: &str = "predict";
        let path = self.path(MODEL_FILE);
        require(STAGE, &path, "refiner model")?;
        let model = in_stage(STAGE, &path, RefinerModel::load(&path))?;
        let dir = self.path(PREDICTIONS_DIR);
        create_dir(&dir)?;
        manifest
            .iter()
            .collect::<Vec<_>>()
            .into_par_iter()
            .try_for_each(|(id, p)| {
                let img = in_stage(STAGE, p, Image::load(p))?;
                model.predict(&img).labels.save_png(dir.join(map_name(id)))
            })?;
        log::info!("predict: {} maps", manifest.len());
        Ok(())
    }

    /// Loads predicted maps, resizing each to its ground truth by nearest
    /// neighbor when sizes differ.
    fn predicted_for(&self, stage: &'static str, source: EvalSource, gt: &[LabelMap]) -> Result<Vec<LabelMap>> {
        let maps = self.load_maps(stage, source.dir(), gt.len(), "label map")?;
        Ok(maps
            .into_iter()
            .zip(gt)
            .map(|(m, g)| {
                if m.dims() == g.dims() {
                    m
                } else {
                    m.resize_nearest(g.height(), g.width())
                }
            })
            .collect())
    }

    fn load_gt(&self, stage: &'static str, gt_manifest: &Manifest, expected: usize) -> Result<Vec<LabelMap>> {
        if gt_manifest.len() != expected {
            return Err(stage_err(
                stage,
                gt_manifest.paths().first().map_or(Path::new(""), |p| p.as_path()),
                format!("{} ground-truth maps for {expected} images", gt_manifest.len()),
            ));
        }
        gt_manifest
            .paths()
            .par_iter()
            .map(|p| {
                require(stage, p, "ground-truth map")?;
                in_stage(stage, p, LabelMap::load(p))
            })
            .collect()
    }

    /// Dataset-wide confusion of `source` maps against ground truth, with
    /// `P = C` groups and `G` classes inferred from the ground truth.
    pub fn confusion(&self, gt_manifest: &Manifest, source: EvalSource) -> Result<ConfusionMatrix> {
        const STAGE: &str = "eval";
        let gt = self.load_gt(STAGE, gt_manifest, gt_manifest.len())?;
        let pred = self.predicted_for(STAGE, source, &gt)?;
        let g = gt.iter().map(LabelMap::label_count).max().unwrap_or(0).max(1);
        let p = self.config.c;
        let dir = self.path(source.dir());
        pred.par_iter()
            .zip(gt.par_iter())
            .enumerate()
            .map(|(id, (pm, gm))| {
                let mut cm = ConfusionMatrix::new(p, g);
                in_stage(STAGE, &dir.join(map_name(id as u32)), cm.accumulate(pm, gm))?;
                Ok(cm)
            })
            .try_reduce(|| ConfusionMatrix::new(p, g), |a, b| Ok(a.merge(&b)))
    }

    /// Scores `source` maps and writes `<stem>.csv`, `<stem>.txt` and the
    /// majority diagnostic of the Hungarian assignment.
    pub fn eval(&self, gt_manifest: &Manifest, source: EvalSource, kind: MatchKind) -> Result<MetricsReport> {
        const STAGE: &str = "eval";
        let cm = self.confusion(gt_manifest, source)?;
        let hungarian = hungarian_match(&cm);
        let matching = match kind {
            MatchKind::Majority => majority_match(&cm),
            MatchKind::Hungarian => hungarian.clone(),
        };
        let report = in_stage(STAGE, &self.path(source.dir()), metrics(&cm, &matching))?;
        let stem = source.metrics_stem();
        write_text(&self.path(&format!("{stem}.csv")), &report.to_csv())?;
        write_text(&self.path(&format!("{stem}.txt")), &report.to_table())?;
        if source == EvalSource::Predictions {
            let diag = diagnostic_text(&majority_diagnostic(&cm, &hungarian));
            write_text(&self.path(DIAGNOSTIC_FILE), &diag)?;
        }
        log::info!(
            "eval ({stem}): mIoU {:.4}, wIoU {:.4}, pAcc {:.4}",
            report.miou,
            report.wiou,
            report.pacc
        );
        Ok(report)
    }

    /// Renders predictions to `viz/NNNNNN.png`. With ground truth, groups
    /// take the colors of their majority-matched classes and the ground
    /// truth is rendered alongside as `viz/NNNNNN_gt.png`.
    pub fn viz(&self, manifest: &Manifest, gt_manifest: Option<&Manifest>) -> Result<()> {
        const STAGE: &str = "viz";
        let dir = self.path(VIZ_DIR);
        create_dir(&dir)?;
        match gt_manifest {
            None => {
                let maps = self.load_maps(STAGE, PREDICTIONS_DIR, manifest.len(), "prediction map")?;
                maps.par_iter()
                    .enumerate()
                    .try_for_each(|(id, m)| viz::render(m).save_png(dir.join(map_name(id as u32))))?;
            }
            Some(gtm) => {
                let gt = self.load_gt(STAGE, gtm, manifest.len())?;
                let pred = self.predicted_for(STAGE, EvalSource::Predictions, &gt)?;
                let cm = self.confusion(gtm, EvalSource::Predictions)?;
                let matching = majority_match(&cm);
                pred.par_iter()
                    .zip(gt.par_iter())
                    .enumerate()
                    .try_for_each(|(id, (p, g))| {
                        let id = id as u32;
                        viz::render_matched(p, &matching, cm.classes()).save_png(dir.join(map_name(id)))?;
                        viz::render(g).save_png(dir.join(format!("{id:06}_gt.png")))
                    })?;
            }
        }
        log::info!("viz: {} images", manifest.len());
        Ok(())
    }

    /// All stages in order; evaluation and matched rendering when ground
    /// truth is given. Returns the refined and unrefined reports.
    pub fn pipeline(
        &self,
        manifest: &Manifest,
        gt_manifest: Option<&Manifest>,
        kind: MatchKind,
    ) -> Result<Option<(MetricsReport, MetricsReport)>> {
        self.primitives(manifest)?;
        let manifest = self.manifest("pipeline", None)?;
        self.crops(&manifest)?;
        self.embed()?;
        self.cluster()?;
        self.pseudolabel(&manifest)?;
        self.refine(&manifest)?;
        self.predict(&manifest)?;
        let reports = match gt_manifest {
            Some(gt) => {
                let unrefined = self.eval(gt, EvalSource::Pseudolabels, kind)?;
                let refined = self.eval(gt, EvalSource::Predictions, kind)?;
                Some((refined, unrefined))
            }
            None => None,
        };
        self.viz(&manifest, gt_manifest)?;
        Ok(reports)
    }
}
