//! C ABI over the segdiscover library.
//!
//! Every fallible call returns an [`SdStatus`]; on failure the message is
//! kept per thread and read with [`sd_last_error`]. Handles are opaque and
//! released with their matching `*_free` function, which accepts null.
//! Panics never cross the boundary; they surface as `SD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use segdiscover::clustering::{ocra, OcraParams, OcraResult};
use segdiscover::config::Config;
use segdiscover::dataset::Manifest;
use segdiscover::embedding::{read_embeddings, EmbeddingMatrix};
use segdiscover::eval::{confusion, hungarian_match, majority_match, metrics, MetricsReport};
use segdiscover::image::{Image, LabelMap};
use segdiscover::pipeline::Run;
use segdiscover::refine::RefinerModel;
use segdiscover::superpixel::{dynamic_min_size, felzenszwalb_segment, FelzParams};
use segdiscover::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    Diverged = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdMatching {
    Majority = 0,
    Hungarian = 1,
}

/// Summary scores of one evaluation.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SdMetrics {
    pub miou: f64,
    pub wiou: f64,
    pub pacc: f64,
}

impl From<&MetricsReport> for SdMetrics {
    fn from(r: &MetricsReport) -> Self {
        Self {
            miou: r.miou,
            wiou: r.wiou,
            pacc: r.pacc,
        }
    }
}

/// Embedding rows keyed by `(image_id, primitive_id)`.
pub struct SdEmbeddings {
    inner: EmbeddingMatrix,
}

/// Overcluster and concept label per embedding row.
pub struct SdClustering {
    inner: OcraResult,
}

/// A trained refiner.
pub struct SdRefiner {
    inner: RefinerModel,
}

/// A working directory with its configuration.
pub struct SdRun {
    inner: Run,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(SdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => SdStatus::Io,
            Error::Decode { .. }
            | Error::UnsupportedBitDepth { .. }
            | Error::UnsupportedColorType { .. }
            | Error::Manifest { .. }
            | Error::BadMagic(_)
            | Error::VersionMismatch { .. }
            | Error::Truncated { .. }
            | Error::DuplicateKey(..)
            | Error::UnsortedKeys(..) => SdStatus::Format,
            Error::DimensionMismatch(_) => SdStatus::DimensionMismatch,
            Error::Diverged(_) => SdStatus::Diverged,
            _ => SdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SdStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SdStatus {
    let (status, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (SdStatus::Ok, String::new()),
        Ok(Err(Failure(s, m))) => (s, m),
        Err(payload) => {
            let m = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            (SdStatus::Panic, m)
        }
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
    status
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(SdStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string that outlives the call.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not UTF-8")))
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    str_arg(p, name).map(PathBuf::from)
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn optional_path(p: *const c_char, name: &str) -> Result<Option<PathBuf>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        path_arg(p, name).map(Some)
    }
}

/// # Safety
/// `p` points to `len` readable values.
unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` points to `len` writable values.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn pixel_count(height: usize, width: usize) -> Result<usize, Failure> {
    height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(3).map(|_| n))
        .ok_or_else(|| invalid("image dimensions overflow"))
}

/// # Safety
/// `rgb` holds `height * width * 3` bytes.
unsafe fn image_arg(rgb: *const u8, height: usize, width: usize) -> Result<Image, Failure> {
    let n = pixel_count(height, width)?;
    let data = slice(rgb, n * 3, "rgb")?.to_vec();
    Ok(Image::new(height, width, data)?)
}

fn into_handle<T>(value: T, out: *mut *mut T) {
    // SAFETY: callers check `out` for null before building the value.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `capacity`. Returns the length the
/// full message needs including its terminator; 1 means no error.
///
/// # Safety
/// `buf` is null or points to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sd_last_error(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && capacity > 0 {
            let n = msg.len().min(capacity - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Minimum segment size for an image of the given size.
#[no_mangle]
pub extern "C" fn sd_dynamic_min_size(height: usize, width: usize) -> usize {
    dynamic_min_size(height, width)
}

/// Segments an interleaved RGB image into superpixels. Writes one label
/// per pixel to `labels_out` and the segment count to `count_out`.
///
/// # Safety
/// `rgb` holds `height * width * 3` bytes, `labels_out` has room for
/// `height * width` values, `count_out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sd_felzenszwalb(
    rgb: *const u8,
    height: usize,
    width: usize,
    scale: f64,
    sigma: f64,
    min_size: usize,
    labels_out: *mut u32,
    count_out: *mut usize,
) -> SdStatus {
    guard(|| {
        non_null(count_out, "count_out")?;
        let img = image_arg(rgb, height, width)?;
        let out = slice_mut(labels_out, height * width, "labels_out")?;
        let seg = felzenszwalb_segment(&img, &FelzParams::new(scale, sigma, min_size)?);
        out.copy_from_slice(seg.labels());
        *count_out = seg.label_count();
        Ok(())
    })
}

/// Reads an embedding file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sd_embeddings_read(path: *const c_char, out: *mut *mut SdEmbeddings) -> SdStatus {
    guard(|| {
        non_null(out, "out")?;
        let inner = read_embeddings(path_arg(path, "path")?)?;
        into_handle(SdEmbeddings { inner }, out);
        Ok(())
    })
}

/// Builds embeddings from `rows` keys and a row-major `rows × dim` matrix.
///
/// # Safety
/// `image_ids` and `primitive_ids` hold `rows` values, `data` holds
/// `rows * dim` values, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sd_embeddings_new(
    rows: usize,
    dim: usize,
    image_ids: *const u32,
    primitive_ids: *const u32,
    data: *const f32,
    out: *mut *mut SdEmbeddings,
) -> SdStatus {
    guard(|| {
        non_null(out, "out")?;
        let total = rows.checked_mul(dim).ok_or_else(|| invalid("rows × dim overflows"))?;
        let images = slice(image_ids, rows, "image_ids")?;
        let prims = slice(primitive_ids, rows, "primitive_ids")?;
        let data = slice(data, total, "data")?;
        let rows = (0..rows)
            .map(|i| ((images[i], prims[i]), data[i * dim..(i + 1) * dim].to_vec()))
            .collect();
        let inner = EmbeddingMatrix::from_rows(dim, rows)?;
        into_handle(SdEmbeddings { inner }, out);
        Ok(())
    })
}

/// Number of rows; 0 for null.
///
/// # Safety
/// `emb` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_embeddings_len(emb: *const SdEmbeddings) -> usize {
    emb.as_ref().map_or(0, |e| e.inner.len())
}

/// Row dimension; 0 for null.
///
/// # Safety
/// `emb` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_embeddings_dim(emb: *const SdEmbeddings) -> usize {
    emb.as_ref().map_or(0, |e| e.inner.dim())
}

/// # Safety
/// `emb` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_embeddings_free(emb: *mut SdEmbeddings) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Overclusters to `k` groups and reassigns them to `c` concepts. Rows are
/// labeled in key order. A `spectral_sigma` of 0 selects the default.
///
/// # Safety
/// `emb` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sd_ocra(
    emb: *const SdEmbeddings,
    k: usize,
    c: usize,
    spectral_sigma: f64,
    seed: u64,
    out: *mut *mut SdClustering,
) -> SdStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(emb, "emb")?;
        let mut params = OcraParams::new(k, c, seed);
        if spectral_sigma != 0.0 {
            params.spectral_sigma = spectral_sigma;
        }
        let inner = ocra(&(*emb).inner, &params)?;
        into_handle(SdClustering { inner }, out);
        Ok(())
    })
}

/// Number of labeled rows; 0 for null.
///
/// # Safety
/// `res` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_clustering_len(res: *const SdClustering) -> usize {
    res.as_ref().map_or(0, |r| r.inner.concepts.len())
}

/// Copies concept labels, one per row, into `out`.
///
/// # Safety
/// `res` is a live handle; `out` has room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn sd_clustering_concepts(res: *const SdClustering, out: *mut u32, len: usize) -> SdStatus {
    guard(|| {
        non_null(res, "res")?;
        copy_labels(&(*res).inner.concepts, out, len)
    })
}

/// Copies overcluster labels, one per row, into `out`.
///
/// # Safety
/// `res` is a live handle; `out` has room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn sd_clustering_overclusters(res: *const SdClustering, out: *mut u32, len: usize) -> SdStatus {
    guard(|| {
        non_null(res, "res")?;
        copy_labels(&(*res).inner.overclusters, out, len)
    })
}

unsafe fn copy_labels(src: &[u32], out: *mut u32, len: usize) -> Result<(), Failure> {
    if len != src.len() {
        return Err(Failure(
            SdStatus::DimensionMismatch,
            format!("buffer holds {len} labels, result has {}", src.len()),
        ));
    }
    slice_mut(out, len, "out")?.copy_from_slice(src);
    Ok(())
}

/// # Safety
/// `res` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_clustering_free(res: *mut SdClustering) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Loads a trained refiner.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sd_refiner_load(path: *const c_char, out: *mut *mut SdRefiner) -> SdStatus {
    guard(|| {
        non_null(out, "out")?;
        let inner = RefinerModel::load(path_arg(path, "path")?)?;
        into_handle(SdRefiner { inner }, out);
        Ok(())
    })
}

/// Concept count; 0 for null.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_refiner_concepts(model: *const SdRefiner) -> usize {
    model.as_ref().map_or(0, |m| m.inner.concepts())
}

/// Predicts one concept label per pixel of an interleaved RGB image.
///
/// # Safety
/// `model` is a live handle, `rgb` holds `height * width * 3` bytes,
/// `labels_out` has room for `height * width` values.
#[no_mangle]
pub unsafe extern "C" fn sd_refiner_predict(
    model: *const SdRefiner,
    rgb: *const u8,
    height: usize,
    width: usize,
    labels_out: *mut u32,
) -> SdStatus {
    guard(|| {
        non_null(model, "model")?;
        let img = image_arg(rgb, height, width)?;
        let out = slice_mut(labels_out, height * width, "labels_out")?;
        out.copy_from_slice((*model).inner.predict(&img).labels.labels());
        Ok(())
    })
}

/// # Safety
/// `model` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_refiner_free(model: *mut SdRefiner) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Scores `pixels` predicted labels in `0..groups` against ground truth in
/// `0..classes`; ground-truth pixels equal to 65535 are ignored.
///
/// # Safety
/// `pred` and `gt` hold `pixels` values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sd_evaluate(
    pred: *const u32,
    gt: *const u32,
    pixels: usize,
    groups: usize,
    classes: usize,
    matching: SdMatching,
    out: *mut SdMetrics,
) -> SdStatus {
    guard(|| {
        non_null(out, "out")?;
        let pred = LabelMap::new(1, pixels, slice(pred, pixels, "pred")?.to_vec())?;
        let gt = LabelMap::new(1, pixels, slice(gt, pixels, "gt")?.to_vec())?;
        let cm = confusion(&pred, &gt, groups, classes)?;
        let m = match matching {
            SdMatching::Majority => majority_match(&cm),
            SdMatching::Hungarian => hungarian_match(&cm),
        };
        *out = SdMetrics::from(&metrics(&cm, &m)?);
        Ok(())
    })
}

/// Opens a working directory. `config_path` may be null for defaults or the
/// directory's saved configuration.
///
/// # Safety
/// `workdir` is a NUL-terminated string, `config_path` is null or one,
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sd_run_open(
    workdir: *const c_char,
    config_path: *const c_char,
    out: *mut *mut SdRun,
) -> SdStatus {
    guard(|| {
        non_null(out, "out")?;
        let workdir = path_arg(workdir, "workdir")?;
        let config = optional_path(config_path, "config_path")?;
        let cfg = segdiscover::pipeline::resolve_config(&workdir, config.as_deref(), &[])?;
        let inner = Run::open(workdir, cfg)?;
        into_handle(SdRun { inner }, out);
        Ok(())
    })
}

/// Opens a working directory with the default configuration overridden by
/// `count` key/value pairs, for callers without a config file.
///
/// # Safety
/// `workdir` is a NUL-terminated string; `keys` and `values` hold `count`
/// NUL-terminated strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sd_run_open_with(
    workdir: *const c_char,
    keys: *const *const c_char,
    values: *const *const c_char,
    count: usize,
    out: *mut *mut SdRun,
) -> SdStatus {
    guard(|| {
        non_null(out, "out")?;
        let workdir = path_arg(workdir, "workdir")?;
        let keys = slice(keys, count, "keys")?;
        let values = slice(values, count, "values")?;
        let mut cfg = Config::default();
        for (&k, &v) in keys.iter().zip(values) {
            cfg.set(str_arg(k, "key")?, str_arg(v, "value")?)?;
        }
        cfg.validate()?;
        let inner = Run::open(workdir, cfg)?;
        into_handle(SdRun { inner }, out);
        Ok(())
    })
}

/// Runs every stage on the images of `manifest`. With a ground-truth
/// manifest, writes refined and unrefined scores under majority matching
/// to `refined_out` and `unrefined_out`, which may then not be null.
///
/// # Safety
/// `run` is a live handle; `manifest` is a NUL-terminated string;
/// `gt_manifest` is null or one; the outputs are null or writable.
#[no_mangle]
pub unsafe extern "C" fn sd_run_pipeline(
    run: *const SdRun,
    manifest: *const c_char,
    gt_manifest: *const c_char,
    refined_out: *mut SdMetrics,
    unrefined_out: *mut SdMetrics,
) -> SdStatus {
    guard(|| {
        non_null(run, "run")?;
        let manifest = Manifest::load(path_arg(manifest, "manifest")?)?;
        let gt = optional_path(gt_manifest, "gt_manifest")?
            .map(Manifest::load)
            .transpose()?;
        if gt.is_some() {
            non_null(refined_out, "refined_out")?;
            non_null(unrefined_out, "unrefined_out")?;
        }
        let run = &(*run).inner;
        let reports = run.pipeline(&manifest, gt.as_ref(), segdiscover::eval::MatchKind::Majority)?;
        if let Some((refined, unrefined)) = reports {
            *refined_out = SdMetrics::from(&refined);
            *unrefined_out = SdMetrics::from(&unrefined);
        }
        Ok(())
    })
}

/// # Safety
/// `run` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_run_free(run: *mut SdRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
