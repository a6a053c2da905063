//! C ABI over the projqa library.
//!
//! Objects cross the boundary as opaque handles created by `*_load` /
//! `*_from_*` functions and released with the matching `*_free`. Every
//! fallible call returns a [`ProjqaStatus`]; on failure the message is
//! available from [`projqa_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use projqa::evaluation;
use projqa::model_io::{Model, PointCloud};
use projqa::pipeline::{root_cause, score_model, PipelineConfig, Preset};
use projqa::projection::RenderConfig;
use projqa::sampling::{GridSpec, SamplingConfig};
use projqa::scoring::{load_weights, HeadWeights};
use projqa::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjqaStatus {
    Ok = 0,
    InvalidArgument = 1,
    Io = 2,
    Parse = 3,
    Unsupported = 4,
    InvalidModel = 5,
    EmptyProjection = 6,
    DimensionMismatch = 7,
    NonFinite = 8,
    ConstantInput = 9,
    Backend = 10,
    WeightsNotFound = 11,
    BufferTooSmall = 12,
    Panic = 13,
    Internal = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjqaPreset {
    Tiny = 0,
    Base = 1,
}

/// Pipeline settings. Obtain defaults from [`projqa_config_preset`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjqaConfig {
    pub n_projections: u32,
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub grid_patch: u32,
    pub viewport: u32,
    pub splat_radius: u32,
    pub padding: f64,
    pub seed: u64,
}

/// Opaque loaded model (point cloud or textured mesh).
pub struct ProjqaModel {
    inner: Model,
}

/// Opaque regression-head weights.
pub struct ProjqaHead {
    inner: HeadWeights,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ProjqaStatus {
    match e {
        Error::Io { .. } => ProjqaStatus::Io,
        Error::Parse { .. } | Error::Truncated { .. } | Error::Json(_) | Error::Csv(_) => ProjqaStatus::Parse,
        Error::UnsupportedFormat(_) | Error::Uncolored => ProjqaStatus::Unsupported,
        Error::InvalidModel(_) | Error::IndexOutOfRange(_) | Error::Texture(_) | Error::Image(_) => ProjqaStatus::InvalidModel,
        Error::EmptyProjection => ProjqaStatus::EmptyProjection,
        Error::ImageTooSmall { .. } | Error::DimensionMismatch(_) => ProjqaStatus::DimensionMismatch,
        Error::InvalidArgument(_) => ProjqaStatus::InvalidArgument,
        Error::NonFinite(_) => ProjqaStatus::NonFinite,
        Error::ConstantInput => ProjqaStatus::ConstantInput,
        Error::Backend(_) => ProjqaStatus::Backend,
        Error::WeightsNotFound(_) => ProjqaStatus::WeightsNotFound,
        Error::Stage { source, .. } => status_of(source),
        #[allow(unreachable_patterns)]
        _ => ProjqaStatus::Internal,
    }
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), (ProjqaStatus, String)>) -> ProjqaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ProjqaStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside projqa".into());
            ProjqaStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (ProjqaStatus, String) {
    let msg = e.to_string();
    (status_of(&root_cause(e)), msg)
}

fn null_arg(name: &str) -> (ProjqaStatus, String) {
    (ProjqaStatus::InvalidArgument, format!("`{name}` is null"))
}

unsafe fn path_arg<'a>(p: *const c_char, name: &str) -> Result<&'a Path, (ProjqaStatus, String)> {
    if p.is_null() {
        return Err(null_arg(name));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (ProjqaStatus::InvalidArgument, format!("`{name}` is not UTF-8")))?;
    Ok(Path::new(s))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next projqa call on the same thread.
#[no_mangle]
pub extern "C" fn projqa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn projqa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn projqa_config_preset(preset: ProjqaPreset) -> ProjqaConfig {
    let p = match preset {
        ProjqaPreset::Tiny => Preset::Tiny,
        ProjqaPreset::Base => Preset::Base,
    };
    let grid = GridSpec::default();
    let render = RenderConfig::default();
    ProjqaConfig {
        n_projections: p.projections() as u32,
        grid_rows: grid.rows as u32,
        grid_cols: grid.cols as u32,
        grid_patch: grid.patch as u32,
        viewport: render.viewport as u32,
        splat_radius: render.splat_radius,
        padding: render.padding,
        seed: 0,
    }
}

fn pipeline_config(c: &ProjqaConfig) -> Result<PipelineConfig, (ProjqaStatus, String)> {
    let grid = GridSpec::new(c.grid_rows as usize, c.grid_cols as usize, c.grid_patch as usize).map_err(lib_err)?;
    let cfg = PipelineConfig {
        sampling: SamplingConfig::random(c.n_projections as usize, grid),
        render: RenderConfig {
            viewport: c.viewport as usize,
            splat_radius: c.splat_radius,
            padding: c.padding,
            ..RenderConfig::default()
        },
        extractor: projqa::features::ExtractorSpec::baseline(),
        seed: c.seed,
    };
    cfg.validate().map_err(lib_err)?;
    Ok(cfg)
}

/// Loads a `.ply` point cloud or `.obj` textured mesh.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn projqa_model_load(path: *const c_char, out: *mut *mut ProjqaModel) -> ProjqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let p = path_arg(path, "path")?;
        let model = Model::load(p).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ProjqaModel { inner: model }));
        Ok(())
    })
}

/// Builds a point cloud from `n` xyz triples and `n` rgb triples in [0, 1].
///
/// # Safety
/// `xyz` and `rgb` must each point to `3 * n` floats; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn projqa_model_from_points(
    xyz: *const f32,
    rgb: *const f32,
    n: usize,
    out: *mut *mut ProjqaModel,
) -> ProjqaStatus {
    guard(|| {
        if xyz.is_null() || rgb.is_null() || out.is_null() {
            return Err(null_arg("xyz/rgb/out"));
        }
        let xyz = std::slice::from_raw_parts(xyz, 3 * n);
        let rgb = std::slice::from_raw_parts(rgb, 3 * n);
        let positions = xyz.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let colors = rgb.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let cloud = PointCloud::new(positions, colors).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ProjqaModel { inner: cloud.into() }));
        Ok(())
    })
}

/// Number of points (clouds) or faces (meshes); 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn projqa_model_size(model: *const ProjqaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.size())
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn projqa_model_free(model: *mut ProjqaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads head weights JSON.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn projqa_head_load(path: *const c_char, out: *mut *mut ProjqaHead) -> ProjqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let p = path_arg(path, "path")?;
        let w = load_weights(p).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ProjqaHead { inner: w }));
        Ok(())
    })
}

/// # Safety
/// `head` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn projqa_head_free(head: *mut ProjqaHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}

/// Scores a model. Per-projection scores go to `scores` (room for
/// `capacity` values, may be null when `capacity` is 0); their count goes to
/// `written` and the mean to `aggregate`. Fails with `BufferTooSmall`, with
/// `written` set to the required count, if `capacity` is short.
///
/// # Safety
/// Handles must be live; `config`, `written` and `aggregate` valid pointers;
/// `scores` must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn projqa_score(
    model: *const ProjqaModel,
    head: *const ProjqaHead,
    config: *const ProjqaConfig,
    scores: *mut f64,
    capacity: usize,
    written: *mut usize,
    aggregate: *mut f64,
) -> ProjqaStatus {
    guard(|| {
        let (Some(m), Some(h), Some(c)) = (model.as_ref(), head.as_ref(), config.as_ref()) else {
            return Err(null_arg("model/head/config"));
        };
        if written.is_null() || aggregate.is_null() {
            return Err(null_arg("written/aggregate"));
        }
        let cfg = pipeline_config(c)?;
        let r = score_model(&m.inner, &cfg, Some(&h.inner), None).map_err(lib_err)?;
        *written = r.per_projection.len();
        if r.per_projection.len() > capacity {
            return Err((
                ProjqaStatus::BufferTooSmall,
                format!("need room for {} scores, got {capacity}", r.per_projection.len()),
            ));
        }
        if !r.per_projection.is_empty() && scores.is_null() {
            return Err(null_arg("scores"));
        }
        ptr::copy_nonoverlapping(r.per_projection.as_ptr(), scores, r.per_projection.len());
        *aggregate = r.aggregate;
        Ok(())
    })
}

unsafe fn metric(a: *const f64, b: *const f64, n: usize, out: *mut f64, f: fn(&[f64], &[f64]) -> projqa::Result<f64>) -> ProjqaStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null_arg("a/b/out"));
        }
        let (a, b) = (std::slice::from_raw_parts(a, n), std::slice::from_raw_parts(b, n));
        *out = f(a, b).map_err(lib_err)?;
        Ok(())
    })
}

/// Spearman rank correlation of two length-`n` vectors.
///
/// # Safety
/// `a` and `b` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn projqa_srcc(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> ProjqaStatus {
    metric(a, b, n, out, evaluation::srcc)
}

/// Kendall tau-b of two length-`n` vectors.
///
/// # Safety
/// As for [`projqa_srcc`].
#[no_mangle]
pub unsafe extern "C" fn projqa_krcc(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> ProjqaStatus {
    metric(a, b, n, out, evaluation::krcc)
}

/// Pearson correlation of two length-`n` vectors.
///
/// # Safety
/// As for [`projqa_srcc`].
#[no_mangle]
pub unsafe extern "C" fn projqa_plcc(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> ProjqaStatus {
    metric(a, b, n, out, evaluation::plcc)
}

/// Root mean squared difference of two length-`n` vectors.
///
/// # Safety
/// As for [`projqa_srcc`].
#[no_mangle]
pub unsafe extern "C" fn projqa_rmse(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> ProjqaStatus {
    metric(a, b, n, out, evaluation::rmse)
}
