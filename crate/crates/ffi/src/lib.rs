//! C ABI over `conerank`.
//!
//! Datasets and models are opaque handles owned by the caller and released
//! with the matching `*_free`. Every function returns a [`CrStatus`]; on
//! failure `conerank_last_error()` describes the error for the calling
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use libc::c_char;

use conerank::data::parse_letor_str;
use conerank::{
    average_precision, ndcg_at_k, train, ConeModel, Dataset, Error, FoldInVariant, HyperParams,
    Schedule, TrainConfig,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrStatus {
    Ok = 0,
    /// Null pointer, bad length, or otherwise unusable argument.
    InvalidArgument = 1,
    Parse = 2,
    InvalidModel = 3,
    InvalidConfig = 4,
    /// Training or prediction produced non-finite values.
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrVariant {
    Sg = 0,
    Eg = 1,
    EgApprox = 2,
    Exact = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrSchedule {
    PerPair = 0,
    FullBatch = 1,
}

/// Training configuration. Obtain defaults from
/// `conerank_train_config_default` and override fields as needed.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrTrainConfig {
    pub k: usize,
    pub alpha: f64,
    pub rho: f64,
    pub cap: f64,
    pub mu_sg: f64,
    pub mu_eg: f64,
    pub variant: CrVariant,
    pub schedule: CrSchedule,
    /// Non-zero: scale pair losses by the relevance gap.
    pub weighted: i32,
    pub max_outer_epochs: usize,
    pub max_inner_iters: usize,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub seed: u64,
}

/// Opaque parsed dataset.
pub struct CrDataset {
    inner: Dataset,
}

/// Opaque trained model.
pub struct CrModel {
    inner: ConeModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CrStatus {
    match e {
        Error::InvalidInput(_) => CrStatus::InvalidArgument,
        Error::InvalidModel(_) => CrStatus::InvalidModel,
        Error::InvalidConfig(_) => CrStatus::InvalidConfig,
        Error::Parse { .. } => CrStatus::Parse,
        Error::Numerical(_) => CrStatus::Numerical,
        Error::Io(_) => CrStatus::Io,
    }
}

struct Fail(CrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(CrStatus::InvalidArgument, msg.to_string())
}

/// Runs `f`, recording any error or panic for `conerank_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CrStatus::Panic
        }
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| invalid(&format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| invalid(&format!("{what} is null")))
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn conerank_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn conerank_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses LETOR text into a new dataset handle.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out_dataset` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conerank_dataset_parse(text_ptr: *const c_char, out_dataset: *mut *mut CrDataset) -> CrStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        *slot = ptr::null_mut();
        let data = parse_letor_str(text(text_ptr, "text")?)?;
        *slot = Box::into_raw(Box::new(CrDataset { inner: data }));
        Ok(())
    })
}

/// Reads a LETOR file into a new dataset handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_dataset` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conerank_dataset_load(path: *const c_char, out_dataset: *mut *mut CrDataset) -> CrStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        *slot = ptr::null_mut();
        let path = text(path, "path")?;
        let body = std::fs::read_to_string(path).map_err(Error::from)?;
        let data = parse_letor_str(&body)?;
        *slot = Box::into_raw(Box::new(CrDataset { inner: data }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn conerank_dataset_free(dataset: *mut CrDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Feature dimension and number of queries.
///
/// # Safety
/// `dataset` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn conerank_dataset_shape(
    dataset: *const CrDataset,
    out_dim: *mut usize,
    out_queries: *mut usize,
) -> CrStatus {
    guard(|| {
        let d = &handle(dataset, "dataset")?.inner;
        *out(out_dim, "out_dim")? = d.dim;
        *out(out_queries, "out_queries")? = d.queries.len();
        Ok(())
    })
}

/// Defaults for `dim` features: K = min(10, dim), alpha = 1, rho = sqrt(dim),
/// c = 2 rho, SG per-pair training with weighted losses.
#[no_mangle]
pub extern "C" fn conerank_train_config_default(dim: usize) -> CrTrainConfig {
    let c = TrainConfig::new(HyperParams::for_dim(dim.max(1)));
    CrTrainConfig {
        k: c.hyper.k,
        alpha: c.hyper.alpha,
        rho: c.hyper.rho,
        cap: c.hyper.cap,
        mu_sg: c.hyper.mu_sg,
        mu_eg: c.hyper.mu_eg,
        variant: CrVariant::Sg,
        schedule: CrSchedule::PerPair,
        weighted: 1,
        max_outer_epochs: c.max_outer_epochs,
        max_inner_iters: c.max_inner_iters,
        outer_tol: c.outer_tol,
        inner_tol: c.inner_tol,
        seed: c.seed,
    }
}

fn to_config(c: &CrTrainConfig, dim: usize) -> TrainConfig {
    let mut hyper = HyperParams::for_dim(dim);
    hyper.k = c.k;
    hyper.alpha = c.alpha;
    hyper.rho = c.rho;
    hyper.cap = c.cap;
    hyper.mu_sg = c.mu_sg;
    hyper.mu_eg = c.mu_eg;
    let mut config = TrainConfig::new(hyper);
    config.variant = match c.variant {
        CrVariant::Sg => FoldInVariant::Sg,
        CrVariant::Eg => FoldInVariant::Eg,
        CrVariant::EgApprox => FoldInVariant::EgApprox,
        CrVariant::Exact => FoldInVariant::Exact,
    };
    config.schedule = match c.schedule {
        CrSchedule::PerPair => Schedule::PerPair,
        CrSchedule::FullBatch => Schedule::FullBatch,
    };
    config.weighted = c.weighted != 0;
    config.max_outer_epochs = c.max_outer_epochs;
    config.max_inner_iters = c.max_inner_iters;
    config.outer_tol = c.outer_tol;
    config.inner_tol = c.inner_tol;
    config.seed = c.seed;
    config
}

/// Trains a model. `out_final_risk` may be null.
///
/// # Safety
/// `dataset` must be a live handle, `config` readable, `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn conerank_train(
    dataset: *const CrDataset,
    config: *const CrTrainConfig,
    out_model: *mut *mut CrModel,
    out_final_risk: *mut f64,
) -> CrStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        let data = &handle(dataset, "dataset")?.inner;
        let config = to_config(handle(config, "config")?, data.dim);
        let (model, report) = train(data, &config)?;
        if let Some(r) = out_final_risk.as_mut() {
            *r = report.final_risk();
        }
        *slot = Box::into_raw(Box::new(CrModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn conerank_model_save(model: *const CrModel, path: *const c_char) -> CrStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        m.save(&PathBuf::from(text(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn conerank_model_load(path: *const c_char, out_model: *mut *mut CrModel) -> CrStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        let m = ConeModel::load(&PathBuf::from(text(path, "path")?))?;
        *slot = Box::into_raw(Box::new(CrModel { inner: m }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn conerank_model_free(model: *mut CrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature dimension N and basis order K of a model.
///
/// # Safety
/// `model` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn conerank_model_shape(model: *const CrModel, out_dim: *mut usize, out_k: *mut usize) -> CrStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        *out(out_dim, "out_dim")? = m.dim();
        *out(out_k, "out_k")? = m.basis.order();
        Ok(())
    })
}

/// Ranks one query of `n_docs` raw documents given row-major in `features`
/// (`n_docs * dim` values, `dim` equal to the model's). Writes document
/// indices best-first to `out_order` and per-document votes to `out_votes`
/// (may be null); both hold `n_docs` entries.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn conerank_rank(
    model: *const CrModel,
    features: *const f64,
    n_docs: usize,
    dim: usize,
    out_order: *mut usize,
    out_votes: *mut u32,
) -> CrStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        if features.is_null() || out_order.is_null() {
            return Err(invalid("features and out_order must not be null"));
        }
        if n_docs == 0 {
            return Err(invalid("a query needs at least one document"));
        }
        if dim != m.dim() {
            return Err(invalid(&format!("documents have {dim} features, model expects {}", m.dim())));
        }
        let total = n_docs.checked_mul(dim).ok_or_else(|| invalid("n_docs * dim overflows"))?;
        let values = std::slice::from_raw_parts(features, total);
        let docs: Vec<_> = values.chunks(dim).map(conerank::FeatureVector::from_column_slice).collect();
        let r = m.rank(&docs)?;
        std::slice::from_raw_parts_mut(out_order, n_docs).copy_from_slice(&r.ordered_doc_indices);
        if !out_votes.is_null() {
            std::slice::from_raw_parts_mut(out_votes, n_docs).copy_from_slice(&r.scores);
        }
        Ok(())
    })
}

/// Average precision of labels listed in ranked order (label > 0 is
/// relevant). Returns NaN if `labels` is null with `n > 0`.
///
/// # Safety
/// `labels` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn conerank_average_precision(labels: *const u32, n: usize) -> f64 {
    match ranked(labels, n) {
        Some(l) => average_precision(l),
        None => f64::NAN,
    }
}

/// NDCG@k of labels listed in ranked order. Returns NaN on a null pointer
/// with `n > 0`.
///
/// # Safety
/// `labels` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn conerank_ndcg_at_k(labels: *const u32, n: usize, k: usize) -> f64 {
    match ranked(labels, n) {
        Some(l) => ndcg_at_k(l, k),
        None => f64::NAN,
    }
}

unsafe fn ranked<'a>(labels: *const u32, n: usize) -> Option<&'a [u32]> {
    if n == 0 {
        Some(&[])
    } else if labels.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(labels, n))
    }
}
