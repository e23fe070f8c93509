//! C ABI for `hscl-core`.
//!
//! Every fallible function returns an [`HsclStatus`]; on failure the message
//! is available from [`hscl_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function. Outputs go through
//! caller-provided pointers and are only written on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use hscl_core::error::Error;
use hscl_core::geometry::{Embedder, SimilarityParams};
use hscl_core::hardening::HardeningSpec;
use hscl_core::losses::{loss_exact, psi_inf, psi_k, self_pairing};
use hscl_core::population::{compute_alphas, neg_distribution, EmbeddedPopulation, LabeledPoint, NegSamplingSpec, Population, Setting};
use hscl_core::theory::{assumption_fraction, verify_decomposition};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsclStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Degenerate = 4,
    EmptySupport = 5,
    ZeroMass = 6,
    Undefined = 7,
    Numerical = 8,
    Io = 9,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsclSetting {
    Ucl = 0,
    Scl = 1,
    HUcl = 2,
    HScl = 3,
    HCol = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsclHardeningKind {
    Identity = 0,
    /// `param` is beta.
    ExpTilt = 1,
    /// `param` is tau.
    Threshold = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsclHardening {
    pub kind: HsclHardeningKind,
    pub param: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HsclAlphas {
    pub alpha_scl: f64,
    pub alpha_hucl: f64,
    pub alpha_hscl: f64,
    pub alpha_hcol: f64,
}

/// Opaque population handle.
pub struct HsclPopulation(Population);

/// Opaque embedder handle.
pub struct HsclEmbedder(Embedder);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(HsclStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape { .. } => HsclStatus::Shape,
            Error::Degenerate(_) | Error::Geometry(_) => HsclStatus::Degenerate,
            Error::EmptySupport { .. } | Error::BatchComposition { .. } | Error::ConstructionInapplicable { .. } => {
                HsclStatus::EmptySupport
            }
            Error::ZeroMass => HsclStatus::ZeroMass,
            Error::UndefinedAssumption { .. } | Error::UndefinedFraction => HsclStatus::Undefined,
            Error::Numerical(_) | Error::LayerNumerical { .. } | Error::TrainingAbort { .. } => HsclStatus::Numerical,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => HsclStatus::Io,
            _ => HsclStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure(HsclStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> FfiResult<()>>(f: F) -> HsclStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsclStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            HsclStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> FfiResult<()> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> FfiResult<PathBuf> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HsclStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

impl From<HsclSetting> for Setting {
    fn from(s: HsclSetting) -> Self {
        match s {
            HsclSetting::Ucl => Setting::Ucl,
            HsclSetting::Scl => Setting::Scl,
            HsclSetting::HUcl => Setting::HUcl,
            HsclSetting::HScl => Setting::HScl,
            HsclSetting::HCol => Setting::HCol,
        }
    }
}

fn hardening(h: HsclHardening) -> FfiResult<HardeningSpec> {
    let spec = match h.kind {
        HsclHardeningKind::Identity => HardeningSpec::Identity,
        HsclHardeningKind::ExpTilt => HardeningSpec::ExpTilt { beta: h.param },
        HsclHardeningKind::Threshold => HardeningSpec::Threshold { tau: h.param },
    };
    spec.validate()?;
    Ok(spec)
}

unsafe fn view<'a>(
    pop: *const HsclPopulation,
    emb: *const HsclEmbedder,
    gamma: f64,
) -> FfiResult<EmbeddedPopulation<'a>> {
    let pop = &reference(pop, "population")?.0;
    let emb = &reference(emb, "embedder")?.0;
    Ok(EmbeddedPopulation::new(pop, emb, SimilarityParams::new(gamma)?)?)
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hscl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hscl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a population CSV (header row, feature columns, `label`, optional `weight`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hscl_population_load_csv(path: *const c_char, out: *mut *mut HsclPopulation) -> HsclStatus {
    guard(|| {
        let pop = Population::load_csv(&path_arg(path)?)?;
        write_out(out, Box::into_raw(Box::new(HsclPopulation(pop))), "out")
    })
}

/// Builds a population from `n` row-major feature rows of length `dim`
/// and their labels. `weights` may be null for a uniform base distribution.
///
/// # Safety
/// Arrays must hold `n * dim`, `n` and (if non-null) `n` elements.
#[no_mangle]
pub unsafe extern "C" fn hscl_population_new(
    features: *const f64,
    labels: *const usize,
    weights: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut HsclPopulation,
) -> HsclStatus {
    guard(|| {
        let x = slice(features, n * dim, "features")?;
        let y = slice(labels, n, "labels")?;
        let points: Vec<LabeledPoint> = (0..n)
            .map(|i| LabeledPoint::new(x[i * dim..(i + 1) * dim].to_vec(), y[i]))
            .collect();
        let pop = if weights.is_null() {
            Population::uniform(points)?
        } else {
            Population::new(points, slice(weights, n, "weights")?.to_vec())?
        };
        write_out(out, Box::into_raw(Box::new(HsclPopulation(pop))), "out")
    })
}

/// Number of points; 0 for a null handle.
///
/// # Safety
/// `pop` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hscl_population_len(pop: *const HsclPopulation) -> usize {
    pop.as_ref().map_or(0, |p| p.0.len())
}

/// Feature dimension; 0 for a null handle.
///
/// # Safety
/// `pop` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hscl_population_dim(pop: *const HsclPopulation) -> usize {
    pop.as_ref().map_or(0, |p| p.0.feature_dim())
}

/// # Safety
/// `pop` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hscl_population_free(pop: *mut HsclPopulation) {
    if !pop.is_null() {
        drop(Box::from_raw(pop));
    }
}

/// Tanh MLP with the given layer widths (input first), uniformly initialized
/// from `seed`.
///
/// # Safety
/// `widths` must hold `n_widths` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hscl_embedder_new(
    widths: *const usize,
    n_widths: usize,
    seed: u64,
    out: *mut *mut HsclEmbedder,
) -> HsclStatus {
    guard(|| {
        let w = slice(widths, n_widths, "widths")?;
        let e = Embedder::init(w, seed)?;
        write_out(out, Box::into_raw(Box::new(HsclEmbedder(e))), "out")
    })
}

/// Loads `<stem>.shape` and `<stem>.bin`.
///
/// # Safety
/// `stem` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hscl_embedder_load(stem: *const c_char, out: *mut *mut HsclEmbedder) -> HsclStatus {
    guard(|| {
        let e = Embedder::load(&path_arg(stem)?)?;
        write_out(out, Box::into_raw(Box::new(HsclEmbedder(e))), "out")
    })
}

/// Writes `<stem>.shape` and `<stem>.bin`.
///
/// # Safety
/// `e` must be a live handle; `stem` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hscl_embedder_save(e: *const HsclEmbedder, stem: *const c_char) -> HsclStatus {
    guard(|| Ok(reference(e, "embedder")?.0.save(&path_arg(stem)?)?))
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hscl_embedder_input_dim(e: *const HsclEmbedder) -> usize {
    e.as_ref().map_or(0, |e| e.0.input_dim())
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hscl_embedder_output_dim(e: *const HsclEmbedder) -> usize {
    e.as_ref().map_or(0, |e| e.0.embed_dim())
}

/// Unit-norm embedding of `x` into `out`.
///
/// # Safety
/// `x` must hold `x_len` and `out` `out_len` elements.
#[no_mangle]
pub unsafe extern "C" fn hscl_embedder_forward(
    e: *const HsclEmbedder,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> HsclStatus {
    guard(|| {
        let e = &reference(e, "embedder")?.0;
        let x = slice(x, x_len, "x")?;
        if x_len != e.input_dim() {
            return Err(Error::Shape {
                expected: e.input_dim(),
                got: x_len,
            }
            .into());
        }
        if out_len != e.embed_dim() {
            return Err(Error::Shape {
                expected: e.embed_dim(),
                got: out_len,
            }
            .into());
        }
        let y = e.forward(x)?;
        slice_mut(out, out_len, "out")?.copy_from_slice(y.coords());
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hscl_embedder_free(e: *mut HsclEmbedder) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// InfoNCE with `k` negatives.
///
/// # Safety
/// `g_negs` must hold `k` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hscl_psi_k(g_pos: f64, g_negs: *const f64, k: usize, out: *mut f64) -> HsclStatus {
    guard(|| write_out(out, psi_k(g_pos, slice(g_negs, k, "g_negs")?)?, "out"))
}

/// Infinite-negative limit of InfoNCE.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hscl_psi_inf(g_pos: f64, mean_exp_neg: f64, out: *mut f64) -> HsclStatus {
    guard(|| write_out(out, psi_inf(g_pos, mean_exp_neg)?, "out"))
}

/// Normalizers of the four settings at one anchor.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hscl_compute_alphas(
    pop: *const HsclPopulation,
    emb: *const HsclEmbedder,
    gamma: f64,
    anchor: usize,
    h: HsclHardening,
    out: *mut HsclAlphas,
) -> HsclStatus {
    guard(|| {
        let v = view(pop, emb, gamma)?;
        let a = compute_alphas(&v, anchor, &hardening(h)?)?;
        write_out(
            out,
            HsclAlphas {
                alpha_scl: a.alpha_scl,
                alpha_hucl: a.alpha_hucl,
                alpha_hscl: a.alpha_hscl,
                alpha_hcol: a.alpha_hcol,
            },
            "out",
        )
    })
}

/// Negative-sampling distribution over the population at one anchor.
///
/// # Safety
/// Handles must be live; `out` must hold `out_len` elements.
#[no_mangle]
pub unsafe extern "C" fn hscl_neg_distribution(
    pop: *const HsclPopulation,
    emb: *const HsclEmbedder,
    gamma: f64,
    anchor: usize,
    setting: HsclSetting,
    h: HsclHardening,
    out: *mut f64,
    out_len: usize,
) -> HsclStatus {
    guard(|| {
        let v = view(pop, emb, gamma)?;
        if out_len != v.len() {
            return Err(Error::Shape {
                expected: v.len(),
                got: out_len,
            }
            .into());
        }
        let d = neg_distribution(&v, anchor, &NegSamplingSpec::new(setting.into(), hardening(h)?))?;
        slice_mut(out, out_len, "out")?.copy_from_slice(&d);
        Ok(())
    })
}

/// Exact infinite-negative loss with every anchor as its own positive.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hscl_loss_exact(
    pop: *const HsclPopulation,
    emb: *const HsclEmbedder,
    gamma: f64,
    setting: HsclSetting,
    h: HsclHardening,
    out: *mut f64,
) -> HsclStatus {
    guard(|| {
        let v = view(pop, emb, gamma)?;
        let pairs = self_pairing(&v);
        let r = loss_exact(&v, &NegSamplingSpec::new(setting.into(), hardening(h)?), &pairs)?;
        write_out(out, r.value, "out")
    })
}

/// Fraction of anchors whose collision expectation is at least the
/// hard-negative expectation.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hscl_assumption_fraction(
    pop: *const HsclPopulation,
    emb: *const HsclEmbedder,
    gamma: f64,
    h: HsclHardening,
    out: *mut f64,
) -> HsclStatus {
    guard(|| {
        let v = view(pop, emb, gamma)?;
        write_out(out, assumption_fraction(&v, &hardening(h)?)?.fraction, "out")
    })
}

/// Writes 1 if the normalizer decomposition holds at every anchor, else 0.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hscl_verify_decomposition(
    pop: *const HsclPopulation,
    emb: *const HsclEmbedder,
    gamma: f64,
    h: HsclHardening,
    out: *mut i32,
) -> HsclStatus {
    guard(|| {
        let v = view(pop, emb, gamma)?;
        write_out(out, verify_decomposition(&v, &hardening(h)?) as i32, "out")
    })
}
