//! C ABI over the `mldegree` estimator.
//!
//! Every fallible call returns an [`MldStatus`]; on failure the message is
//! kept in a thread-local slot readable through [`mld_last_error_message`].
//! Models and fits are opaque handles released with their `*_free`
//! functions. Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mldegree::candidates::Classification;
use mldegree::cli::fit_document;
use mldegree::degree::{degree_experiment, DegreeConfig};
use mldegree::estimator::{fit, simulate, FitConfig, FitResult};
use mldegree::model::{build_one_way_model, ones_design};
use mldegree::{Error, Mode, ModelSpec, VariancePoint};
use nalgebra::{DMatrix, DVector};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MldStatus {
    Ok = 0,
    Dimension = 1,
    RankDeficient = 2,
    InvalidModel = 3,
    NotSymmetric = 4,
    NegativeEigenvalue = 5,
    NoNullEigenvalue = 6,
    InvalidVariance = 7,
    VanishingStatistics = 8,
    SpuriousPoint = 9,
    ZeroPolynomial = 10,
    ConstantPolynomial = 11,
    NoConvergence = 12,
    DegenerateSpectrum = 13,
    NotGeneric = 14,
    DataInMeanSpace = 15,
    Input = 16,
    NullPointer = 17,
    /// The estimate does not exist for these data; the fit handle is still valid.
    Nonexistent = 18,
    Panic = 19,
}

impl From<&Error> for MldStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension(_) => MldStatus::Dimension,
            Error::RankDeficient { .. } => MldStatus::RankDeficient,
            Error::InvalidModel(_) => MldStatus::InvalidModel,
            Error::NotSymmetric(_) => MldStatus::NotSymmetric,
            Error::NegativeEigenvalue(_) => MldStatus::NegativeEigenvalue,
            Error::NoNullEigenvalue => MldStatus::NoNullEigenvalue,
            Error::InvalidVariance(_) => MldStatus::InvalidVariance,
            Error::VanishingStatistics => MldStatus::VanishingStatistics,
            Error::SpuriousPoint(_) => MldStatus::SpuriousPoint,
            Error::ZeroPolynomial => MldStatus::ZeroPolynomial,
            Error::ConstantPolynomial => MldStatus::ConstantPolynomial,
            Error::NoConvergence => MldStatus::NoConvergence,
            Error::DegenerateSpectrum(_) => MldStatus::DegenerateSpectrum,
            Error::NotGeneric(_) => MldStatus::NotGeneric,
            Error::DataInMeanSpace => MldStatus::DataInMeanSpace,
            Error::Input(_) => MldStatus::Input,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MldMode {
    Ml = 0,
    Reml = 1,
}

impl From<MldMode> for Mode {
    fn from(m: MldMode) -> Self {
        match m {
            MldMode::Ml => Mode::Ml,
            MldMode::Reml => Mode::Reml,
        }
    }
}

/// Opaque model handle.
pub struct MldModel {
    spec: ModelSpec,
}

/// Opaque fit handle.
pub struct MldFit {
    result: FitResult,
}

/// Summary of a degree experiment.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MldDegreeSummary {
    pub max_count: u64,
    pub max_degree: u64,
    pub bound: u64,
    pub spectral_bound: u64,
    pub violations: u64,
    pub degenerate_replicates: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<(MldStatus, CString)>> = const { RefCell::new(None) };
}

fn set_error(status: MldStatus, msg: &str) -> MldStatus {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some((status, msg)));
    status
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(e: &Error) -> MldStatus {
    set_error(MldStatus::from(e), &format!("error[{}]: {e}", e.code()))
}

/// Runs `f`, converting panics and errors into status codes.
fn guard(f: impl FnOnce() -> Result<MldStatus, Error>) -> MldStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => fail(&e),
        Err(_) => set_error(MldStatus::Panic, "internal panic"),
    }
}

fn null(what: &str) -> Error {
    Error::Input(format!("{what} is null"))
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Error> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn model_ref<'a>(m: *const MldModel) -> Result<&'a MldModel, Error> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn fit_ref<'a>(f: *const MldFit) -> Result<&'a MldFit, Error> {
    f.as_ref().ok_or_else(|| null("fit"))
}

/// Status of the last failed call on this thread, or `Ok`.
#[no_mangle]
pub extern "C" fn mld_last_error_code() -> MldStatus {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(MldStatus::Ok, |(s, _)| *s))
}

/// Copies the last error message (NUL-terminated, truncated to `len`) into
/// `buf` and returns the full message length excluding the terminator.
///
/// # Safety
/// `buf` must be null or writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mld_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some((_, msg)) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let k = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, k);
            *buf.add(k) = 0;
        }
        bytes.len()
    })
}

/// Builds a model from `X` (`n x p`) and `V` (`n x n`), both row-major.
///
/// # Safety
/// `x` must hold `n * p` values, `v` `n * n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mld_model_new_dense(
    n: usize,
    p: usize,
    x: *const f64,
    v: *const f64,
    out: *mut *mut MldModel,
) -> MldStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = DMatrix::from_row_slice(n, p, slice(x, n * p, "x")?);
        let v = DMatrix::from_row_slice(n, n, slice(v, n * n, "v")?);
        let spec = ModelSpec::new(x, v)?;
        *out = Box::into_raw(Box::new(MldModel { spec }));
        Ok(MldStatus::Ok)
    })
}

/// Builds a one-way layout with consecutive groups. `w` is the row-major
/// `n x p` mean design; pass null for `W = 1_n` (then `p` is ignored).
///
/// # Safety
/// `sizes` must hold `q` values; `w` must be null or hold `n * p` values.
#[no_mangle]
pub unsafe extern "C" fn mld_model_new_one_way(
    sizes: *const usize,
    q: usize,
    w: *const f64,
    p: usize,
    out: *mut *mut MldModel,
) -> MldStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let sizes = slice(sizes, q, "sizes")?;
        let n: usize = sizes.iter().sum();
        let w = if w.is_null() {
            ones_design(n)
        } else {
            DMatrix::from_row_slice(n, p, slice(w, n * p, "w")?)
        };
        let spec = build_one_way_model(sizes, w)?;
        *out = Box::into_raw(Box::new(MldModel { spec }));
        Ok(MldStatus::Ok)
    })
}

/// # Safety
/// `model` must be null or a handle from a `mld_model_new_*` call, freed once.
#[no_mangle]
pub unsafe extern "C" fn mld_model_free(model: *mut MldModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mld_model_n(model: *const MldModel) -> usize {
    model.as_ref().map_or(0, |m| m.spec.n())
}

/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mld_model_p(model: *const MldModel) -> usize {
    model.as_ref().map_or(0, |m| m.spec.p())
}

/// Fits the model to `y` (length `n`). Writes a fit handle to `out` when the
/// status is `Ok` or `Nonexistent`.
///
/// # Safety
/// `model` must be live, `y` must hold `n` values, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mld_fit(
    model: *const MldModel,
    y: *const f64,
    n: usize,
    mode: MldMode,
    out: *mut *mut MldFit,
) -> MldStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = model_ref(model)?;
        if n != m.spec.n() {
            return Err(Error::Dimension(format!("y has length {n}, model has n = {}", m.spec.n())));
        }
        let y = DVector::from_column_slice(slice(y, n, "y")?);
        let result = fit(&y, &m.spec, mode.into(), &FitConfig::default())?;
        let status = if result.exists() {
            MldStatus::Ok
        } else {
            set_error(
                MldStatus::Nonexistent,
                result.nonexistence.as_deref().unwrap_or("estimate does not exist"),
            )
        };
        *out = Box::into_raw(Box::new(MldFit { result }));
        Ok(status)
    })
}

/// # Safety
/// `fit` must be null or a handle from [`mld_fit`], freed once.
#[no_mangle]
pub unsafe extern "C" fn mld_fit_free(fit: *mut MldFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// 1 if an estimate exists, 0 otherwise (including a null handle).
///
/// # Safety
/// `fit` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn mld_fit_exists(fit: *const MldFit) -> i32 {
    fit.as_ref().map_or(0, |f| i32::from(f.result.exists()))
}

/// # Safety
/// `fit` must be live; `sigma1_sq` and `sigma2_sq` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mld_fit_s_hat(fit: *const MldFit, sigma1_sq: *mut f64, sigma2_sq: *mut f64) -> MldStatus {
    guard(|| {
        let f = fit_ref(fit)?;
        if sigma1_sq.is_null() || sigma2_sq.is_null() {
            return Err(null("output"));
        }
        match f.result.s_hat {
            Some(s) => {
                *sigma1_sq = s.sigma1_sq;
                *sigma2_sq = s.sigma2_sq;
                Ok(MldStatus::Ok)
            }
            None => Ok(set_error(MldStatus::Nonexistent, "estimate does not exist")),
        }
    })
}

/// # Safety
/// `fit` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mld_fit_loglik(fit: *const MldFit, out: *mut f64) -> MldStatus {
    guard(|| {
        let f = fit_ref(fit)?;
        if out.is_null() {
            return Err(null("out"));
        }
        match f.result.loglik {
            Some(v) => {
                *out = v;
                Ok(MldStatus::Ok)
            }
            None => Ok(set_error(MldStatus::Nonexistent, "estimate does not exist")),
        }
    })
}

/// Copies the GLS coefficients into `out` (capacity `len`, at least `p`).
///
/// # Safety
/// `fit` must be live; `out` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn mld_fit_beta(fit: *const MldFit, out: *mut f64, len: usize) -> MldStatus {
    guard(|| {
        let f = fit_ref(fit)?;
        let Some(beta) = &f.result.beta_hat else {
            return Ok(set_error(MldStatus::Nonexistent, "estimate does not exist"));
        };
        if out.is_null() {
            return Err(null("out"));
        }
        if len < beta.len() {
            return Err(Error::Dimension(format!("buffer holds {len}, need {}", beta.len())));
        }
        ptr::copy_nonoverlapping(beta.as_ptr(), out, beta.len());
        Ok(MldStatus::Ok)
    })
}

/// Number of candidate critical points (all classes).
///
/// # Safety
/// `fit` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn mld_fit_candidate_count(fit: *const MldFit) -> usize {
    fit.as_ref().map_or(0, |f| f.result.candidates.len())
}

/// Number of interior real critical points.
///
/// # Safety
/// `fit` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn mld_fit_interior_count(fit: *const MldFit) -> usize {
    fit.as_ref().map_or(0, |f| {
        f.result
            .candidates
            .iter()
            .filter(|c| c.classification == Classification::InteriorReal)
            .count()
    })
}

/// Degree of the `rho`-polynomial, or -1 when none was built.
///
/// # Safety
/// `fit` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn mld_fit_poly_degree(fit: *const MldFit) -> i64 {
    fit.as_ref()
        .and_then(|f| f.result.diagnostics.as_ref())
        .and_then(|d| d.poly_degree)
        .map_or(-1, |d| d as i64)
}

/// The full fit document as a JSON string; release with [`mld_string_free`].
/// Returns null on a null handle.
///
/// # Safety
/// `fit` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn mld_fit_to_json(fit: *const MldFit) -> *mut c_char {
    let Some(f) = fit.as_ref() else {
        set_error(MldStatus::NullPointer, "fit is null");
        return ptr::null_mut();
    };
    let cfg = FitConfig::default();
    let doc = fit_document(&f.result, &cfg.tol, cfg.poly_mode).to_string();
    CString::new(doc).map_or(ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn mld_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Draws `y` (written to `y_out`, capacity `n`) from the model.
///
/// # Safety
/// `model` must be live; `beta` must hold `p` values (or be null for zero);
/// `y_out` must be writable for `n` values.
#[no_mangle]
pub unsafe extern "C" fn mld_simulate(
    model: *const MldModel,
    beta: *const f64,
    p: usize,
    sigma1_sq: f64,
    sigma2_sq: f64,
    seed: u64,
    y_out: *mut f64,
    n: usize,
) -> MldStatus {
    guard(|| {
        let m = model_ref(model)?;
        if n != m.spec.n() {
            return Err(Error::Dimension(format!("buffer holds {n}, model has n = {}", m.spec.n())));
        }
        if y_out.is_null() {
            return Err(null("y_out"));
        }
        let beta = if beta.is_null() {
            DVector::zeros(m.spec.p())
        } else {
            DVector::from_column_slice(slice(beta, p, "beta")?)
        };
        let s = VariancePoint::new(sigma1_sq, sigma2_sq)?;
        let y = simulate(&m.spec, &beta, &s, seed)?;
        ptr::copy_nonoverlapping(y.as_ptr(), y_out, n);
        Ok(MldStatus::Ok)
    })
}

/// Runs a degree experiment with standard normal replicates.
///
/// # Safety
/// `model` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mld_degree_experiment(
    model: *const MldModel,
    mode: MldMode,
    replicates: u64,
    seed: u64,
    out: *mut MldDegreeSummary,
) -> MldStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = degree_experiment(&m.spec, mode.into(), replicates, seed, &DegreeConfig::default())?;
        *out = MldDegreeSummary {
            max_count: r.max_count as u64,
            max_degree: r.max_degree as u64,
            bound: r.bound as u64,
            spectral_bound: r.spectral_bound as u64,
            violations: r.violations.len() as u64,
            degenerate_replicates: r.degenerate_replicates,
        };
        Ok(MldStatus::Ok)
    })
}
