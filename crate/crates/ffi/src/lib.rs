//! C ABI over `pmdlab`.
//!
//! Every fallible function returns a [`PmdStatus`] and writes its result through
//! an out-pointer. On failure the message is kept per thread and can be read
//! with [`pmd_last_error_message`]. Handles are opaque and must be released
//! with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pmdlab::decomposition::decompose;
use pmdlab::lattice::{
    pmd_pmf_exact as exact_pmd, siirv_pmf_exact as exact_siirv, tv_distance, DecompositionConfig, Hypothesis, ParamMatrix,
    SparsePmf,
};
use pmdlab::learn::{learn_pmd, learn_siirv, LearnConfig};
use pmdlab::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    SupportCapExceeded = 4,
    CoverCapExceeded = 5,
    Precondition = 6,
    TournamentFailure = 7,
    Io = 8,
    Panic = 9,
}

/// A parameter matrix.
pub struct PmdMatrix(ParamMatrix);

/// A tabulated pmf.
pub struct PmdPmf(SparsePmf);

/// A learned or decomposed distribution.
pub struct PmdHypothesis(Hypothesis);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> PmdStatus {
    match e {
        Error::InvalidMatrix(_) | Error::DimensionMismatch { .. } | Error::InvalidArgument { .. } => PmdStatus::InvalidArgument,
        Error::Parse(_) | Error::Json(_) => PmdStatus::Parse,
        Error::SupportCapExceeded { .. } => PmdStatus::SupportCapExceeded,
        Error::CoverCapExceeded { .. } => PmdStatus::CoverCapExceeded,
        Error::SingularCovariance { .. } | Error::Precondition(_) => PmdStatus::Precondition,
        Error::TournamentFailure => PmdStatus::TournamentFailure,
        Error::Io(_) => PmdStatus::Io,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), PmdStatus>) -> PmdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PmdStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            PmdStatus::Panic
        }
    }
}

fn lib<T>(r: pmdlab::Result<T>) -> Result<T, PmdStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null(what: &str) -> PmdStatus {
    set_error(format!("`{what}` is null"));
    PmdStatus::NullPointer
}

fn invalid(msg: &str) -> PmdStatus {
    set_error(msg);
    PmdStatus::InvalidArgument
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], PmdStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, v: T) {
    *out = Box::into_raw(Box::new(v));
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn pmd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pmd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build an `n×k` matrix from row-major probabilities.
///
/// # Safety
/// `rows` must point to `n*k` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pmd_matrix_new(k: usize, n: usize, rows: *const f64, out: *mut *mut PmdMatrix) -> PmdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if k == 0 {
            return Err(invalid("k must be positive"));
        }
        let len = n.checked_mul(k).ok_or_else(|| invalid("n*k overflows"))?;
        let data = slice(rows, len, "rows")?;
        let pm = lib(ParamMatrix::new(k, data.chunks(k).map(|r| r.to_vec()).collect()))?;
        put(out, PmdMatrix(pm));
        Ok(())
    })
}

/// Parse a matrix from its JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmd_matrix_from_json(json: *const c_char, out: *mut *mut PmdMatrix) -> PmdStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return Err(null("json/out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| invalid("json is not UTF-8"))?;
        let pm: ParamMatrix = serde_json::from_str(text).map_err(|e| {
            set_error(e.to_string());
            PmdStatus::Parse
        })?;
        put(out, PmdMatrix(pm));
        Ok(())
    })
}

/// # Safety
/// `m` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pmd_matrix_free(m: *mut PmdMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Rows and columns of a matrix.
///
/// # Safety
/// `m` must be a live handle; `n` and `k` writable or null.
#[no_mangle]
pub unsafe extern "C" fn pmd_matrix_shape(m: *const PmdMatrix, n: *mut usize, k: *mut usize) -> PmdStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("m"))?;
        if !n.is_null() {
            *n = m.0.n();
        }
        if !k.is_null() {
            *k = m.0.k();
        }
        Ok(())
    })
}

/// Exact pmf of the PMD.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmd_pmf_exact(m: *const PmdMatrix, out: *mut *mut PmdPmf) -> PmdStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("m"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, PmdPmf(lib(exact_pmd(&m.0))?));
        Ok(())
    })
}

/// Exact pmf of `Σ_j j·X_j`, the SIIRV with the matrix rows as summand laws.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmd_siirv_pmf_exact(m: *const PmdMatrix, out: *mut *mut PmdPmf) -> PmdStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("m"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, PmdPmf(lib(exact_siirv(&m.0))?));
        Ok(())
    })
}

/// Probability of the point `x[0..len]`.
///
/// # Safety
/// `p` must be a live handle, `x` must point to `len` integers and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pmd_pmf_prob(p: *const PmdPmf, x: *const i64, len: usize, out: *mut f64) -> PmdStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("p"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != p.0.dims() {
            lib(Err(Error::DimensionMismatch { expected: p.0.dims(), got: len }))?;
        }
        *out = p.0.prob(slice(x, len, "x")?);
        Ok(())
    })
}

/// Number of stored support points.
///
/// # Safety
/// `p` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn pmd_pmf_len(p: *const PmdPmf) -> usize {
    p.as_ref().map_or(0, |p| p.0.len())
}

/// # Safety
/// `p` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pmd_pmf_free(p: *mut PmdPmf) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Total variation distance.
///
/// # Safety
/// `a`, `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmd_tv_distance(a: *const PmdPmf, b: *const PmdPmf, out: *mut f64) -> PmdStatus {
    guard(|| {
        let (a, b) = (a.as_ref().ok_or_else(|| null("a"))?, b.as_ref().ok_or_else(|| null("b"))?);
        if out.is_null() {
            return Err(null("out"));
        }
        if a.0.dims() != b.0.dims() {
            return Err(invalid("pmfs have different dimensions"));
        }
        *out = tv_distance(&a.0, &b.0);
        Ok(())
    })
}

/// Structural decomposition with constants `(c, t, gamma)`; any non-positive
/// constant takes its desk default. Writes the TV ledger total if requested.
///
/// # Safety
/// `m` must be a live handle, `out` writable, `ledger_total` writable or null.
#[no_mangle]
pub unsafe extern "C" fn pmd_decompose(
    m: *const PmdMatrix,
    c: f64,
    t: f64,
    gamma: f64,
    out: *mut *mut PmdHypothesis,
    ledger_total: *mut f64,
) -> PmdStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("m"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let k = m.0.k();
        let d = DecompositionConfig::desk(k);
        let pick = |v: f64, def: f64| if v > 0.0 { v } else { def };
        let cfg = lib(DecompositionConfig::new(k, pick(c, d.c), pick(t, d.t), pick(gamma, d.gamma)))?;
        let dec = lib(decompose(&m.0, &cfg))?;
        if !ledger_total.is_null() {
            *ledger_total = dec.ledger.total();
        }
        put(out, PmdHypothesis(lib(Hypothesis::decomposition(dec.result))?));
        Ok(())
    })
}

fn learn_config(eps: f64, delta: f64, seed: u64) -> LearnConfig {
    let mut cfg = LearnConfig::desk(eps, delta);
    cfg.seed = seed;
    cfg
}

/// Learn a `k`-SIIRV from `m` samples, resampled with replacement as the oracle.
///
/// # Safety
/// `samples` must point to `m` integers and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pmd_learn_siirv(
    samples: *const i64,
    m: usize,
    k: usize,
    eps: f64,
    delta: f64,
    seed: u64,
    out: *mut *mut PmdHypothesis,
) -> PmdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = slice(samples, m, "samples")?;
        if s.is_empty() {
            return Err(invalid("need at least one sample"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x0c5f));
        let mut oracle = || s[rng.random_range(0..s.len())];
        let outcome = lib(learn_siirv(&mut oracle, k, &learn_config(eps, delta, seed)))?;
        put(out, PmdHypothesis(outcome.hypothesis));
        Ok(())
    })
}

/// Learn a PMD from `m` row-major `k`-dimensional samples, resampled with replacement.
///
/// # Safety
/// `samples` must point to `m*k` integers and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pmd_learn_pmd(
    samples: *const i64,
    m: usize,
    k: usize,
    eps: f64,
    delta: f64,
    seed: u64,
    out: *mut *mut PmdHypothesis,
) -> PmdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if k == 0 {
            return Err(invalid("k must be positive"));
        }
        let len = m.checked_mul(k).ok_or_else(|| invalid("m*k overflows"))?;
        let s = slice(samples, len, "samples")?;
        if s.is_empty() {
            return Err(invalid("need at least one sample"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x0c5f));
        let mut oracle = || {
            let i = rng.random_range(0..m);
            s[i * k..(i + 1) * k].to_vec()
        };
        let outcome = lib(learn_pmd(&mut oracle, k, &learn_config(eps, delta, seed)))?;
        put(out, PmdHypothesis(outcome.hypothesis));
        Ok(())
    })
}

/// Hypothesis probability at `x[0..len]`.
///
/// # Safety
/// `h` must be a live handle, `x` point to `len` integers, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmd_hypothesis_pmf(h: *const PmdHypothesis, x: *const i64, len: usize, out: *mut f64) -> PmdStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != h.0.dims() {
            return Err(invalid("point has the wrong dimension"));
        }
        *out = h.0.pmf_at(slice(x, len, "x")?);
        Ok(())
    })
}

/// Tabulate a hypothesis.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmd_hypothesis_tabulate(h: *const PmdHypothesis, out: *mut *mut PmdPmf) -> PmdStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, PmdPmf(lib(h.0.tabulate())?));
        Ok(())
    })
}

/// JSON document of a hypothesis; release with [`pmd_string_free`].
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmd_hypothesis_to_json(h: *const PmdHypothesis, out: *mut *mut c_char) -> PmdStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = lib(serde_json::to_string(&h.0).map_err(Error::from))?;
        *out = CString::new(s).map_err(|_| invalid("interior NUL"))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `h` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pmd_hypothesis_free(h: *mut PmdHypothesis) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pmd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
