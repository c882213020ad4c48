//! C interface to the msmoments engine.
//!
//! Models are opaque handles created by `msm_model_load` or
//! `msm_model_from_json` and released with `msm_model_free`. Every fallible
//! function returns an `MsmStatus`; on failure the message is available from
//! `msm_last_error_message` on the same thread. Matrices are written in
//! row-major order into caller-provided buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use msmoments::config::{load_model, parse_model, LoadedModel};
use msmoments::moments::{
    correlation_from_covariance, covariance_hattendorff, mgf, partial_moments,
};
use msmoments::nalgebra::DMatrix;
use msmoments::{transition_probabilities, Error, MultiIndex, Numerics, Scheme};

/// Result codes. The engine errors use the same values as the command line
/// exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsmStatus {
    Ok = 0,
    Config = 2,
    Numerical = 3,
    Validation = 4,
    NullPointer = 10,
    BufferTooSmall = 11,
    InvalidUtf8 = 12,
    Panic = 13,
}

/// Discretisation settings. `scheme` is 0 for Euler and 1 for the midpoint
/// matrix exponential.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MsmNumerics {
    pub h: f64,
    pub scheme: u32,
    pub block_cap: usize,
}

/// Opaque model handle.
pub struct MsmModel {
    inner: LoadedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> MsmStatus {
    match msmoments::cli::exit_code(err) {
        2 => MsmStatus::Config,
        3 => MsmStatus::Numerical,
        _ => MsmStatus::Validation,
    }
}

enum Failure {
    Engine(Error),
    Status(MsmStatus, String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MsmStatus::Ok
        }
        Ok(Err(Failure::Engine(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            MsmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(MsmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model_ref<'a>(model: *const MsmModel) -> Result<&'a LoadedModel, Failure> {
    if model.is_null() {
        return Err(null("model"));
    }
    Ok(&(*model).inner)
}

unsafe fn string_arg(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Status(MsmStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn numerics_arg(p: *const MsmNumerics) -> Result<Numerics, Failure> {
    if p.is_null() {
        return Ok(Numerics::default());
    }
    let n = &*p;
    let scheme = match n.scheme {
        0 => Scheme::Euler,
        1 => Scheme::MidpointExp,
        other => {
            return Err(Failure::Engine(Error::InvalidArgument(format!(
                "unknown scheme {other}"
            ))))
        }
    };
    if !(n.h > 0.0 && n.h.is_finite()) {
        return Err(Failure::Engine(Error::InvalidArgument(format!(
            "step must be positive, got {}",
            n.h
        ))));
    }
    Ok(Numerics {
        h: n.h,
        scheme,
        block_cap: n.block_cap,
    })
}

unsafe fn output<'a>(out: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], Failure> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < needed {
        return Err(Failure::Status(
            MsmStatus::BufferTooSmall,
            format!("output buffer holds {len} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(out, needed))
}

unsafe fn store(model: LoadedModel, out: *mut *mut MsmModel) {
    *out = Box::into_raw(Box::new(MsmModel { inner: model }));
}

/// Default discretisation settings.
#[no_mangle]
pub extern "C" fn msm_numerics_default() -> MsmNumerics {
    let n = Numerics::default();
    MsmNumerics {
        h: n.h,
        scheme: 1,
        block_cap: n.block_cap,
    }
}

/// Loads a model file, or a bundled model by name (e.g. `disability_g82m`).
///
/// # Safety
/// `source` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msm_model_load(
    source: *const c_char,
    out: *mut *mut MsmModel,
) -> MsmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let source = string_arg(source, "source")?;
        store(load_model(&source, &[])?, out);
        Ok(())
    })
}

/// Parses a model from a JSON document.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msm_model_from_json(
    json: *const c_char,
    out: *mut *mut MsmModel,
) -> MsmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let json = string_arg(json, "json")?;
        store(parse_model(&json, "<json>", &[])?, out);
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn msm_model_free(model: *mut MsmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of states, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msm_model_num_states(model: *const MsmModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.model.num_states())
}

/// Number of contracts, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msm_model_num_contracts(model: *const MsmModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.payments.len())
}

/// Model horizon, or NaN for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msm_model_horizon(model: *const MsmModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.inner.model.horizon())
}

/// `P(s, t)` into `out` (`J * J` values).
///
/// # Safety
/// `model` must be a live handle, `numerics` null or valid, and `out` valid
/// for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn msm_transition_probabilities(
    model: *const MsmModel,
    s: f64,
    t: f64,
    numerics: *const MsmNumerics,
    out: *mut f64,
    len: usize,
) -> MsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let numerics = numerics_arg(numerics)?;
        let j = m.model.num_states();
        let buf = output(out, len, j * j)?;
        let p = transition_probabilities(&m.model, s, t, &numerics)?;
        write_row_major(&p, buf);
        Ok(())
    })
}

fn write_row_major(m: &DMatrix<f64>, buf: &mut [f64]) {
    for a in 0..m.nrows() {
        for b in 0..m.ncols() {
            buf[a * m.ncols() + b] = m[(a, b)];
        }
    }
}

unsafe fn multi_index(k: *const u32, n: usize, m: &LoadedModel) -> Result<MultiIndex, Failure> {
    if k.is_null() {
        return Err(null("k"));
    }
    if n != m.payments.len() {
        return Err(Failure::Engine(Error::InvalidArgument(format!(
            "k has {n} entries but the model has {} contracts",
            m.payments.len()
        ))));
    }
    Ok(MultiIndex::new(std::slice::from_raw_parts(k, n).to_vec()))
}

/// Conditional moments `V_i^(k)(s, t)` for all states into `out` (`J`
/// values). With `central` nonzero the central moments are returned.
///
/// # Safety
/// `model` must be a live handle, `k` valid for `n` reads, `numerics` null or
/// valid, and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn msm_conditional_moments(
    model: *const MsmModel,
    k: *const u32,
    n: usize,
    s: f64,
    t: f64,
    central: bool,
    numerics: *const MsmNumerics,
    out: *mut f64,
    len: usize,
) -> MsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let k = multi_index(k, n, m)?;
        let numerics = numerics_arg(numerics)?;
        let j = m.model.num_states();
        let buf = output(out, len, j)?;
        let grid = partial_moments(&m.model, &m.payments, &k, s, t, &numerics)?;
        for (i, v) in buf.iter_mut().enumerate() {
            *v = if central {
                grid.central_moment(&k, i, 0)?
            } else {
                grid.moment(&k, i, 0).expect("k is in its own index set")
            };
        }
        Ok(())
    })
}

/// Covariance (or, with `correlation` nonzero, correlation) matrix of the
/// present values given `Z_s = state`, into `out` (`n * n` values).
/// Correlations involving a contract with vanishing variance are 0.
///
/// # Safety
/// `model` must be a live handle, `numerics` null or valid, and `out` valid
/// for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn msm_covariance(
    model: *const MsmModel,
    state: usize,
    s: f64,
    t: f64,
    correlation: bool,
    numerics: *const MsmNumerics,
    out: *mut f64,
    len: usize,
) -> MsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let numerics = numerics_arg(numerics)?;
        if state >= m.model.num_states() {
            return Err(Failure::Engine(Error::InvalidArgument(format!(
                "state {state} does not exist"
            ))));
        }
        let n = m.payments.len();
        let buf = output(out, len, n * n)?;
        let curves = covariance_hattendorff(&m.model, &m.payments, s, t, &numerics)?;
        let cov = curves.covariance_matrix(state, 0);
        if correlation {
            write_row_major(&correlation_from_covariance(cov).matrix, buf);
        } else {
            write_row_major(cov, buf);
        }
        Ok(())
    })
}

/// `F(theta; s, t)` into `out` (`J * J` values).
///
/// # Safety
/// `model` must be a live handle, `theta` valid for `n` reads, `numerics`
/// null or valid, and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn msm_mgf(
    model: *const MsmModel,
    theta: *const f64,
    n: usize,
    s: f64,
    t: f64,
    numerics: *const MsmNumerics,
    out: *mut f64,
    len: usize,
) -> MsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        if theta.is_null() {
            return Err(null("theta"));
        }
        let theta = std::slice::from_raw_parts(theta, n);
        let numerics = numerics_arg(numerics)?;
        let j = m.model.num_states();
        let buf = output(out, len, j * j)?;
        let f = mgf(&m.model, &m.payments, theta, s, t, &numerics)?;
        write_row_major(&f, buf);
        Ok(())
    })
}

/// Copies the last error message of this thread into `buf` (truncated and
/// NUL-terminated) and returns its full length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn msm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}
