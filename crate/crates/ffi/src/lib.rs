//! C ABI for the `sefdi` library.
//!
//! Cases are opaque handles created by [`sefdi_case_parse`] and released by
//! [`sefdi_case_free`]. Every fallible call returns a status code (`SEFDI_OK`
//! or a negative `SEFDI_ERR_*`); the message of the last failure on the
//! calling thread is available from [`sefdi_last_error_message`]. Matrices
//! are row-major, vectors are caller-allocated `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::slice;

use nalgebra::{DMatrix, DVector};
use sefdi::attack::{self, AttackVector, StateShift};
use sefdi::bad_data;
use sefdi::estimator::{self, WeightMatrix};
use sefdi::grid;
use sefdi::measurement;
use sefdi::Error;

pub const SEFDI_OK: i32 = 0;
pub const SEFDI_ERR_NULL: i32 = -1;
pub const SEFDI_ERR_LENGTH: i32 = -2;
pub const SEFDI_ERR_PARSE: i32 = -3;
pub const SEFDI_ERR_NUMERICAL: i32 = -4;
pub const SEFDI_ERR_NO_CONVERGENCE: i32 = -5;
pub const SEFDI_ERR_INVALID_ARGUMENT: i32 = -6;
pub const SEFDI_ERR_PANIC: i32 = -99;

/// Parsed case with its DC measurement model.
pub struct SefdiCase {
    h: DMatrix<f64>,
    weights: WeightMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::LengthMismatch { .. } | Error::DimensionMismatch(_) => SEFDI_ERR_LENGTH,
            Error::UnobservableNetwork(_) | Error::NumericallySingularOmega(_) | Error::NoRedundancy { .. } => {
                SEFDI_ERR_NUMERICAL
            }
            Error::DidNotConverge(_) => SEFDI_ERR_NO_CONVERGENCE,
            Error::InvalidParameter(_) => SEFDI_ERR_INVALID_ARGUMENT,
            _ => SEFDI_ERR_PARSE,
        };
        Failure(code, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SEFDI_ERR_NULL, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match panic::catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            SEFDI_OK
        }
        Ok(Err(Failure(code, message))) => {
            set_error(message);
            code
        }
        Err(_) => {
            set_error("internal panic");
            SEFDI_ERR_PANIC
        }
    }
}

unsafe fn handle<'a>(case: *const SefdiCase) -> Result<&'a SefdiCase, Failure> {
    case.as_ref().ok_or_else(|| null("case"))
}

unsafe fn input<'a>(ptr: *const f64, len: usize, expected: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len != expected {
        return Err(Failure(SEFDI_ERR_LENGTH, format!("{what}: expected {expected} values, got {len}")));
    }
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(ptr: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len != expected {
        return Err(Failure(SEFDI_ERR_LENGTH, format!("{what}: buffer holds {len}, need {expected}")));
    }
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn write<T>(ptr: *mut T, value: T) {
    if !ptr.is_null() {
        *ptr = value;
    }
}

/// Parses a NUL-terminated JSON case document. On success `*out` owns a new
/// handle.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sefdi_case_parse(json: *const c_char, out: *mut *mut SefdiCase) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let text =
            CStr::from_ptr(json).to_str().map_err(|e| Failure(SEFDI_ERR_PARSE, format!("case is not UTF-8: {e}")))?;
        let case = grid::parse_case(text)?;
        let h = measurement::dc_jacobian(&case.network, &case.measurements)?.0;
        let weights = WeightMatrix::from_config(&case.measurements)?;
        *out = Box::into_raw(Box::new(SefdiCase { h, weights }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `case` must come from [`sefdi_case_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sefdi_case_free(case: *mut SefdiCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// Number of meters `m` and DC state dimension `k`.
///
/// # Safety
/// `case` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn sefdi_case_dims(case: *const SefdiCase, meters: *mut usize, states: *mut usize) -> i32 {
    guard(|| {
        let c = handle(case)?;
        write(meters, c.h.nrows());
        write(states, c.h.ncols());
        Ok(())
    })
}

/// Copies the `m x k` DC Jacobian into `out`, row-major.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sefdi_dc_jacobian(case: *const SefdiCase, out: *mut f64, len: usize) -> i32 {
    guard(|| {
        let c = handle(case)?;
        let buf = output(out, len, c.h.len(), "out")?;
        for (i, row) in c.h.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                buf[i * c.h.ncols() + j] = *v;
            }
        }
        Ok(())
    })
}

/// DC weighted least-squares estimate of `z`. `squared_error` and
/// `objective` may be null.
///
/// # Safety
/// `z` must hold `m` doubles and `state` room for `k`.
#[no_mangle]
pub unsafe extern "C" fn sefdi_estimate_dc(
    case: *const SefdiCase,
    z: *const f64,
    m: usize,
    state: *mut f64,
    k: usize,
    squared_error: *mut f64,
    objective: *mut f64,
) -> i32 {
    guard(|| {
        let c = handle(case)?;
        let z = DVector::from_column_slice(input(z, m, c.h.nrows(), "z")?);
        let out = output(state, k, c.h.ncols(), "state")?;
        let est = estimator::estimate_dc(&c.h, &z, &c.weights)?;
        out.copy_from_slice(est.state.as_slice());
        write(squared_error, est.squared_error_raw);
        write(objective, est.objective_weighted);
        Ok(())
    })
}

/// Chi-square test of `z` at significance `alpha`. `detected` receives 0 or 1.
///
/// # Safety
/// `z` must hold `m` doubles; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn sefdi_chi_square(
    case: *const SefdiCase,
    z: *const f64,
    m: usize,
    alpha: f64,
    statistic: *mut f64,
    threshold: *mut f64,
    detected: *mut i32,
) -> i32 {
    guard(|| {
        let c = handle(case)?;
        let z = DVector::from_column_slice(input(z, m, c.h.nrows(), "z")?);
        let est = estimator::estimate_dc(&c.h, &z, &c.weights)?;
        let hx = &z - &est.residual;
        let r = bad_data::chi_square_test(&z, &hx, &c.weights, c.h.ncols(), alpha)?;
        write(statistic, r.statistic);
        write(threshold, r.threshold_used);
        write(detected, i32::from(r.detected));
        Ok(())
    })
}

/// Stealth attack `a = H c`.
///
/// # Safety
/// `c` must hold `k` doubles and `a` room for `m`.
#[no_mangle]
pub unsafe extern "C" fn sefdi_craft_attack(
    case: *const SefdiCase,
    c: *const f64,
    k: usize,
    a: *mut f64,
    m: usize,
) -> i32 {
    guard(|| {
        let h = &handle(case)?.h;
        let shift = StateShift(DVector::from_column_slice(input(c, k, h.ncols(), "c")?));
        let out = output(a, m, h.nrows(), "a")?;
        out.copy_from_slice(attack::craft_stealth_attack(h, &shift)?.0.as_slice());
        Ok(())
    })
}

/// Sets `*stealthy` to 1 when `a` lies in the column space of `H`, else 0.
///
/// # Safety
/// `a` must hold `m` doubles and `stealthy` be valid.
#[no_mangle]
pub unsafe extern "C" fn sefdi_verify_stealth(
    case: *const SefdiCase,
    a: *const f64,
    m: usize,
    stealthy: *mut i32,
) -> i32 {
    guard(|| {
        let h = &handle(case)?.h;
        if stealthy.is_null() {
            return Err(null("stealthy"));
        }
        let a = AttackVector(DVector::from_column_slice(input(a, m, h.nrows(), "a")?));
        *stealthy = i32::from(attack::verify_stealth(h, &a)?);
        Ok(())
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn sefdi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn sefdi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
