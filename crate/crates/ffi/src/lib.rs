//! C ABI for hardylab.
//!
//! Every fallible call returns an [`HlStatus`] and writes its result through
//! an out-pointer. On failure the message is kept per thread and can be
//! copied out with [`hl_last_error_message`]. Objects cross the boundary as
//! opaque handles that must be released with the matching `*_free`.

#![allow(non_snake_case)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use hardylab::functions::TestFunction;
use hardylab::geometry::Domain;
use hardylab::hardy::{self, HardyCase};
use hardylab::logweights::{self, Tail, WeightChain};
use hardylab::seminorms::{self, Order};
use hardylab::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Divergence = 4,
    NonConvergence = 5,
    Internal = 99,
}

/// Tail selector for [`hl_chain_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlTail {
    Square = 0,
    Power = 1,
    RhoStar = 2,
}

/// A weight chain `L_1 ... L_{m-1} tail(L_m)` at scale `R`.
pub struct HlChain(WeightChain);

/// A domain with a distance-to-boundary oracle.
pub struct HlDomain(Domain);

/// A test function.
pub struct HlFunction(TestFunction);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> HlStatus {
    match e {
        Error::Domain(_) | Error::OutsideDomain(_) | Error::Geometry(_) | Error::EmptyRegion | Error::NonFinite(_) => {
            HlStatus::Domain
        }
        Error::Divergence { .. } => HlStatus::Divergence,
        Error::NonConvergence { .. } => HlStatus::NonConvergence,
        _ => HlStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lab(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lab(e)
    }
}

/// Runs `f`, storing its value in `out` and translating errors and panics.
fn guard<T>(out: *mut T, f: impl FnOnce() -> Result<T, Failure>) -> HlStatus {
    if out.is_null() {
        set_error("output pointer is null".into());
        return HlStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => {
            // SAFETY: `out` is non-null and the caller guarantees it is valid for writes.
            unsafe { out.write(v) };
            HlStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            HlStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            HlStatus::InvalidArgument
        }
        Ok(Err(Failure::Lab(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            HlStatus::Internal
        }
    }
}

/// # Safety
/// `p` must be null or point to a live handle.
unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure::Null("string"));
    }
    unsafe { CStr::from_ptr(s) }
        .to_str()
        .map_err(|_| Failure::Invalid("string is not UTF-8".into()))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns the full message length in bytes. Pass a null
/// `buf` to query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: the caller guarantees `buf` holds `len` bytes and n < len.
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// `L_m(t)` for `t` in `(0, 1]`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_eval_L(m: u32, t: f64, out: *mut f64) -> HlStatus {
    guard(out, || Ok(logweights::eval_l(m, t)?))
}

/// `Y_m(k)`, the majorant of `L_m` on `[3^k, 3^{k+1})`, for `k < 0`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_eval_Y(m: u32, k: i64, out: *mut f64) -> HlStatus {
    guard(out, || Ok(logweights::eval_y(m, k)?))
}

/// The exponent `rho*(t)` for which `L_m^{1 + rho*} = L_m L_{m+1}^beta`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_rho_star(m: u32, beta: f64, t: f64, out: *mut f64) -> HlStatus {
    guard(out, || Ok(logweights::eval_rho_star(m, beta, t)?))
}

/// `C(theta)` with `L_m^theta <= C(theta) L_{m+1}^2`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_theta_constant(theta: f64, out: *mut f64) -> HlStatus {
    guard(out, || Ok(logweights::theta_domination_constant(theta)?))
}

/// `int_{S^{d-1}} |e . w| dw`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_bbm_constant(d: u32, out: *mut f64) -> HlStatus {
    guard(out, || Ok(seminorms::bbm_constant(d)?))
}

/// New weight chain. `beta` is ignored for [`HlTail::Square`].
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_chain_new(m: u32, r: f64, tail: HlTail, beta: f64, out: *mut *mut HlChain) -> HlStatus {
    guard(out, || {
        let tail = match tail {
            HlTail::Square => Tail::Square,
            HlTail::Power => Tail::Power { beta },
            HlTail::RhoStar => Tail::RhoStar { beta },
        };
        Ok(boxed(HlChain(WeightChain::new(m, r, tail)?)))
    })
}

/// Chain value at `t` in `(0, R]`.
///
/// # Safety
/// `chain` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_chain_eval(chain: *const HlChain, t: f64, out: *mut f64) -> HlStatus {
    guard(out, || Ok(unsafe { handle(chain, "chain") }?.0.eval(t)?))
}

/// # Safety
/// `chain` must be null or a handle from [`hl_chain_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hl_chain_free(chain: *mut HlChain) {
    if !chain.is_null() {
        drop(unsafe { Box::from_raw(chain) });
    }
}

/// Domain from its JSON description, e.g.
/// `{"variant":"interval","half_length":1.0}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_domain_from_json(json: *const c_char, out: *mut *mut HlDomain) -> HlStatus {
    guard(out, || {
        let d: Domain = serde_json::from_str(unsafe { c_str(json) }?).map_err(|e| Failure::Invalid(format!("domain json: {e}")))?;
        Ok(boxed(HlDomain(d)))
    })
}

/// Distance from the `dim`-vector `x` to the boundary.
///
/// # Safety
/// `domain` must be a live handle, `x` valid for `dim` reads and `out` valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_domain_distance(domain: *const HlDomain, x: *const f64, dim: usize, out: *mut f64) -> HlStatus {
    guard(out, || {
        let d = unsafe { handle(domain, "domain") }?;
        if x.is_null() {
            return Err(Failure::Null("point"));
        }
        if dim != d.0.dim() {
            return Err(Failure::Invalid(format!("point has {dim} coordinates, domain has {}", d.0.dim())));
        }
        // SAFETY: the caller guarantees `x` holds `dim` values.
        let x = unsafe { std::slice::from_raw_parts(x, dim) };
        Ok(d.0.distance_to_boundary(x)?)
    })
}

/// # Safety
/// `domain` must be null or a handle from [`hl_domain_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hl_domain_free(domain: *mut HlDomain) {
    if !domain.is_null() {
        drop(unsafe { Box::from_raw(domain) });
    }
}

/// Test function from its JSON description, e.g.
/// `{"descriptor":{"kind":"linear","slope":1.0,"intercept":0.0}}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_function_from_json(json: *const c_char, out: *mut *mut HlFunction) -> HlStatus {
    guard(out, || {
        let u: TestFunction = serde_json::from_str(unsafe { c_str(json) }?).map_err(|e| Failure::Invalid(format!("function json: {e}")))?;
        TestFunction::new(u.descriptor.clone())?;
        Ok(boxed(HlFunction(u)))
    })
}

/// # Safety
/// `function` must be null or a handle from [`hl_function_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hl_function_free(function: *mut HlFunction) {
    if !function.is_null() {
        drop(unsafe { Box::from_raw(function) });
    }
}

/// `int_a^b int_a^b |u(x) - u(y)| / |x - y|^{1+s} dx dy`.
///
/// # Safety
/// `function` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_gagliardo_1d(function: *const HlFunction, a: f64, b: f64, s: f64, out: *mut f64) -> HlStatus {
    guard(out, || {
        let u = unsafe { handle(function, "function") }?;
        Ok(seminorms::gagliardo_1d(&u.0, a, b, s)?.value)
    })
}

/// Weighted boundary integral `int |u - c| / delta^sigma chain(delta)`.
/// `s` in `(0, 1)` gives `sigma = s` with `c = 0`; `s = 1` gives the BV
/// weight `sigma = 1` with `c` the domain average of `u`.
///
/// # Safety
/// All handles must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_weighted_lhs(
    function: *const HlFunction,
    domain: *const HlDomain,
    chain: *const HlChain,
    s: f64,
    out: *mut f64,
) -> HlStatus {
    guard(out, || {
        let u = unsafe { handle(function, "function") }?;
        let d = unsafe { handle(domain, "domain") }?;
        let c = unsafe { handle(chain, "chain") }?;
        let order = if s == 1.0 { Order::Bv } else { Order::Fractional(s) };
        let case = HardyCase::new(u.0.clone(), d.0.clone(), c.0, order)?;
        Ok(hardy::weighted_lhs(&case)?)
    })
}

/// Measured constant `lhs / (2^m [u]_BV)` of the BV inequality with the
/// square tail; `pass` receives 1 when it is finite.
///
/// # Safety
/// Handles must be live and both out-pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hl_verify_main(
    function: *const HlFunction,
    domain: *const HlDomain,
    m: u32,
    r: f64,
    constant: *mut f64,
    pass: *mut i32,
) -> HlStatus {
    if pass.is_null() {
        set_error("output pointer is null".into());
        return HlStatus::NullPointer;
    }
    let mut verdict = 0;
    let status = guard(constant, || {
        let u = unsafe { handle(function, "function") }?;
        let d = unsafe { handle(domain, "domain") }?;
        let report = hardy::verify_main(&u.0, &d.0, m, r)?;
        verdict = i32::from(report.pass);
        Ok(report.measured_constant)
    });
    if status == HlStatus::Ok {
        // SAFETY: checked non-null above.
        unsafe { pass.write(verdict) };
    }
    status
}
