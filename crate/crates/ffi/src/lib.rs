//! C ABI over `ampcc`.
//!
//! Every fallible call returns an [`AmpccStatus`]; on failure the message is
//! available from [`ampcc_last_error`] on the same thread. Results are written
//! through out-pointers. Handles are opaque and must be released with their
//! `_free` function.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use ampcc::denoise::{mmse_scalar, CodeSpec, Denoiser};
use ampcc::evolve::transfer::Mmse;
use ampcc::evolve::{asc_rate, phi_awgn, puncture_rate, se_fixed_point, Phi};
use ampcc::model::{clip_params_from_cr, Constellation};
use ampcc::recon::{amp_run, ReconOpts};
use ampcc::sensing::{fht, SensingOperator};
use ampcc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpccStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Numerical = 4,
    NoBracket = 5,
    Checksum = 6,
    Config = 7,
    Io = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpccConstellation {
    Bpsk = 0,
    Pam4 = 1,
}

impl From<AmpccConstellation> for Constellation {
    fn from(c: AmpccConstellation) -> Self {
        match c {
            AmpccConstellation::Bpsk => Constellation::Bpsk,
            AmpccConstellation::Pam4 => Constellation::Pam4,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpccDirection {
    Forward = 0,
    Adjoint = 1,
}

/// Opaque sensing operator.
pub struct AmpccSensing {
    op: SensingOperator,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &Error) -> AmpccStatus {
    match e {
        Error::InvalidParam(_) | Error::NotInAlphabet(_) => AmpccStatus::InvalidArgument,
        Error::Dimension { .. } => AmpccStatus::Dimension,
        Error::Quadrature(_) | Error::NonFinite { .. } => AmpccStatus::Numerical,
        Error::NoBracket { .. } => AmpccStatus::NoBracket,
        Error::Checksum(_) => AmpccStatus::Checksum,
        Error::Config(_) | Error::Json(_) => AmpccStatus::Config,
        Error::Io(_) => AmpccStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), AmpccStatus>) -> AmpccStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AmpccStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            AmpccStatus::Panic
        }
    }
}

fn lift<T>(r: ampcc::Result<T>) -> Result<T, AmpccStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null() -> AmpccStatus {
    set_error("null pointer argument");
    AmpccStatus::NullPointer
}

fn check(p: bool) -> Result<(), AmpccStatus> {
    if p {
        Err(null())
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ampcc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a NUL-terminated string.
#[no_mangle]
pub extern "C" fn ampcc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn store(out: *mut *mut AmpccSensing, op: SensingOperator) {
    // SAFETY: caller checked `out` is non-null.
    unsafe { *out = Box::into_raw(Box::new(AmpccSensing { op })) };
}

/// Dense `m × n` operator with i.i.d. `N(0, 1/n)` entries.
#[no_mangle]
pub extern "C" fn ampcc_sensing_gaussian(
    m: usize,
    n: usize,
    seed: u64,
    out: *mut *mut AmpccSensing,
) -> AmpccStatus {
    guard(|| {
        check(out.is_null())?;
        store(out, lift(SensingOperator::iid_gaussian(m, n, seed))?);
        Ok(())
    })
}

/// Subsampled orthonormal Hadamard operator; `n` must be a power of two.
#[no_mangle]
pub extern "C" fn ampcc_sensing_hadamard(
    m: usize,
    n: usize,
    seed: u64,
    signs: bool,
    out: *mut *mut AmpccSensing,
) -> AmpccStatus {
    guard(|| {
        check(out.is_null())?;
        store(out, lift(SensingOperator::subsampled_hadamard(m, n, seed, signs))?);
        Ok(())
    })
}

/// Writes the operator's row and column counts.
///
/// # Safety
/// `h` must come from a sensing constructor; `m` and `n` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ampcc_sensing_dims(
    h: *const AmpccSensing,
    m: *mut usize,
    n: *mut usize,
) -> AmpccStatus {
    guard(|| {
        check(h.is_null() || m.is_null() || n.is_null())?;
        let op = &(*h).op;
        *m = op.m();
        *n = op.n();
        Ok(())
    })
}

/// `out = A·x` (forward, `x` has `n` entries) or `out = Aᵀ·x` (adjoint).
///
/// # Safety
/// `x` and `out` must point to `x_len` and `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ampcc_sensing_apply(
    h: *const AmpccSensing,
    dir: AmpccDirection,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> AmpccStatus {
    guard(|| {
        check(h.is_null() || x.is_null() || out.is_null())?;
        let op = &(*h).op;
        let xs = slice::from_raw_parts(x, x_len);
        let os = slice::from_raw_parts_mut(out, out_len);
        match dir {
            AmpccDirection::Forward => lift(op.forward_into(xs, os)),
            AmpccDirection::Adjoint => lift(op.adjoint_into(xs, os)),
        }
    })
}

/// Releases an operator. Null is ignored.
///
/// # Safety
/// `h` must come from a sensing constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ampcc_sensing_free(h: *mut AmpccSensing) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// In-place orthonormal Walsh-Hadamard transform.
///
/// # Safety
/// `v` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ampcc_fht(v: *mut f64, len: usize) -> AmpccStatus {
    guard(|| {
        check(v.is_null())?;
        lift(fht(slice::from_raw_parts_mut(v, len)))
    })
}

/// MMSE of a uniform constellation symbol at SNR `rho`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ampcc_mmse_scalar(
    c: AmpccConstellation,
    rho: f64,
    out: *mut f64,
) -> AmpccStatus {
    guard(|| {
        check(out.is_null())?;
        if !(rho >= 0.0) {
            set_error("rho must be nonnegative");
            return Err(AmpccStatus::InvalidArgument);
        }
        *out = mmse_scalar(c.into(), rho);
        Ok(())
    })
}

/// AWGN channel transfer `δ/(v+σ²)`, or its inverse when `inverse` is set.
#[no_mangle]
pub extern "C" fn ampcc_phi_awgn(x: f64, delta: f64, sigma2: f64, inverse: bool) -> f64 {
    phi_awgn(x, delta, sigma2, inverse)
}

/// Clipping threshold `z` and power renormalizer `alpha` for a clipping ratio in dB.
///
/// # Safety
/// `z` and `alpha` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ampcc_clip_params(cr_db: f64, z: *mut f64, alpha: *mut f64) -> AmpccStatus {
    guard(|| {
        check(z.is_null() || alpha.is_null())?;
        let (zz, a) = lift(clip_params_from_cr(cr_db))?;
        *z = zz;
        *alpha = a;
        Ok(())
    })
}

/// Scalar SE fixed point for uncoded transmission over AWGN.
///
/// # Safety
/// The three out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ampcc_se_fixed_point(
    c: AmpccConstellation,
    delta: f64,
    sigma2: f64,
    rho_star: *mut f64,
    v_star: *mut f64,
    error_free: *mut bool,
) -> AmpccStatus {
    guard(|| {
        check(rho_star.is_null() || v_star.is_null() || error_free.is_null())?;
        if !(delta > 0.0 && sigma2 > 0.0) {
            set_error("delta and sigma2 must be positive");
            return Err(AmpccStatus::InvalidArgument);
        }
        let rep = lift(se_fixed_point(&Phi::awgn(delta, sigma2), &Mmse(c.into())))?;
        *rho_star = rep.rho_star;
        *v_star = rep.v_star;
        *error_free = rep.error_free;
        Ok(())
    })
}

/// `R_AC·K/(K+W-1)`.
#[no_mangle]
pub extern "C" fn ampcc_asc_rate(r_ac: f64, k: usize, w: usize) -> f64 {
    if k == 0 || w == 0 {
        return f64::NAN;
    }
    asc_rate(r_ac, k, w)
}

/// Rate after puncturing a fraction `f` of the symbols.
#[no_mangle]
pub extern "C" fn ampcc_puncture_rate(r: f64, f: f64) -> f64 {
    if !(0.0..1.0).contains(&f) {
        return f64::NAN;
    }
    puncture_rate(r, f)
}

/// AMP for uncoded symbols over AWGN. Writes the estimate (`n` entries) and the
/// number of iterations run.
///
/// # Safety
/// `y` must hold `m` doubles, `c_hat` must hold `n`, `iterations` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ampcc_amp_run(
    h: *const AmpccSensing,
    c: AmpccConstellation,
    y: *const f64,
    y_len: usize,
    sigma2: f64,
    t_max: usize,
    c_hat: *mut f64,
    c_len: usize,
    iterations: *mut usize,
) -> AmpccStatus {
    guard(|| {
        check(h.is_null() || y.is_null() || c_hat.is_null() || iterations.is_null())?;
        let op = &(*h).op;
        if c_len != op.n() {
            set_error(format!("estimate buffer has {c_len} entries, operator has {} columns", op.n()));
            return Err(AmpccStatus::Dimension);
        }
        let den = lift(Denoiser::new(CodeSpec::Uncoded, c.into()))?;
        let opts = ReconOpts::default().with_t_max(t_max);
        let ys = slice::from_raw_parts(y, y_len);
        let (est, tr) = lift(amp_run(ys, op, &den, sigma2, &opts, None))?;
        slice::from_raw_parts_mut(c_hat, c_len).copy_from_slice(&est);
        *iterations = tr.iterations;
        Ok(())
    })
}
