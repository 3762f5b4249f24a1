//! C ABI for the stereographic uniformity tests.
//!
//! Every function returns an [`SuStatus`]; results come back through out
//! pointers. On failure, `su_last_error_message` gives a description of the
//! most recent error on the calling thread.
//!
//! Samples are passed as row-major `n * (q + 1)` arrays of doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stereounif::coefficients::{self, KernelSpec};
use stereounif::distributions::{self, NullModel};
use stereounif::harness;
use stereounif::rng::RandomStream;
use stereounif::sample::SphericalSample;
use stereounif::samplers;
use stereounif::statistics::{self, TestStatistic};
use stereounif::Error;

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuStatus {
    Ok = 0,
    /// An argument was outside the domain of the function.
    Domain = 1,
    Config = 2,
    SingularKernel = 3,
    /// Two sample points coincide or are antipodal.
    Tie = 4,
    /// The asymptotic series does not exist (q = 2 untruncated).
    NonSummable = 5,
    Quadrature = 6,
    DerivativeOrder = 7,
    Envelope = 8,
    Overflow = 9,
    Infeasible = 10,
    Parse = 11,
    Cache = 12,
    Io = 13,
    NullPointer = 14,
    /// An internal panic was caught at the boundary.
    Panic = 15,
}

/// Null distribution of a statistic (opaque).
pub struct SuNullModel {
    inner: NullModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("nul removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn status_of(err: &Error) -> SuStatus {
    match err {
        Error::Domain { .. } => SuStatus::Domain,
        Error::Config(_) => SuStatus::Config,
        Error::SingularKernel { .. } => SuStatus::SingularKernel,
        Error::Tie { .. } => SuStatus::Tie,
        Error::NonSummable { .. } => SuStatus::NonSummable,
        Error::Quadrature { .. } => SuStatus::Quadrature,
        Error::DerivativeOrder { .. } => SuStatus::DerivativeOrder,
        Error::Envelope(_) => SuStatus::Envelope,
        Error::Overflow(_) => SuStatus::Overflow,
        Error::Infeasible { .. } => SuStatus::Infeasible,
        Error::Parse { .. } => SuStatus::Parse,
        Error::Cache { .. } => SuStatus::Cache,
        Error::Io(_) => SuStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SuStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SuStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed as `{name}`"));
            SuStatus::NullPointer
        }
        Err(panic) => {
            let detail = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {detail}"));
            SuStatus::Panic
        }
    }
}

fn write<T>(out: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    // SAFETY: non-null, caller guarantees it is valid for writes.
    unsafe { out.write(value) };
    Ok(())
}

/// # Safety
/// `points` must be null or valid for reads of `n * (q + 1)` doubles.
unsafe fn sample_from(points: *const f64, n: usize, q: usize) -> Result<SphericalSample, Failure> {
    if points.is_null() {
        return Err(Failure::Null("points"));
    }
    let len = n
        .checked_mul(q + 1)
        .ok_or(Failure::Lib(Error::Overflow("sample length")))?;
    let slice = std::slice::from_raw_parts(points, len);
    Ok(SphericalSample::new(slice.to_vec(), q)?)
}

fn spec(a: f64, q: usize, truncation: usize) -> Result<KernelSpec, Failure> {
    Ok(if truncation == 0 {
        KernelSpec::new(a, q)?
    } else {
        KernelSpec::truncated(a, q, truncation)?
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len` bytes) and returns the full message length excluding
/// the terminator. Returns 0 when there is no error. `buf` may be null to
/// query the length.
///
/// # Safety
/// `buf` must be null or valid for writes of `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn su_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn su_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Stereographic statistic `T_n(a)`.
///
/// # Safety
/// `points` must be valid for `n * (q + 1)` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn su_stat_tn(points: *const f64, n: usize, q: usize, a: f64, out: *mut f64) -> SuStatus {
    guard(|| {
        let sample = sample_from(points, n, q)?;
        KernelSpec::new(a, q)?;
        write(out, statistics::stat_tn(&sample, a)?, "out")
    })
}

/// Truncated statistic `T_{n,K}(a)` with `truncation >= 1` harmonics.
///
/// # Safety
/// As for [`su_stat_tn`].
#[no_mangle]
pub unsafe extern "C" fn su_stat_tnk(
    points: *const f64,
    n: usize,
    q: usize,
    a: f64,
    truncation: usize,
    out: *mut f64,
) -> SuStatus {
    guard(|| {
        let sample = sample_from(points, n, q)?;
        let spec = KernelSpec::truncated(a, q, truncation)?;
        write(out, statistics::stat_tnk(&sample, &spec)?, "out")
    })
}

/// Rayleigh statistic.
///
/// # Safety
/// As for [`su_stat_tn`].
#[no_mangle]
pub unsafe extern "C" fn su_stat_rayleigh(points: *const f64, n: usize, q: usize, out: *mut f64) -> SuStatus {
    guard(|| {
        let sample = sample_from(points, n, q)?;
        write(out, statistics::stat_rayleigh(&sample), "out")
    })
}

/// Bingham statistic.
///
/// # Safety
/// As for [`su_stat_tn`].
#[no_mangle]
pub unsafe extern "C" fn su_stat_bingham(points: *const f64, n: usize, q: usize, out: *mut f64) -> SuStatus {
    guard(|| {
        let sample = sample_from(points, n, q)?;
        write(out, statistics::stat_bingham(&sample), "out")
    })
}

/// Gegenbauer coefficient `b_k` of the kernel with parameter `a` on `S^q`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn su_gegenbauer_coef(k: usize, q: usize, a: f64, out: *mut f64) -> SuStatus {
    guard(|| {
        let spec = KernelSpec::new(a, q)?;
        write(out, coefficients::gegenbauer_coef(k, &spec), "out")
    })
}

/// Sobolev weight `w_k`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn su_sobolev_weight(k: usize, q: usize, a: f64, out: *mut f64) -> SuStatus {
    guard(|| {
        let spec = KernelSpec::new(a, q)?;
        write(out, coefficients::sobolev_weight(k, &spec), "out")
    })
}

/// Null expectation of the kernel between two independent uniform points.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn su_expected_h0(q: usize, a: f64, out: *mut f64) -> SuStatus {
    guard(|| {
        let spec = KernelSpec::new(a, q)?;
        write(out, coefficients::expected_h0(&spec), "out")
    })
}

/// Fills `out` (length `n * (q + 1)`) with `n` uniform points on `S^q`.
///
/// # Safety
/// `out` must be valid for `n * (q + 1)` writes.
#[no_mangle]
pub unsafe extern "C" fn su_sample_uniform(q: usize, n: usize, seed: u64, out: *mut f64) -> SuStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let mut rng = RandomStream::new(seed);
        let sample = samplers::sample_uniform_sphere(q, n, &mut rng)?;
        let data = sample.as_slice();
        ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
        Ok(())
    })
}

fn boxed(model: NullModel, out: *mut *mut SuNullModel) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    let handle = Box::into_raw(Box::new(SuNullModel { inner: model }));
    // SAFETY: checked non-null above.
    unsafe { out.write(handle) };
    Ok(())
}

/// Asymptotic null distribution of `T_n(a)` (`truncation = 0`) or
/// `T_{n,K}(a)` from `m` series draws. Release with [`su_null_model_free`].
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn su_null_model_asymptotic(
    q: usize,
    a: f64,
    truncation: usize,
    m: usize,
    seed: u64,
    out: *mut *mut SuNullModel,
) -> SuStatus {
    guard(|| {
        let spec = spec(a, q, truncation)?;
        let model = harness::asymptotic_null(&spec, m, &RandomStream::new(seed), None)?;
        boxed(model, out)
    })
}

/// Exact-n Monte Carlo null distribution from `m` uniform samples of size
/// `n`. Release with [`su_null_model_free`].
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn su_null_model_exact(
    q: usize,
    a: f64,
    truncation: usize,
    n: usize,
    m: usize,
    seed: u64,
    out: *mut *mut SuNullModel,
) -> SuStatus {
    guard(|| {
        let stat = TestStatistic::Stereo(spec(a, q, truncation)?);
        let model = distributions::sample_null_exact(stat, n, m, &RandomStream::new(seed))?;
        boxed(model, out)
    })
}

/// Monte Carlo p-value `(1 + #{draws >= t}) / (m + 1)`.
///
/// # Safety
/// `model` must come from a constructor above and not be freed; `out` must
/// be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn su_null_model_p_value(model: *const SuNullModel, t: f64, out: *mut f64) -> SuStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Failure::Null("model"))?;
        write(out, model.inner.p_value(t), "out")
    })
}

/// Upper-`alpha` critical value. `undersampled` (may be null) is set to 1
/// when fewer than 10 draws lie beyond it.
///
/// # Safety
/// As for [`su_null_model_p_value`]; `undersampled` null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn su_null_model_critical_value(
    model: *const SuNullModel,
    alpha: f64,
    out: *mut f64,
    undersampled: *mut i32,
) -> SuStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Failure::Null("model"))?;
        let c = model.inner.critical_value(alpha)?;
        write(out, c.value, "out")?;
        if !undersampled.is_null() {
            undersampled.write(i32::from(c.undersampled));
        }
        Ok(())
    })
}

/// Number of draws held by the model (0 for a null handle).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn su_null_model_draw_count(model: *const SuNullModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.m())
}

/// Releases a model. Null is a no-op.
///
/// # Safety
/// `model` must be null or a live handle not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn su_null_model_free(model: *mut SuNullModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
