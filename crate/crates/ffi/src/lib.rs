//! C ABI over `mpqr`.
//!
//! Every fallible call returns an [`MpqrStatus`]; on failure the message is
//! kept per thread and read with [`mpqr_last_error_message`]. Objects are
//! opaque handles released with their `_free` function. Matrices cross the
//! boundary as column-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mpqr::bounds::{self, Algorithm, BoundSpec, Regime};
use mpqr::harness::measure;
use mpqr::mixed;
use mpqr::qr::QrFactors;
use mpqr::{Error, FpFormat, Matrix, OverflowPolicy, PrecisionPair};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpqrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Overflow = 4,
    NotANumber = 5,
    RankDeficient = 6,
    Domain = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpqrFormat {
    Fp16 = 0,
    Fp32 = 1,
    Fp64 = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpqrAlgorithm {
    Hqr = 0,
    Bqr = 1,
    Tsqr = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpqrRegime {
    /// Everything in `precision`.
    Uniform = 0,
    /// Mixed inner products, everything else in `low`.
    Mixed2 = 1,
    /// High-precision panels with block-FMA updates; not available for HQR.
    Mixed3 = 2,
    /// Uniform in `high`, factors cast down to `low`.
    Castdown = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpqrPolicy {
    Signal = 0,
    Saturate = 1,
}

/// Algorithm and arithmetic selection.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MpqrMethod {
    pub algorithm: MpqrAlgorithm,
    /// Block size, BQR only.
    pub block_size: usize,
    /// Tree levels, TSQR only.
    pub levels: u32,
    pub regime: MpqrRegime,
    /// Working precision of the uniform regime.
    pub precision: MpqrFormat,
    pub low: MpqrFormat,
    pub high: MpqrFormat,
}

/// Opaque dense matrix.
pub struct MpqrMatrix(Matrix);

/// Opaque result of [`mpqr_factor`].
pub struct MpqrFactorization {
    q: MpqrMatrix,
    r: MpqrMatrix,
    saturations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MpqrStatus {
    match e {
        Error::Overflow { .. } => MpqrStatus::Overflow,
        Error::NotANumber => MpqrStatus::NotANumber,
        Error::ZeroVector | Error::RankDeficient(_) => MpqrStatus::RankDeficient,
        Error::InvalidLevels { .. } | Error::InvalidArgument(_) | Error::Parse(_) => {
            MpqrStatus::InvalidArgument
        }
        Error::Dimension(_) => MpqrStatus::Dimension,
        Error::Domain(_) => MpqrStatus::Domain,
        Error::Io(_) => MpqrStatus::Internal,
    }
}

/// Runs `f`, converting errors and panics to a status and recording the message.
fn guard(f: impl FnOnce() -> Result<(), (MpqrStatus, String)>) -> MpqrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MpqrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            MpqrStatus::Internal
        }
    }
}

fn lib<T>(r: mpqr::Result<T>) -> Result<T, (MpqrStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (MpqrStatus, String) {
    (MpqrStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or valid for reads.
unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (MpqrStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` must be null or valid for writes.
unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> Result<(), (MpqrStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

impl From<MpqrFormat> for FpFormat {
    fn from(f: MpqrFormat) -> FpFormat {
        match f {
            MpqrFormat::Fp16 => FpFormat::FP16,
            MpqrFormat::Fp32 => FpFormat::FP32,
            MpqrFormat::Fp64 => FpFormat::FP64,
        }
    }
}

impl From<MpqrPolicy> for OverflowPolicy {
    fn from(p: MpqrPolicy) -> OverflowPolicy {
        match p {
            MpqrPolicy::Signal => OverflowPolicy::Signal,
            MpqrPolicy::Saturate => OverflowPolicy::Saturate,
        }
    }
}

impl MpqrMethod {
    fn algorithm(&self) -> Algorithm {
        match self.algorithm {
            MpqrAlgorithm::Hqr => Algorithm::Hqr,
            MpqrAlgorithm::Bqr => Algorithm::Bqr { r: self.block_size },
            MpqrAlgorithm::Tsqr => Algorithm::Tsqr {
                levels: self.levels,
            },
        }
    }

    fn regime(&self) -> mpqr::Result<Regime> {
        if self.regime == MpqrRegime::Uniform {
            return Ok(Regime::Uniform(self.precision.into()));
        }
        let pair = PrecisionPair::new(self.low.into(), self.high.into())?;
        Ok(match self.regime {
            MpqrRegime::Mixed2 => Regime::Mixed2(pair),
            MpqrRegime::Mixed3 => Regime::Mixed3(pair),
            _ => Regime::HighThenCastdown(pair),
        })
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mpqr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `rows * cols` column-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpqr_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut MpqrMatrix,
) -> MpqrStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or((MpqrStatus::Dimension, "size overflows".to_string()))?;
        let values = std::slice::from_raw_parts(data, len).to_vec();
        let m = lib(Matrix::from_col_major(rows, cols, values))?;
        write_out(out, Box::into_raw(Box::new(MpqrMatrix(m))), "out")
    })
}

/// # Safety
/// `m` must be null or a matrix from [`mpqr_matrix_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mpqr_matrix_free(m: *mut MpqrMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Row count, or 0 for null.
///
/// # Safety
/// `m` must be null or a live matrix.
#[no_mangle]
pub unsafe extern "C" fn mpqr_matrix_rows(m: *const MpqrMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// Column count, or 0 for null.
///
/// # Safety
/// `m` must be null or a live matrix.
#[no_mangle]
pub unsafe extern "C" fn mpqr_matrix_cols(m: *const MpqrMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the entries column-major into `out`, which holds `len` doubles.
///
/// # Safety
/// `m` must be a live matrix; `out` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mpqr_matrix_copy(
    m: *const MpqrMatrix,
    out: *mut f64,
    len: usize,
) -> MpqrStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let data = m.0.as_col_major();
        if out.is_null() {
            return Err(null("out"));
        }
        if len < data.len() {
            return Err((
                MpqrStatus::Dimension,
                format!("buffer of {len} for {} entries", data.len()),
            ));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
        Ok(())
    })
}

/// Factors `a`; the result is released with [`mpqr_factorization_free`].
///
/// # Safety
/// `a` and `method` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpqr_factor(
    a: *const MpqrMatrix,
    method: *const MpqrMethod,
    policy: MpqrPolicy,
    out: *mut *mut MpqrFactorization,
) -> MpqrStatus {
    guard(|| {
        let a = deref(a, "a")?;
        let method = deref(method, "method")?;
        let regime = lib(method.regime())?;
        let f = lib(mixed::factor(
            &a.0,
            method.algorithm(),
            regime,
            policy.into(),
        ))?;
        let result = MpqrFactorization {
            q: MpqrMatrix(f.factors.q),
            r: MpqrMatrix(f.factors.r),
            saturations: f.saturations,
        };
        write_out(out, Box::into_raw(Box::new(result)), "out")
    })
}

/// The thin `Q`, owned by `f`.
///
/// # Safety
/// `f` must be null or a live factorization.
#[no_mangle]
pub unsafe extern "C" fn mpqr_factorization_q(f: *const MpqrFactorization) -> *const MpqrMatrix {
    f.as_ref().map_or(ptr::null(), |f| &f.q)
}

/// The square `R`, owned by `f`.
///
/// # Safety
/// `f` must be null or a live factorization.
#[no_mangle]
pub unsafe extern "C" fn mpqr_factorization_r(f: *const MpqrFactorization) -> *const MpqrMatrix {
    f.as_ref().map_or(ptr::null(), |f| &f.r)
}

/// Values clamped under the saturate policy.
///
/// # Safety
/// `f` must be null or a live factorization.
#[no_mangle]
pub unsafe extern "C" fn mpqr_factorization_saturations(f: *const MpqrFactorization) -> usize {
    f.as_ref().map_or(0, |f| f.saturations)
}

/// Relative backward error `‖A - QR‖_F / ‖A‖_F` and `‖QᵀQ - I‖_2`, in `f64`.
///
/// # Safety
/// `a` and `f` must be live; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpqr_factorization_errors(
    a: *const MpqrMatrix,
    f: *const MpqrFactorization,
    backward: *mut f64,
    orth: *mut f64,
) -> MpqrStatus {
    guard(|| {
        let (a, f) = (deref(a, "a")?, deref(f, "factorization")?);
        let factors = QrFactors {
            q: f.q.0.clone(),
            r: f.r.0.clone(),
        };
        let report = lib(measure::measure(&a.0, &factors, None))?;
        write_out(backward, report.backward, "backward")?;
        write_out(orth, report.orth, "orth")
    })
}

/// # Safety
/// `f` must be null or a factorization from [`mpqr_factor`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mpqr_factorization_free(f: *mut MpqrFactorization) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Normwise bound on `‖ΔQ‖_F` for an `m x n` factorization with constant `c`.
///
/// # Safety
/// `method` must be live; `value` and `stable` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpqr_bound_q(
    method: *const MpqrMethod,
    m: usize,
    n: usize,
    c: f64,
    value: *mut f64,
    stable: *mut bool,
) -> MpqrStatus {
    guard(|| {
        let method = deref(method, "method")?;
        let spec = BoundSpec::new(method.algorithm(), lib(method.regime())?, m, n).with_c(c);
        let b = lib(bounds::bound_q(&spec))?;
        write_out(value, b.value, "value")?;
        write_out(stable, b.stable, "stable")
    })
}

/// `γ = c k u / (1 - c k u)`; fails with `Domain` when `c k u >= 1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpqr_gamma(k: f64, u: f64, c: f64, out: *mut f64) -> MpqrStatus {
    guard(|| {
        let g = lib(bounds::gamma(k, u, c))?;
        write_out(out, g.value, "out")
    })
}

/// Rounds `x` to the nearest member of `format`, ties to even.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpqr_round_to_format(
    x: f64,
    format: MpqrFormat,
    policy: MpqrPolicy,
    out: *mut f64,
) -> MpqrStatus {
    guard(|| {
        let fmt: FpFormat = format.into();
        let r = lib(fmt.round(x, policy.into()))?;
        write_out(out, r, "out")
    })
}
