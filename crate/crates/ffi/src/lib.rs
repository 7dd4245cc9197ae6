//! C ABI over `polarmix`.
//!
//! Objects are opaque handles created by `pm_*_new`-style constructors and
//! released with the matching `pm_*_free`. Every call returns a
//! [`PmStatus`]; on failure `pm_last_error` describes the most recent error
//! on the calling thread. Panics never cross the boundary.

use polarmix::codec::{decode_time, sc_decode, virtual_runtimes, CodeConfig, TaskMatrix, WorkerReturn};
use polarmix::dist::json::DistributionDoc;
use polarmix::dist::{Cdf, Distribution};
use polarmix::freezing::{failure_bound, laplace_freeze, quantile_freeze, FrozenSet};
use polarmix::polarization::{EvolutionConfig, PathCdf, BitPath};
use polarmix::simulator::{scheme_cdf_at, Scheme};
use polarmix::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    InvalidArgument = 1,
    Domain = 2,
    Shape = 3,
    Undecodable = 4,
    Io = 5,
    Parse = 6,
    NullPointer = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PmScheme {
    Uncoded = 0,
    Repetition = 1,
    Mds = 2,
}

pub struct PmDistribution {
    inner: Distribution,
}

pub struct PmFrozenSet {
    inner: FrozenSet,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> PmStatus {
    match e {
        Error::InvalidArgument { .. } | Error::InvalidDistribution(_) | Error::TooLarge(_) => {
            PmStatus::InvalidArgument
        }
        Error::Domain(_)
        | Error::AtAtom(_)
        | Error::HasAtoms
        | Error::Divergent(_)
        | Error::Unbounded(_)
        | Error::ZeroMass => PmStatus::Domain,
        Error::Shape(_) => PmStatus::Shape,
        Error::Undecodable { .. } => PmStatus::Undecodable,
        Error::Io(_) => PmStatus::Io,
        Error::Parse(_) => PmStatus::Parse,
    }
}

struct Fail(PmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PmStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            PmStatus::Internal
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(PmStatus::Parse, format!("{what}: {e}")))
}

// Copy `s` plus a NUL into `buf`; `needed` always receives the full size.
unsafe fn write_text(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Fail> {
    let bytes = s.as_bytes();
    if let Some(n) = needed.as_mut() {
        *n = bytes.len() + 1;
    }
    if buf.is_null() || len < bytes.len() + 1 {
        return Err(Fail(PmStatus::BufferTooSmall, format!("need {} bytes", bytes.len() + 1)));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
    *buf.add(bytes.len()) = 0;
    Ok(())
}

/// Copy the calling thread's last error message into `buf`.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes; `needed` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn pm_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> PmStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match write_text(&msg, buf, len, needed) {
        Ok(()) => PmStatus::Ok,
        Err(Fail(s, _)) => s,
    }
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// # Safety
/// `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_distribution_uniform(a: f64, b: f64, result: *mut *mut PmDistribution) -> PmStatus {
    guard(|| {
        let r = out(result, "result")?;
        *r = boxed(PmDistribution { inner: Distribution::uniform(a, b)? });
        Ok(())
    })
}

/// # Safety
/// `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_distribution_exponential(mean: f64, result: *mut *mut PmDistribution) -> PmStatus {
    guard(|| {
        let r = out(result, "result")?;
        *r = boxed(PmDistribution { inner: Distribution::exponential(mean)? });
        Ok(())
    })
}

/// Parse a distribution JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_distribution_from_json(
    json: *const c_char,
    result: *mut *mut PmDistribution,
) -> PmStatus {
    guard(|| {
        let r = out(result, "result")?;
        let doc = DistributionDoc::parse(text(json, "json")?)?;
        *r = boxed(PmDistribution { inner: doc.to_runtime()?.into() });
        Ok(())
    })
}

/// Empirical law of `len` samples.
///
/// # Safety
/// `samples` must point to `len` doubles; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_distribution_from_samples(
    samples: *const f64,
    len: usize,
    result: *mut *mut PmDistribution,
) -> PmStatus {
    guard(|| {
        let r = out(result, "result")?;
        let s = slice(samples, len, "samples")?;
        *r = boxed(PmDistribution { inner: Distribution::from_samples(s)? });
        Ok(())
    })
}

/// # Safety
/// `d` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pm_distribution_free(d: *mut PmDistribution) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a live handle; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_distribution_cdf(d: *const PmDistribution, t: f64, value: *mut f64) -> PmStatus {
    guard(|| {
        let d = handle(d, "distribution")?;
        *out(value, "value")? = d.inner.eval_cdf(t)?;
        Ok(())
    })
}

/// # Safety
/// `d` must be a live handle; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_distribution_quantile(d: *const PmDistribution, u: f64, value: *mut f64) -> PmStatus {
    guard(|| {
        let d = handle(d, "distribution")?;
        *out(value, "value")? = d.inner.quantile(u)?;
        Ok(())
    })
}

/// # Safety
/// `d` must be a live handle; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_distribution_mean(d: *const PmDistribution, value: *mut f64) -> PmStatus {
    guard(|| {
        let d = handle(d, "distribution")?;
        *out(value, "value")? = d.inner.mean()?;
        Ok(())
    })
}

/// `E[e^{λT}]`.
///
/// # Safety
/// `d` must be a live handle; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_distribution_laplace(d: *const PmDistribution, lambda: f64, value: *mut f64) -> PmStatus {
    guard(|| {
        let d = handle(d, "distribution")?;
        *out(value, "value")? = d.inner.laplace_transform(lambda)?;
        Ok(())
    })
}

/// `F_{n,index}(t)` of the depth-`depth` virtual worker `index`.
///
/// # Safety
/// `d` must be a live handle; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_leaf_cdf(
    d: *const PmDistribution,
    depth: usize,
    index: usize,
    t: f64,
    value: *mut f64,
) -> PmStatus {
    guard(|| {
        let d = handle(d, "distribution")?;
        let path = BitPath::from_index(index, depth)?;
        *out(value, "value")? = PathCdf::new(&d.inner, &path).cdf(t);
        Ok(())
    })
}

/// Frozen set keeping the `⌊rate · 2^depth⌋` indices most likely finished
/// by the `rate` quantile.
///
/// # Safety
/// `d` must be a live handle; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_frozen_quantile(
    d: *const PmDistribution,
    depth: usize,
    rate: f64,
    result: *mut *mut PmFrozenSet,
) -> PmStatus {
    guard(|| {
        let d = handle(d, "distribution")?;
        let r = out(result, "result")?;
        *r = boxed(PmFrozenSet { inner: quantile_freeze(&d.inner, depth, rate)? });
        Ok(())
    })
}

/// # Safety
/// `d` must be a live handle; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_frozen_laplace(
    d: *const PmDistribution,
    depth: usize,
    rate: f64,
    lambda: f64,
    result: *mut *mut PmFrozenSet,
) -> PmStatus {
    guard(|| {
        let d = handle(d, "distribution")?;
        let r = out(result, "result")?;
        let f = laplace_freeze(&d.inner, depth, rate, lambda, &EvolutionConfig::default())?;
        *r = boxed(PmFrozenSet { inner: f });
        Ok(())
    })
}

/// # Safety
/// `frozen` must point to `len` indices; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_frozen_manual(
    depth: usize,
    frozen: *const usize,
    len: usize,
    result: *mut *mut PmFrozenSet,
) -> PmStatus {
    guard(|| {
        let r = out(result, "result")?;
        let idx = slice(frozen, len, "frozen")?.to_vec();
        *r = boxed(PmFrozenSet { inner: FrozenSet::manual(depth, idx)? });
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_frozen_from_json(json: *const c_char, result: *mut *mut PmFrozenSet) -> PmStatus {
    guard(|| {
        let r = out(result, "result")?;
        *r = boxed(PmFrozenSet { inner: FrozenSet::from_json(text(json, "json")?)? });
        Ok(())
    })
}

/// Serialize to JSON. `needed` receives the buffer size including the NUL
/// even when `buf` is too small.
///
/// # Safety
/// `f` must be a live handle; `buf` must be null or hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pm_frozen_to_json(
    f: *const PmFrozenSet,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> PmStatus {
    guard(|| write_text(&handle(f, "frozen set")?.inner.to_json(), buf, len, needed))
}

/// # Safety
/// `f` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_frozen_info(
    f: *const PmFrozenSet,
    workers: *mut usize,
    data_blocks: *mut usize,
) -> PmStatus {
    guard(|| {
        let f = handle(f, "frozen set")?;
        *out(workers, "workers")? = f.inner.workers();
        *out(data_blocks, "data_blocks")? = f.inner.k();
        Ok(())
    })
}

/// Write 1 for frozen and 0 for data indices into `mask[0..workers]`.
///
/// # Safety
/// `f` must be a live handle; `mask` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pm_frozen_mask(f: *const PmFrozenSet, mask: *mut u8, len: usize) -> PmStatus {
    guard(|| {
        let f = handle(f, "frozen set")?;
        if len != f.inner.workers() {
            return Err(Fail(PmStatus::Shape, format!("mask needs {} entries", f.inner.workers())));
        }
        let m = slice_mut(mask, len, "mask")?;
        for (i, slot) in m.iter_mut().enumerate() {
            *slot = f.inner.is_frozen(i) as u8;
        }
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_frozen_free(f: *mut PmFrozenSet) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Union bound on `P[decode time > t]`.
///
/// # Safety
/// Handles must be live; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_failure_bound(
    d: *const PmDistribution,
    f: *const PmFrozenSet,
    t: f64,
    value: *mut f64,
) -> PmStatus {
    guard(|| {
        let d = handle(d, "distribution")?;
        let f = handle(f, "frozen set")?;
        *out(value, "value")? = failure_bound(&d.inner, &f.inner, t);
        Ok(())
    })
}

/// Virtual runtimes by family index.
///
/// # Safety
/// `physical` and `virtual_out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pm_virtual_runtimes(physical: *const f64, len: usize, virtual_out: *mut f64) -> PmStatus {
    guard(|| {
        let t = slice(physical, len, "physical")?;
        let v = virtual_runtimes(t)?;
        slice_mut(virtual_out, len, "virtual_out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// # Safety
/// `f` must be a live handle; `physical` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pm_decode_time(
    f: *const PmFrozenSet,
    physical: *const f64,
    len: usize,
    value: *mut f64,
) -> PmStatus {
    guard(|| {
        let f = handle(f, "frozen set")?;
        *out(value, "value")? = decode_time(slice(physical, len, "physical")?, &f.inner)?;
        Ok(())
    })
}

/// Encode `K` row-major `rows × cols` data blocks into `N` coded blocks.
///
/// # Safety
/// `data` must hold `K · rows · cols` doubles and `coded` `N · rows · cols`.
#[no_mangle]
pub unsafe extern "C" fn pm_encode(
    f: *const PmFrozenSet,
    data: *const f64,
    rows: usize,
    cols: usize,
    coded: *mut f64,
) -> PmStatus {
    guard(|| {
        let f = handle(f, "frozen set")?;
        let code = CodeConfig::new(f.inner.clone());
        let block = rows * cols;
        let input = slice(data, code.k() * block, "data")?;
        let blocks: Vec<TaskMatrix> = input
            .chunks_exact(block.max(1))
            .take(code.k())
            .map(|c| TaskMatrix::new(rows, cols, c.to_vec()))
            .collect::<Result<_, _>>()?;
        let x = code.encode_data(&blocks)?;
        let dst = slice_mut(coded, code.workers() * block, "coded")?;
        for (chunk, m) in dst.chunks_exact_mut(block.max(1)).zip(&x) {
            chunk.copy_from_slice(m.data());
        }
        Ok(())
    })
}

/// Decode worker results. `present[i]` is nonzero when worker `i`
/// returned; `times` may be null, in which case returned workers count as
/// finishing at time 0. Recovered data blocks go to `data` and the decode
/// time to `time` (if non-null).
///
/// # Safety
/// `results` must hold `N · rows · cols` doubles, `present` `N` bytes,
/// `times` null or `N` doubles, `data` `K · rows · cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn pm_decode(
    f: *const PmFrozenSet,
    results: *const f64,
    present: *const u8,
    times: *const f64,
    rows: usize,
    cols: usize,
    data: *mut f64,
    time: *mut f64,
) -> PmStatus {
    guard(|| {
        let f = handle(f, "frozen set")?;
        let code = CodeConfig::new(f.inner.clone());
        let n = code.workers();
        let block = rows * cols;
        let res = slice(results, n * block, "results")?;
        let mask = slice(present, n, "present")?;
        let ts = if times.is_null() { None } else { Some(slice(times, n, "times")?) };
        let returns: Vec<WorkerReturn> = (0..n)
            .map(|i| {
                if mask[i] == 0 {
                    return Ok(WorkerReturn::missing(i));
                }
                let m = TaskMatrix::new(rows, cols, res[i * block..(i + 1) * block].to_vec())?;
                Ok(WorkerReturn::arrived(i, m, ts.map_or(0.0, |t| t[i])))
            })
            .collect::<Result<_, Error>>()?;
        let decoded = sc_decode(&returns, &code)?;
        let dst = slice_mut(data, code.k() * block, "data")?;
        for (chunk, m) in dst.chunks_exact_mut(block.max(1)).zip(decoded.data()) {
            chunk.copy_from_slice(m.data());
        }
        if let Some(t) = time.as_mut() {
            *t = decoded.decode_time;
        }
        Ok(())
    })
}

/// Closed-form scheme CDF given `z = F(t)`.
///
/// # Safety
/// `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_scheme_cdf(
    scheme: PmScheme,
    z: f64,
    workers: usize,
    data_blocks: usize,
    value: *mut f64,
) -> PmStatus {
    guard(|| {
        let s = match scheme {
            PmScheme::Uncoded => Scheme::Uncoded,
            PmScheme::Repetition => Scheme::Repetition,
            PmScheme::Mds => Scheme::Mds,
        };
        *out(value, "value")? = scheme_cdf_at(s, z, workers, data_blocks)?;
        Ok(())
    })
}
