//! C ABI for `regulab`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns a
//! [`RegulabStatus`]; the message of the last failure on the calling thread is
//! available through [`regulab_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regulab::construction::Instance;
use regulab::energy::subspace_energy;
use regulab::field_space::{FieldVector, Subspace};
use regulab::fourier::{regularity_check, u2_norm, u3_norm, DensityFunction, PointFunction};
use regulab::qarl::{run_qarl, QarlConfig, QarlOutcome};
use regulab::quadratic::RegularityParams;
use regulab::{Budget, Error};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegulabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    BudgetExceeded = 3,
    Hypothesis = 4,
    Invariant = 5,
    Io = 6,
    Format = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// A real function on F_p^n with values in [0, 1].
pub struct RegulabFunction(DensityFunction);

/// A layered lower-bound instance.
pub struct RegulabInstance(Instance);

/// Result of a quadratic regularity run.
pub struct RegulabQarl(QarlOutcome);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> RegulabStatus {
    match err {
        Error::BudgetExceeded { .. } => RegulabStatus::BudgetExceeded,
        Error::Hypothesis(_) => RegulabStatus::Hypothesis,
        Error::Invariant(_) | Error::NotRefinement(_) | Error::SamplingFailed { .. } => {
            RegulabStatus::Invariant
        }
        Error::Io(_) => RegulabStatus::Io,
        Error::Format(_) | Error::Json(_) => RegulabStatus::Format,
        _ => RegulabStatus::InvalidParameter,
    }
}

struct Fail(RegulabStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RegulabStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> RegulabStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RegulabStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside regulab");
            RegulabStatus::Panic
        }
    }
}

fn budget() -> Result<Budget, Fail> {
    Ok(Budget::from_env()?)
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
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

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    let s = deref(p, what).map(|_| CStr::from_ptr(p))?;
    let s = s
        .to_str()
        .map_err(|_| Fail(RegulabStatus::InvalidParameter, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn basis_arg(p: u32, n: usize, rows: *const u32, count: usize) -> Result<Subspace, Fail> {
    let flat = slice(rows, count * n, "basis")?;
    let vectors: Vec<FieldVector> = flat
        .chunks(n.max(1))
        .take(count)
        .map(|row| FieldVector::new(p, row.iter().map(|&c| c % p)))
        .collect();
    Ok(Subspace::rref(p, n, &vectors)?)
}

/// Copies `text` into a caller buffer; `needed` receives the size including
/// the terminating zero.
unsafe fn write_text(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Fail> {
    let size = text.len() + 1;
    if !needed.is_null() {
        needed.write(size);
    }
    if buf.is_null() || len < size {
        return Err(Fail(
            RegulabStatus::BufferTooSmall,
            format!("buffer of {len} bytes, need {size}"),
        ));
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
    buf.add(text.len()).write(0);
    Ok(())
}

/// Library version as a static zero-terminated string.
#[no_mangle]
pub extern "C" fn regulab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn regulab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Function from `p^n` values in index order (`index = Σ x_k p^k`).
///
/// # Safety
/// `values` must point to `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_function_from_values(
    p: u32,
    n: usize,
    values: *const f64,
    len: usize,
    out: *mut *mut RegulabFunction,
) -> RegulabStatus {
    guard(|| {
        let values = slice(values, len, "values")?.to_vec();
        let f = DensityFunction::new(p, n, values)?;
        write_out(out, Box::into_raw(Box::new(RegulabFunction(f))), "out")
    })
}

/// Seeded uniformly random function.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_function_random(
    p: u32,
    n: usize,
    seed: u64,
    out: *mut *mut RegulabFunction,
) -> RegulabStatus {
    guard(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = DensityFunction::random(p, n, &mut rng, &budget()?)?;
        write_out(out, Box::into_raw(Box::new(RegulabFunction(f))), "out")
    })
}

/// Reads a `.fpfn` file.
///
/// # Safety
/// `path` must be a zero-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_function_read(
    path: *const c_char,
    out: *mut *mut RegulabFunction,
) -> RegulabStatus {
    guard(|| {
        let f = DensityFunction::read(path_arg(path, "path")?, &budget()?)?;
        write_out(out, Box::into_raw(Box::new(RegulabFunction(f))), "out")
    })
}

/// Writes a `.fpfn` file.
///
/// # Safety
/// `f` must be a live handle and `path` a zero-terminated string.
#[no_mangle]
pub unsafe extern "C" fn regulab_function_write(
    f: *const RegulabFunction,
    path: *const c_char,
) -> RegulabStatus {
    guard(|| {
        let f = deref(f, "f")?;
        f.0.write(path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of points `p^n`.
///
/// # Safety
/// `f` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn regulab_function_len(f: *const RegulabFunction) -> usize {
    f.as_ref().map_or(0, |f| f.0.values().len())
}

/// Copies the values into `buf`, which must hold `regulab_function_len` doubles.
///
/// # Safety
/// `f` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn regulab_function_values(
    f: *const RegulabFunction,
    buf: *mut f64,
    len: usize,
) -> RegulabStatus {
    guard(|| {
        let values = deref(f, "f")?.0.values();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < values.len() {
            return Err(Fail(
                RegulabStatus::BufferTooSmall,
                format!("buffer of {len} values, need {}", values.len()),
            ));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        Ok(())
    })
}

/// # Safety
/// `f` must be a handle from this library or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn regulab_function_free(f: *mut RegulabFunction) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Gowers `U²` norm.
///
/// # Safety
/// `f` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_u2_norm(f: *const RegulabFunction, out: *mut f64) -> RegulabStatus {
    guard(|| {
        let v = u2_norm(&deref(f, "f")?.0, &budget()?)?;
        write_out(out, v, "out")
    })
}

/// Gowers `U³` norm, by direct summation.
///
/// # Safety
/// `f` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_u3_norm(f: *const RegulabFunction, out: *mut f64) -> RegulabStatus {
    guard(|| {
        let v = u3_norm(&deref(f, "f")?.0, &budget()?)?;
        write_out(out, v, "out")
    })
}

/// Energy of `f` relative to the coset partition of the span of `rows`
/// basis vectors given row-major with `n` coordinates each.
///
/// # Safety
/// `f` must be a live handle, `basis` must hold `rows·n` values and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_subspace_energy(
    f: *const RegulabFunction,
    basis: *const u32,
    rows: usize,
    out: *mut f64,
) -> RegulabStatus {
    guard(|| {
        let f = &deref(f, "f")?.0;
        let h = basis_arg(f.p(), f.n(), basis, rows)?;
        let e = subspace_energy(f, &h, &budget()?)?;
        write_out(out, e, "out")
    })
}

/// Whether the coset partition of the span of `basis` is `eps`-regular for
/// `f`; the fraction of non-uniform cosets goes to `bad_fraction`.
///
/// # Safety
/// As for [`regulab_subspace_energy`]; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_regularity(
    f: *const RegulabFunction,
    basis: *const u32,
    rows: usize,
    eps: f64,
    regular: *mut bool,
    bad_fraction: *mut f64,
) -> RegulabStatus {
    guard(|| {
        let f = &deref(f, "f")?.0;
        let h = basis_arg(f.p(), f.n(), basis, rows)?;
        let report = regularity_check(f, &h, eps, &budget()?)?;
        write_out(regular, report.is_regular(), "regular")?;
        write_out(bad_fraction, report.bad_fraction, "bad_fraction")
    })
}

/// Builds the layered instance with `s = count` weights.
///
/// # Safety
/// `weights` must hold `count` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_instance_build(
    p: u32,
    n: usize,
    weights: *const f64,
    count: usize,
    seed: u64,
    out: *mut *mut RegulabInstance,
) -> RegulabStatus {
    guard(|| {
        let weights = slice(weights, count, "weights")?;
        let inst = Instance::build(p, n, weights, seed, &budget()?)?;
        write_out(out, Box::into_raw(Box::new(RegulabInstance(inst))), "out")
    })
}

/// Loads an instance manifest, re-deriving and checking its contents.
///
/// # Safety
/// `path` must be a zero-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_instance_load(
    path: *const c_char,
    out: *mut *mut RegulabInstance,
) -> RegulabStatus {
    guard(|| {
        let inst = Instance::load(path_arg(path, "path")?, &budget()?)?;
        write_out(out, Box::into_raw(Box::new(RegulabInstance(inst))), "out")
    })
}

/// Writes `<stem>.json` and `<stem>.fpfn` into `dir`.
///
/// # Safety
/// `inst` must be a live handle; `dir` and `stem` zero-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn regulab_instance_save(
    inst: *const RegulabInstance,
    dir: *const c_char,
    stem: *const c_char,
) -> RegulabStatus {
    guard(|| {
        let inst = deref(inst, "inst")?;
        let stem = path_arg(stem, "stem")?;
        inst.0.save(path_arg(dir, "dir")?, &stem.to_string_lossy())?;
        Ok(())
    })
}

/// Number of layers, or 0 for null.
///
/// # Safety
/// `inst` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn regulab_instance_layers(inst: *const RegulabInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.0.s())
}

/// Codimension `D_i` of the `i`-th chain subspace, `0 ≤ i ≤ s`.
///
/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_instance_codim(
    inst: *const RegulabInstance,
    i: usize,
    out: *mut usize,
) -> RegulabStatus {
    guard(|| {
        let inst = &deref(inst, "inst")?.0;
        if i > inst.s() {
            return Err(Fail(
                RegulabStatus::InvalidParameter,
                format!("layer {i} outside 0..={}", inst.s()),
            ));
        }
        write_out(out, inst.big_d(i), "out")
    })
}

/// A copy of the instance density as a new function handle.
///
/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_instance_density(
    inst: *const RegulabInstance,
    out: *mut *mut RegulabFunction,
) -> RegulabStatus {
    guard(|| {
        let f = deref(inst, "inst")?.0.f.clone();
        write_out(out, Box::into_raw(Box::new(RegulabFunction(f))), "out")
    })
}

/// # Safety
/// `inst` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn regulab_instance_free(inst: *mut RegulabInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Runs the quadratic regularity algorithm with the `paper-min` growth
/// functions. Resource exhaustion is not an error: inspect
/// [`regulab_qarl_success`].
///
/// # Safety
/// `f` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn regulab_qarl_run(
    f: *const RegulabFunction,
    delta: f64,
    out: *mut *mut RegulabQarl,
) -> RegulabStatus {
    guard(|| {
        let f = &deref(f, "f")?.0;
        let params = RegularityParams::paper_min(f.p(), delta)?;
        let outcome = run_qarl(f, &QarlConfig::new(params, budget()?))?;
        write_out(out, Box::into_raw(Box::new(RegulabQarl(outcome))), "out")
    })
}

/// # Safety
/// `run` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn regulab_qarl_success(run: *const RegulabQarl) -> bool {
    run.as_ref().is_some_and(|r| r.0.success)
}

/// Complexity of the returned factor.
///
/// # Safety
/// `run` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn regulab_qarl_complexity(run: *const RegulabQarl) -> usize {
    run.as_ref().map_or(0, |r| r.0.factor.complexity())
}

/// Number of outer iterations performed.
///
/// # Safety
/// `run` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn regulab_qarl_outer_steps(run: *const RegulabQarl) -> usize {
    run.as_ref().map_or(0, |r| r.0.outer_steps)
}

/// The factor as JSON.
///
/// # Safety
/// `run` must be a live handle; `buf` writable for `len` bytes or null to
/// query the size through `needed`.
#[no_mangle]
pub unsafe extern "C" fn regulab_qarl_factor_json(
    run: *const RegulabQarl,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> RegulabStatus {
    guard(|| {
        let run = deref(run, "run")?;
        let text = serde_json::to_string(&run.0.factor.record()).map_err(Error::from)?;
        write_text(&text, buf, len, needed)
    })
}

/// The iteration trace as JSON lines.
///
/// # Safety
/// As for [`regulab_qarl_factor_json`].
#[no_mangle]
pub unsafe extern "C" fn regulab_qarl_trace(
    run: *const RegulabQarl,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> RegulabStatus {
    guard(|| {
        let text = deref(run, "run")?.0.trace_jsonl()?;
        write_text(&text, buf, len, needed)
    })
}

/// # Safety
/// `run` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn regulab_qarl_free(run: *mut RegulabQarl) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
