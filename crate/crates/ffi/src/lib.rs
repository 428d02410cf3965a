//! C ABI over `ddstab`.
//!
//! Every entry point returns a [`DdstabStatus`]. On failure the message is
//! available from [`ddstab_last_error_message`] on the same thread. Objects
//! are opaque handles released with their `_free` function; strings returned
//! to the caller are released with [`ddstab_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ddstab::batching::Batch;
use ddstab::lmi::Objective;
use ddstab::pipeline::{self, DesignReport, ExperimentConfig, PlantSpec};
use ddstab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdstabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Dimension = 4,
    Numerical = 5,
    Alignment = 6,
    Identification = 7,
    SolverInconsistency = 8,
    Backend = 9,
    Io = 10,
    Parse = 11,
    /// The requested quantity does not exist (no gain, no certificate).
    NotAvailable = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdstabBatchKind {
    State = 0,
    Output = 1,
}

/// A loaded data batch.
pub struct DdstabBatch {
    inner: Batch,
}

/// A finished design and its report.
pub struct DdstabDesign {
    report: DesignReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> DdstabStatus {
    match err.root() {
        Error::Dimension(_) => DdstabStatus::Dimension,
        Error::NonFinite(_)
        | Error::Singular { .. }
        | Error::Numerical(_)
        | Error::Inconsistent { .. } => DdstabStatus::Numerical,
        Error::InvalidParameter(_) | Error::Assumption(_) | Error::Structural(_) => {
            DdstabStatus::InvalidArgument
        }
        Error::Alignment(_) => DdstabStatus::Alignment,
        Error::Identification { .. } => DdstabStatus::Identification,
        Error::SolverInconsistency(_) => DdstabStatus::SolverInconsistency,
        Error::Backend(_) => DdstabStatus::Backend,
        Error::Io(_) => DdstabStatus::Io,
        Error::Json(_) | Error::Format(_) => DdstabStatus::Parse,
        Error::Stage { .. } => DdstabStatus::Numerical,
    }
}

/// Run `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (DdstabStatus, String)>) -> DdstabStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DdstabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            DdstabStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (DdstabStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DdstabStatus, String) {
    (DdstabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DdstabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DdstabStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (DdstabStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (DdstabStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ddstab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ddstab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ddstab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a batch directory (CSV matrices plus `batch.json`).
///
/// # Safety
/// `dir` must be a valid C string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ddstab_batch_read_dir(
    dir: *const c_char,
    out: *mut *mut DdstabBatch,
) -> DdstabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let dir = str_arg(dir, "dir")?;
        let inner = Batch::read_dir(Path::new(dir)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(DdstabBatch { inner }));
        Ok(())
    })
}

/// # Safety
/// `batch` must come from [`ddstab_batch_read_dir`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ddstab_batch_free(batch: *mut DdstabBatch) {
    if !batch.is_null() {
        drop(Box::from_raw(batch));
    }
}

/// Kind and dimensions `n`, `m`, `N` of a batch.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddstab_batch_info(
    batch: *const DdstabBatch,
    kind: *mut DdstabBatchKind,
    n: *mut usize,
    m: *mut usize,
    samples: *mut usize,
) -> DdstabStatus {
    guard(|| {
        let b = ref_arg(batch, "batch")?;
        let (k, dims) = match &b.inner {
            Batch::State(s) => (DdstabBatchKind::State, (s.n(), s.m(), s.len())),
            Batch::Output(o) => (DdstabBatchKind::Output, (o.n(), 1, o.len())),
        };
        *out_arg(kind, "kind")? = k;
        *out_arg(n, "n")? = dims.0;
        *out_arg(m, "m")? = dims.1;
        *out_arg(samples, "samples")? = dims.2;
        Ok(())
    })
}

/// Design from a loaded batch. `plant_json` (a plant spec, may be null)
/// enables certification. `delta <= 0` selects the default margin.
///
/// # Safety
/// `batch` and `out` must be valid; `plant_json` null or a C string.
#[no_mangle]
pub unsafe extern "C" fn ddstab_design_from_batch(
    batch: *const DdstabBatch,
    plant_json: *const c_char,
    delta: c_double,
    out: *mut *mut DdstabDesign,
) -> DdstabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let b = ref_arg(batch, "batch")?;
        let truth: Option<PlantSpec> = if plant_json.is_null() {
            None
        } else {
            let s = str_arg(plant_json, "plant_json")?;
            Some(serde_json::from_str(s).map_err(|e| lib_err(e.into()))?)
        };
        let delta = if delta > 0.0 {
            delta
        } else {
            ddstab::lmi::DEFAULT_DELTA
        };
        let report = pipeline::design_from_batch_data(
            b.inner.clone(),
            Path::new("<memory>"),
            delta,
            Objective::Feasibility,
            truth.as_ref(),
        )
        .map_err(lib_err)?;
        *out = Box::into_raw(Box::new(DdstabDesign { report }));
        Ok(())
    })
}

/// Run a full design from a JSON experiment config (simulated plant or
/// batch directory).
///
/// # Safety
/// `config_json` must be a C string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ddstab_design_from_config_json(
    config_json: *const c_char,
    out: *mut *mut DdstabDesign,
) -> DdstabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let s = str_arg(config_json, "config_json")?;
        let cfg: ExperimentConfig = serde_json::from_str(s).map_err(|e| lib_err(e.into()))?;
        let report = pipeline::run(&cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(DdstabDesign { report }));
        Ok(())
    })
}

/// # Safety
/// `design` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ddstab_design_free(design: *mut DdstabDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// `1` if the LMI was solved, else `0`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddstab_design_solved(
    design: *const DdstabDesign,
    solved: *mut c_int,
) -> DdstabStatus {
    guard(|| {
        let d = ref_arg(design, "design")?;
        *out_arg(solved, "solved")? = d.report.lmi.solved() as c_int;
        Ok(())
    })
}

/// `1` if the closed loop was certified Hurwitz against ground truth.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddstab_design_certified(
    design: *const DdstabDesign,
    certified: *mut c_int,
) -> DdstabStatus {
    guard(|| {
        let d = ref_arg(design, "design")?;
        *out_arg(certified, "certified")? = d.report.certified as c_int;
        Ok(())
    })
}

/// Spectral abscissa of the certified closed loop; `NotAvailable` without
/// ground truth or gain.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddstab_design_abscissa(
    design: *const DdstabDesign,
    abscissa: *mut c_double,
) -> DdstabStatus {
    guard(|| {
        let d = ref_arg(design, "design")?;
        let a = d.report.gain.as_ref().and_then(|g| g.abscissa).ok_or((
            DdstabStatus::NotAvailable,
            "no certified closed loop".to_string(),
        ))?;
        *out_arg(abscissa, "abscissa")? = a;
        Ok(())
    })
}

/// Shape of the gain `K`; `NotAvailable` if the LMI was infeasible.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddstab_design_gain_shape(
    design: *const DdstabDesign,
    rows: *mut usize,
    cols: *mut usize,
) -> DdstabStatus {
    guard(|| {
        let d = ref_arg(design, "design")?;
        let g = d
            .report
            .gain
            .as_ref()
            .ok_or((DdstabStatus::NotAvailable, "no gain".to_string()))?;
        *out_arg(rows, "rows")? = g.k.nrows();
        *out_arg(cols, "cols")? = g.k.ncols();
        Ok(())
    })
}

/// Copy `K` row-major into `buf` of length `len`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ddstab_design_gain(
    design: *const DdstabDesign,
    buf: *mut c_double,
    len: usize,
) -> DdstabStatus {
    guard(|| {
        let d = ref_arg(design, "design")?;
        let g = d
            .report
            .gain
            .as_ref()
            .ok_or((DdstabStatus::NotAvailable, "no gain".to_string()))?;
        let need = g.k.len();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < need {
            return Err((
                DdstabStatus::BufferTooSmall,
                format!("gain needs {need} entries, buffer has {len}"),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        let cols = g.k.ncols();
        for i in 0..g.k.nrows() {
            for j in 0..cols {
                out[i * cols + j] = g.k[(i, j)];
            }
        }
        Ok(())
    })
}

/// Full report as JSON; free with [`ddstab_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddstab_design_report_json(
    design: *const DdstabDesign,
    out: *mut *mut c_char,
) -> DdstabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let d = ref_arg(design, "design")?;
        let json = d.report.to_json().map_err(lib_err)?;
        *out = CString::new(json)
            .map_err(|_| (DdstabStatus::Parse, "report contains NUL".to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Text summary; free with [`ddstab_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ddstab_design_summary(
    design: *const DdstabDesign,
    out: *mut *mut c_char,
) -> DdstabStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let d = ref_arg(design, "design")?;
        *out = CString::new(d.report.summary())
            .map_err(|_| (DdstabStatus::Parse, "summary contains NUL".to_string()))?
            .into_raw();
        Ok(())
    })
}
