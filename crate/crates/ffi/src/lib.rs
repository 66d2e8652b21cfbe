//! C ABI over the rcstruct simulator.
//!
//! Every fallible function returns an [`RcsStatus`]; on failure the message is
//! available from [`rcs_last_error`] on the same thread. Handles are opaque and
//! must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rcstruct::adaptation::eesm;
use rcstruct::channel::{rapp_pa, PaModel};
use rcstruct::harness::{compute_raw_ber, run_ber_sweep, DetectorKind, SimConfig, SweepResult};
use rcstruct::numerics::C64;
use rcstruct::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Numerical = 4,
    InvalidState = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcsDetector {
    Rcstruct = 0,
    Rcnet = 1,
    Lmmse = 2,
}

impl From<DetectorKind> for RcsDetector {
    fn from(d: DetectorKind) -> Self {
        match d {
            DetectorKind::Rcstruct => RcsDetector::Rcstruct,
            DetectorKind::Rcnet => RcsDetector::Rcnet,
            DetectorKind::Lmmse => RcsDetector::Lmmse,
        }
    }
}

/// One (Eb/N0, detector) result.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcsRow {
    pub ebn0_db: f64,
    pub detector: RcsDetector,
    pub ber: f64,
    pub raw_ber: f64,
    pub bits: u64,
    pub errors: u64,
    pub subframes: u64,
    pub seconds: f64,
}

/// Opaque simulation configuration.
pub struct RcsConfig {
    inner: SimConfig,
}

/// Opaque sweep result; keeps the configuration it was produced with.
pub struct RcsSweep {
    config: SimConfig,
    result: SweepResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> RcsStatus {
    match e {
        Error::InvalidConfig(_) | Error::Json(_) => RcsStatus::InvalidConfig,
        Error::InvalidDimension(_) | Error::InvalidInput(_) | Error::InvalidLength(_) => RcsStatus::InvalidArgument,
        Error::Numerical(_) => RcsStatus::Numerical,
        Error::NotTrained | Error::InvalidState(_) => RcsStatus::InvalidState,
        Error::Io(_) => RcsStatus::Io,
    }
}

struct Failure(RcsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RcsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RcsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RcsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            RcsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| Failure(RcsStatus::InvalidArgument, format!("{what} is not UTF-8: {e}")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rcs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rcs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_config_from_json(json: *const c_char, out: *mut *mut RcsConfig) -> RcsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = SimConfig::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(RcsConfig { inner: cfg }));
        Ok(())
    })
}

/// Loads a JSON configuration file; a relative CQI table path resolves against its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_config_load(path: *const c_char, out: *mut *mut RcsConfig) -> RcsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = SimConfig::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(RcsConfig { inner: cfg }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from `rcs_config_from_json`/`rcs_config_load` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rcs_config_free(cfg: *mut RcsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn edit_config(cfg: *mut RcsConfig, f: impl FnOnce(&mut SimConfig)) -> RcsStatus {
    guard(|| {
        let c = out_arg(cfg, "cfg")?;
        let mut next = c.inner.clone();
        f(&mut next);
        next.validate()?;
        c.inner = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn rcs_config_set_seed(cfg: *mut RcsConfig, seed: u64) -> RcsStatus {
    edit_config(cfg, |c| c.seed = seed)
}

/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn rcs_config_set_subframes(cfg: *mut RcsConfig, subframes: usize) -> RcsStatus {
    edit_config(cfg, |c| c.subframes_per_point = subframes)
}

/// When false, the seconds column is written as zero.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn rcs_config_set_timing(cfg: *mut RcsConfig, timing: bool) -> RcsStatus {
    edit_config(cfg, |c| c.timing = timing)
}

/// Replaces the Eb/N0 points (dB).
///
/// # Safety
/// `cfg` must be a live configuration handle; `ebn0_db` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn rcs_config_set_ebn0(cfg: *mut RcsConfig, ebn0_db: *const f64, n: usize) -> RcsStatus {
    let points = match slice_arg(ebn0_db, n, "ebn0_db") {
        Ok(s) => s.to_vec(),
        Err(Failure(status, msg)) => {
            set_error(msg);
            return status;
        }
    };
    edit_config(cfg, |c| c.ebn0_db = points)
}

/// Enables the power amplifier at the given input back-off, or disables it when `enabled` is false.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn rcs_config_set_pa(cfg: *mut RcsConfig, enabled: bool, ibo_db: f64) -> RcsStatus {
    edit_config(cfg, |c| {
        c.pa.enabled = enabled;
        if enabled {
            c.pa.ibo_db = Some(ibo_db);
        }
    })
}

/// Runs the full BER sweep described by `cfg`.
///
/// # Safety
/// `cfg` must be a live configuration handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_run_sweep(cfg: *const RcsConfig, out: *mut *mut RcsSweep) -> RcsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let result = run_ber_sweep(&cfg.inner)?;
        *out = Box::into_raw(Box::new(RcsSweep { config: cfg.inner.clone(), result }));
        Ok(())
    })
}

/// # Safety
/// `sweep` must come from `rcs_run_sweep` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rcs_sweep_free(sweep: *mut RcsSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// Number of rows, or 0 for NULL.
///
/// # Safety
/// `sweep` must be a live sweep handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rcs_sweep_row_count(sweep: *const RcsSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.result.rows.len())
}

/// # Safety
/// `sweep` must be a live sweep handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_sweep_row(sweep: *const RcsSweep, index: usize, out: *mut RcsRow) -> RcsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = sweep.as_ref().ok_or_else(|| null("sweep"))?;
        let r = s.result.rows.get(index).ok_or_else(|| {
            Failure(RcsStatus::InvalidArgument, format!("row {index} out of range ({} rows)", s.result.rows.len()))
        })?;
        *out = RcsRow {
            ebn0_db: r.ebn0_db,
            detector: r.detector.into(),
            ber: r.ber,
            raw_ber: r.raw_ber,
            bits: r.bits as u64,
            errors: r.errors as u64,
            subframes: r.subframes as u64,
            seconds: r.seconds,
        };
        Ok(())
    })
}

/// Writes the CSV (preamble, header and rows) NUL-terminated into `buf`.
/// `needed` receives the required size including the NUL; pass `buf = NULL`
/// and `cap = 0` to query it. Returns `RCS_STATUS_BUFFER_TOO_SMALL` when `cap`
/// is insufficient.
///
/// # Safety
/// `sweep` must be a live sweep handle; `buf` must hold `cap` bytes; `needed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_sweep_csv(
    sweep: *const RcsSweep,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> RcsStatus {
    guard(|| {
        let needed = out_arg(needed, "needed")?;
        let s = sweep.as_ref().ok_or_else(|| null("sweep"))?;
        let csv = s.result.to_csv(&s.config);
        *needed = csv.len() + 1;
        if buf.is_null() && cap == 0 {
            return Ok(());
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap < csv.len() + 1 {
            return Err(Failure(RcsStatus::BufferTooSmall, format!("CSV needs {} bytes, buffer holds {cap}", csv.len() + 1)));
        }
        ptr::copy_nonoverlapping(csv.as_ptr(), buf.cast::<u8>(), csv.len());
        *buf.add(csv.len()) = 0;
        Ok(())
    })
}

/// Rapp amplifier applied to one complex sample.
///
/// # Safety
/// `out_re` and `out_im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_rapp_pa(
    re: f64,
    im: f64,
    x_sat: f64,
    rho: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> RcsStatus {
    guard(|| {
        let (o_re, o_im) = (out_arg(out_re, "out_re")?, out_arg(out_im, "out_im")?);
        let pa = PaModel { enabled: true, x_sat, rho, ibo_db: None };
        pa.validate()?;
        let y = rapp_pa(C64::new(re, im), &pa);
        *o_re = y.re;
        *o_im = y.im;
        Ok(())
    })
}

/// Exponential effective SINR of `n` linear SINRs.
///
/// # Safety
/// `sinrs` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_eesm(sinrs: *const f64, n: usize, beta: f64, out: *mut f64) -> RcsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = eesm(slice_arg(sinrs, n, "sinrs")?, beta)?;
        Ok(())
    })
}

/// Bits-per-symbol weighted BER over `n` streams.
///
/// # Safety
/// `bers` and `bits_per_symbol` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_raw_ber(
    bers: *const f64,
    bits_per_symbol: *const u32,
    n: usize,
    out: *mut f64,
) -> RcsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let b = slice_arg(bers, n, "bers")?;
        let w: Vec<usize> = slice_arg(bits_per_symbol, n, "bits_per_symbol")?.iter().map(|&x| x as usize).collect();
        *out = compute_raw_ber(b, &w)?;
        Ok(())
    })
}
