//! C ABI for psr-noise.
//!
//! Objects are opaque handles created by `*_new` functions and released by
//! the matching `*_free`. Every fallible call returns a `PsrStatus`; on
//! failure `psr_last_error` gives a message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::Matrix2;
use psr_noise::atom_model::{
    build_basis, dipole_matrices, AtomModel, AtomicConstants, DriveParams, LowerLevelDecay,
};
use psr_noise::propagate::{self, FieldCovariance, MediumParams};
use psr_noise::sweep::{self, NoiseSpectrumPoint, SweepConfig};
use psr_noise::trace_analysis::{self, CalibratedTrace};
use psr_noise::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    RankDeficient = 3,
    NumericalFailure = 4,
    Io = 5,
    Config = 6,
    TraceFormat = 7,
    OutOfRange = 8,
    Panic = 99,
}

/// Treatment of decay into the unaddressed F_g=1 level.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsrLowerLevel {
    Reservoir = 0,
    Recycle = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PsrNoiseExtrema {
    pub v_min: f64,
    pub v_max: f64,
    pub theta_min: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PsrNoisePoint {
    pub detuning_mhz: f64,
    pub omega_mhz: f64,
    pub cooperativity: f64,
    pub gamma: f64,
    pub power_mw: f64,
    pub v_min_db: f64,
    pub v_max_db: f64,
    pub theta_min_rad: f64,
    pub contrast_db: f64,
    /// Nonzero if the point failed; the values are then NaN.
    pub failed: i32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PsrTraceExtrema {
    pub min_db: f64,
    pub max_db: f64,
    pub raw_min_db: f64,
    pub raw_max_db: f64,
    pub fit_a: f64,
    pub fit_b: f64,
    pub fit_c: f64,
    pub fit_s: f64,
    pub fit_rms: f64,
    /// Nonzero if the fit failed and min/max are raw sample extrema.
    pub fallback: i32,
    /// Nonzero if min and max violate the uncertainty bound.
    pub heisenberg_warning: i32,
}

/// Opaque atomic model.
pub struct PsrModel {
    model: AtomModel,
    constants: AtomicConstants,
}

/// Opaque sweep: a parsed config and, once run, its rows.
pub struct PsrSweep {
    config: SweepConfig,
    rows: Vec<NoiseSpectrumPoint>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PsrStatus {
    match e {
        Error::RankDeficient { .. } => PsrStatus::RankDeficient,
        Error::NotSteady { .. }
        | Error::SingularResolvent { .. }
        | Error::SliceTooThick { .. }
        | Error::Unphysical { .. }
        | Error::NonHermitian(_) => PsrStatus::NumericalFailure,
        Error::Io { .. } => PsrStatus::Io,
        Error::Config { .. } => PsrStatus::Config,
        Error::TraceFormat(_) | Error::Csv(_) | Error::MetadataMismatch(_) | Error::TooFewSamples(_) => {
            PsrStatus::TraceFormat
        }
        _ => PsrStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PsrStatus, String)>) -> PsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PsrStatus::Panic
        }
    }
}

fn lib<T>(r: psr_noise::Result<T>) -> Result<T, (PsrStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (PsrStatus, String) {
    (PsrStatus::NullPointer, format!("{what} is null"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn psr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length, or 0
/// if there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn psr_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds the 87Rb D1 model with default constants.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn psr_model_new(lower: PsrLowerLevel, out: *mut *mut PsrModel) -> PsrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let constants = AtomicConstants::default();
        let basis = build_basis();
        let lower = match lower {
            PsrLowerLevel::Reservoir => LowerLevelDecay::Reservoir,
            PsrLowerLevel::Recycle => LowerLevelDecay::Recycle,
        };
        let model = lib(AtomModel::rb87_d1_with(&constants, &basis, &dipole_matrices(&basis), lower))?;
        *out = Box::into_raw(Box::new(PsrModel { model, constants }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from `psr_model_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn psr_model_free(model: *mut PsrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of internal states of the model.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn psr_model_dim(model: *const PsrModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.dim())
}

/// Propagates through a sample and writes the 2×2 quadrature covariance
/// (row-major, SQL units) to `out_cov`. Frequencies are in MHz.
///
/// # Safety
/// `model` must be a live handle and `out_cov` valid for 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn psr_propagate(
    model: *const PsrModel,
    rabi_gamma: f64,
    detuning_mhz: f64,
    omega_mhz: f64,
    cooperativity: f64,
    gamma_over_gamma: f64,
    n_slices: usize,
    out_cov: *mut f64,
) -> PsrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out_cov.is_null() {
            return Err(null("out_cov"));
        }
        let drive = DriveParams {
            rabi: rabi_gamma,
            detuning: m.constants.mhz_to_gamma(detuning_mhz),
            zeeman_shift: 0.0,
            analysis_freq: m.constants.mhz_to_gamma(omega_mhz),
        };
        let medium = MediumParams { cooperativity, n_slices, gamma: gamma_over_gamma };
        let v = lib(propagate::propagate_covariance(&m.model, &drive, &medium))?;
        let v = v.matrix();
        for (k, x) in [v[(0, 0)], v[(0, 1)], v[(1, 0)], v[(1, 1)]].into_iter().enumerate() {
            *out_cov.add(k) = x;
        }
        Ok(())
    })
}

/// Minimum and maximum quadrature variance of a row-major 2×2 covariance.
///
/// # Safety
/// `cov` must be valid for 4 doubles and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn psr_min_max_noise(cov: *const f64, out: *mut PsrNoiseExtrema) -> PsrStatus {
    guard(|| {
        if cov.is_null() || out.is_null() {
            return Err(null("cov or out"));
        }
        let c = std::slice::from_raw_parts(cov, 4);
        let v = lib(FieldCovariance::new(Matrix2::new(c[0], c[1], c[2], c[3])))?;
        let e = propagate::min_max_noise(&v);
        *out = PsrNoiseExtrema { v_min: e.v_min, v_max: e.v_max, theta_min: e.theta_min };
        Ok(())
    })
}

/// Rabi frequency in units of Γ for a beam of `power_mw` over `cross_section_cm2`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn psr_rabi_from_power(power_mw: f64, cross_section_cm2: f64, out: *mut f64) -> PsrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let gn = AtomicConstants::default().gamma_natural;
        *out = lib(propagate::rabi_from_power(power_mw, cross_section_cm2, gn))?;
        Ok(())
    })
}

/// Loads a sweep config file. The sweep is not run yet.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn psr_sweep_from_config(path: *const c_char, out: *mut *mut PsrSweep) -> PsrStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(null("path or out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (PsrStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let (config, _) = lib(psr_noise::cli_io::read_config(Path::new(path)))?;
        *out = Box::into_raw(Box::new(PsrSweep { config, rows: Vec::new() }));
        Ok(())
    })
}

/// Number of points the sweep produces.
///
/// # Safety
/// `sweep` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn psr_sweep_len(sweep: *const PsrSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.config.len())
}

/// Runs the sweep. Per-point failures are reported through
/// `PsrNoisePoint::failed`, not through the status.
///
/// # Safety
/// `sweep` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn psr_sweep_run(sweep: *mut PsrSweep) -> PsrStatus {
    guard(|| {
        let s = sweep.as_mut().ok_or_else(|| null("sweep"))?;
        s.rows = lib(sweep::run_sweep(&s.config))?;
        Ok(())
    })
}

/// Reads point `index` of a sweep that has been run.
///
/// # Safety
/// `sweep` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn psr_sweep_point(sweep: *const PsrSweep, index: usize, out: *mut PsrNoisePoint) -> PsrStatus {
    guard(|| {
        let s = sweep.as_ref().ok_or_else(|| null("sweep"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = s.rows.get(index).ok_or_else(|| {
            (PsrStatus::OutOfRange, format!("index {index} out of range ({} points computed)", s.rows.len()))
        })?;
        *out = PsrNoisePoint {
            detuning_mhz: r.detuning_mhz,
            omega_mhz: r.omega_mhz,
            cooperativity: r.cooperativity,
            gamma: r.gamma,
            power_mw: r.power_mw,
            v_min_db: r.v_min_db,
            v_max_db: r.v_max_db,
            theta_min_rad: r.theta_min,
            contrast_db: r.contrast(),
            failed: i32::from(r.error.is_some()),
        };
        Ok(())
    })
}

/// # Safety
/// `sweep` must be null or a handle from `psr_sweep_from_config` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn psr_sweep_free(sweep: *mut PsrSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// Fits a calibrated trace (dB relative to shot noise) and reports its extrema.
///
/// # Safety
/// `coords` and `db` must be valid for `n` doubles; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn psr_extract_extrema(
    coords: *const f64,
    db: *const f64,
    n: usize,
    out: *mut PsrTraceExtrema,
) -> PsrStatus {
    guard(|| {
        if coords.is_null() || db.is_null() || out.is_null() {
            return Err(null("coords, db or out"));
        }
        let x = std::slice::from_raw_parts(coords, n).to_vec();
        let y = std::slice::from_raw_parts(db, n).to_vec();
        let trace = lib(CalibratedTrace::new(x, y, 0.0))?;
        let e = lib(trace_analysis::extract_extrema(&trace))?;
        let f = e.fit.unwrap_or(trace_analysis::SinusoidFit { a: f64::NAN, b: f64::NAN, c: f64::NAN, s: f64::NAN, rms: f64::NAN });
        *out = PsrTraceExtrema {
            min_db: e.min_db,
            max_db: e.max_db,
            raw_min_db: e.raw_min_db,
            raw_max_db: e.raw_max_db,
            fit_a: f.a,
            fit_b: f.b,
            fit_c: f.c,
            fit_s: f.s,
            fit_rms: f.rms,
            fallback: i32::from(e.fallback),
            heisenberg_warning: i32::from(e.heisenberg_warning),
        };
        Ok(())
    })
}
