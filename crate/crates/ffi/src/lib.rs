//! C ABI for the push-sum rate toolkit.
//!
//! Conventions:
//! * every function returns a [`PsrStatus`]; results go through out-pointers;
//! * strings returned through `char**` are owned by the caller and must be
//!   released with [`psr_string_free`];
//! * [`PsrSimulation`] is an opaque handle created from the same JSON
//!   configuration document the CLI accepts, released with
//!   [`psr_simulation_free`];
//! * a human-readable message for the most recent failure on the current
//!   thread is available from [`psr_last_error_message`];
//! * undefined per-node ratios are marshalled as NaN (the library itself
//!   never produces NaN ratios).
//!
//! The generated header lives at `include/pushsum_rates.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use pushsum_rates::config::FileConfig;
use pushsum_rates::cones::{hilbert_distance, tau, ExtendedReal, NonNegMatrix, NonNegVector};
use pushsum_rates::error::Error;
use pushsum_rates::experiments::{check, run_rate_experiment};
use pushsum_rates::process_gen::StepSampler;
use pushsum_rates::protocol::{ProtocolState, PushSum};

/// Status codes returned by every API function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsrStatus {
    PsrOk = 0,
    /// A required pointer argument was null.
    PsrNullPointer = 1,
    /// Configuration or argument validation failed.
    PsrInvalidArgument = 2,
    /// Input outside the mathematical domain (zero vector, non-probability
    /// vector, missing witness structure).
    PsrDomainError = 3,
    /// The process delivers nothing (drop rate 1).
    PsrDegenerateProcess = 4,
    /// The product never became weakly primitive within the horizon.
    PsrNotPrimitive = 5,
    /// Any other runtime failure; see `psr_last_error_message`.
    PsrRuntimeError = 6,
    /// The argument was not valid UTF-8.
    PsrUtf8Error = 7,
    /// A panic was caught at the boundary.
    PsrPanic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> PsrStatus {
    match err {
        Error::InvalidConfig(_)
        | Error::InvalidTopology(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::DimensionMismatch { .. }
        | Error::InvalidEntry(_) => PsrStatus::PsrInvalidArgument,
        Error::ZeroVector
        | Error::ZeroMatrix
        | Error::NotProbabilityVector(_)
        | Error::WitnessUnavailable(_) => PsrStatus::PsrDomainError,
        Error::DegenerateProcess(_) => PsrStatus::PsrDegenerateProcess,
        Error::NotPrimitive { .. } => PsrStatus::PsrNotPrimitive,
        _ => PsrStatus::PsrRuntimeError,
    }
}

fn fail(err: &Error) -> PsrStatus {
    set_last_error(&err.to_string());
    status_of(err)
}

/// Runs a closure behind the panic boundary.
fn guarded(f: impl FnOnce() -> PsrStatus) -> PsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("panic caught at the FFI boundary");
            PsrStatus::PsrPanic
        }
    }
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, PsrStatus> {
    if ptr.is_null() {
        set_last_error("null string argument");
        return Err(PsrStatus::PsrNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("argument is not valid UTF-8");
        PsrStatus::PsrUtf8Error
    })
}

fn return_string(text: String, out: *mut *mut c_char) -> PsrStatus {
    let sanitized = text.replace('\0', " ");
    match CString::new(sanitized) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            PsrStatus::PsrOk
        }
        Err(_) => {
            set_last_error("result contained an interior NUL");
            PsrStatus::PsrRuntimeError
        }
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn psr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned through a `char**` out-parameter.
///
/// # Safety
/// `s` must be a pointer previously returned by this library and not yet
/// freed, or null (a no-op).
#[no_mangle]
pub unsafe extern "C" fn psr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Hilbert projective distance between two nonnegative vectors of length
/// `len`; `+inf` when the vectors lie on different faces of the cone.
///
/// # Safety
/// `x` and `y` must point to `len` readable doubles, `out` to a writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn psr_hilbert_distance(
    x: *const f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> PsrStatus {
    guarded(|| {
        let (Some(xs), Some(ys)) = (slice_arg(x, len), slice_arg(y, len)) else {
            set_last_error("null vector argument");
            return PsrStatus::PsrNullPointer;
        };
        if out.is_null() {
            set_last_error("null output pointer");
            return PsrStatus::PsrNullPointer;
        }
        let build = |v: &[f64]| NonNegVector::new_nonzero(v.to_vec());
        let (xv, yv) = match (build(xs), build(ys)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return fail(&e),
        };
        match hilbert_distance(&xv, &yv) {
            Ok(ExtendedReal::Finite(d)) => {
                *out = d;
                PsrStatus::PsrOk
            }
            Ok(ExtendedReal::Infinite) => {
                *out = f64::INFINITY;
                PsrStatus::PsrOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Birkhoff contraction coefficient of a row-major `dim × dim` nonnegative
/// matrix.
///
/// # Safety
/// `entries` must point to `dim * dim` readable doubles, `out` to a writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn psr_tau(entries: *const f64, dim: usize, out: *mut f64) -> PsrStatus {
    guarded(|| {
        let Some(es) = slice_arg(entries, dim * dim) else {
            set_last_error("null matrix argument");
            return PsrStatus::PsrNullPointer;
        };
        if out.is_null() {
            set_last_error("null output pointer");
            return PsrStatus::PsrNullPointer;
        }
        let m = match NonNegMatrix::from_entries(dim, es.to_vec()) {
            Ok(m) => m,
            Err(e) => return fail(&e),
        };
        match tau(&m) {
            Ok(t) => {
                *out = t;
                PsrStatus::PsrOk
            }
            Err(e) => fail(&e),
        }
    })
}

fn parse_config(json: &str) -> Result<pushsum_rates::ExperimentConfig, Error> {
    FileConfig::from_json(json)?.build()
}

/// Runs the full rate experiment for a JSON configuration document and
/// returns the report as JSON.
///
/// # Safety
/// `config_json` must be a NUL-terminated string, `out_json` a writable
/// pointer slot; the result must be freed with [`psr_string_free`].
#[no_mangle]
pub unsafe extern "C" fn psr_rates_run_json(
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PsrStatus {
    guarded(|| {
        let json = match str_arg(config_json) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if out_json.is_null() {
            set_last_error("null output pointer");
            return PsrStatus::PsrNullPointer;
        }
        let config = match parse_config(json) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        };
        match run_rate_experiment(&config) {
            Ok(report) => match serde_json::to_string_pretty(&report) {
                Ok(text) => return_string(text, out_json),
                Err(e) => fail(&Error::Json(e)),
            },
            Err(e) => fail(&e),
        }
    })
}

/// Verifies the rate-theory hypotheses for a JSON configuration document and
/// returns the verdict as JSON.
///
/// # Safety
/// As for [`psr_rates_run_json`].
#[no_mangle]
pub unsafe extern "C" fn psr_check_json(
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PsrStatus {
    guarded(|| {
        let json = match str_arg(config_json) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if out_json.is_null() {
            set_last_error("null output pointer");
            return PsrStatus::PsrNullPointer;
        }
        let config = match parse_config(json) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        };
        match check(&config.process) {
            Ok(report) => match serde_json::to_string_pretty(&report) {
                Ok(text) => return_string(text, out_json),
                Err(e) => fail(&Error::Json(e)),
            },
            Err(e) => fail(&e),
        }
    })
}

/// Opaque consensus simulation: a protocol instance, its state, and the
/// seeded step sampler from one JSON configuration.
pub struct PsrSimulation {
    protocol: PushSum,
    sampler: StepSampler,
    state: ProtocolState,
    mode: pushsum_rates::Mode,
    target: f64,
}

/// Creates a simulation from the JSON configuration document.
///
/// # Safety
/// `config_json` must be NUL-terminated; `out` must be a writable slot. The
/// handle must be released with [`psr_simulation_free`].
#[no_mangle]
pub unsafe extern "C" fn psr_simulation_new(
    config_json: *const c_char,
    out: *mut *mut PsrSimulation,
) -> PsrStatus {
    guarded(|| {
        let json = match str_arg(config_json) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if out.is_null() {
            set_last_error("null output pointer");
            return PsrStatus::PsrNullPointer;
        }
        let build = || -> Result<PsrSimulation, Error> {
            let config = parse_config(json)?;
            let protocol = config.process.protocol()?;
            let p = protocol.topology().node_count();
            let x0 = config.x0.resolve(p, config.process.seed)?;
            let w0 = config.w0.resolve(p, config.process.seed.wrapping_add(1))?;
            let state = ProtocolState::new(protocol.augmented(), &x0, &w0)?;
            let target = state.sum_x() / state.sum_w();
            let sampler = StepSampler::new(&config.process)?;
            Ok(PsrSimulation {
                protocol,
                sampler,
                state,
                mode: config.process.mode,
                target,
            })
        };
        match build() {
            Ok(sim) => {
                *out = Box::into_raw(Box::new(sim));
                PsrStatus::PsrOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Advances the simulation by `n_steps` sampled protocol steps.
///
/// # Safety
/// `sim` must be a live handle from [`psr_simulation_new`].
#[no_mangle]
pub unsafe extern "C" fn psr_simulation_step(sim: *mut PsrSimulation, n_steps: u64) -> PsrStatus {
    guarded(|| {
        let Some(sim) = sim.as_mut() else {
            set_last_error("null simulation handle");
            return PsrStatus::PsrNullPointer;
        };
        for _ in 0..n_steps {
            let outcome = sim.sampler.next_outcome();
            match sim.protocol.step_with(&sim.state, &outcome, sim.mode) {
                Ok(next) => sim.state = next,
                Err(e) => return fail(&e),
            }
        }
        PsrStatus::PsrOk
    })
}

/// Number of real (non-buffer) nodes.
///
/// # Safety
/// `sim` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psr_simulation_node_count(
    sim: *const PsrSimulation,
    out: *mut usize,
) -> PsrStatus {
    guarded(|| {
        let Some(sim) = sim.as_ref() else {
            set_last_error("null simulation handle");
            return PsrStatus::PsrNullPointer;
        };
        if out.is_null() {
            set_last_error("null output pointer");
            return PsrStatus::PsrNullPointer;
        }
        *out = sim.protocol.topology().node_count();
        PsrStatus::PsrOk
    })
}

/// Consensus target `Σx₀ / Σw₀`.
///
/// # Safety
/// `sim` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psr_simulation_target(
    sim: *const PsrSimulation,
    out: *mut f64,
) -> PsrStatus {
    guarded(|| {
        let Some(sim) = sim.as_ref() else {
            set_last_error("null simulation handle");
            return PsrStatus::PsrNullPointer;
        };
        if out.is_null() {
            set_last_error("null output pointer");
            return PsrStatus::PsrNullPointer;
        }
        *out = sim.target;
        PsrStatus::PsrOk
    })
}

/// Writes the per-node ratios `x_i / w_i` into `out`; nodes whose weight has
/// no support yet are written as NaN.
///
/// # Safety
/// `sim` must be a live handle and `out` must point to at least `len`
/// writable doubles with `len` equal to the node count.
#[no_mangle]
pub unsafe extern "C" fn psr_simulation_ratios(
    sim: *const PsrSimulation,
    out: *mut f64,
    len: usize,
) -> PsrStatus {
    guarded(|| {
        let Some(sim) = sim.as_ref() else {
            set_last_error("null simulation handle");
            return PsrStatus::PsrNullPointer;
        };
        if out.is_null() {
            set_last_error("null output pointer");
            return PsrStatus::PsrNullPointer;
        }
        let p = sim.protocol.topology().node_count();
        if len != p {
            set_last_error("ratio buffer length does not match the node count");
            return PsrStatus::PsrInvalidArgument;
        }
        let ratios = sim.protocol.ratios(&sim.state);
        let slice = std::slice::from_raw_parts_mut(out, len);
        for (dst, r) in slice.iter_mut().zip(ratios) {
            *dst = r.unwrap_or(f64::NAN);
        }
        PsrStatus::PsrOk
    })
}

/// Releases a simulation handle.
///
/// # Safety
/// `sim` must come from [`psr_simulation_new`] and not be freed twice; null
/// is a no-op.
#[no_mangle]
pub unsafe extern "C" fn psr_simulation_free(sim: *mut PsrSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
