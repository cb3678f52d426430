//! C ABI for the cat-code QEC analysis surface.
//!
//! Conventions:
//! - Every fallible entry point returns a [`CatqecStatus`];
//!   `CATQEC_STATUS_OK` is zero.
//! - On failure a thread-local message is stored and stays readable through
//!   [`catqec_last_error`] until the next failing call on the same thread.
//! - Handles ([`CatqecParams`], [`CatqecConfidenceTable`]) are opaque and
//!   must be released exactly once with their matching `_free` function.
//! - Panics never unwind across the boundary; they surface as
//!   `CATQEC_STATUS_INTERNAL`.
//!
//! The matching C header `include/catqec.h` is regenerated by the build
//! script, so it always reflects this file.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use catqec::analytics::{
    bayes_records, break_even_ratio, gain, loss_budget, optimize_cadence, ConfidenceTable,
    MonitoringRegime,
};
use catqec::controller::{record_frequencies, PlantKind};
use catqec::harness::ExperimentConfig;
use catqec::SystemParams;

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatqecStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Arguments were structurally valid but rejected by the model; details
    /// via `catqec_last_error`.
    InvalidArgument = 2,
    /// A caller-provided buffer is too small; the required size is reported
    /// through the documented out-parameter.
    BufferTooSmall = 3,
    /// An internal failure (caught panic); details via `catqec_last_error`.
    Internal = 4,
}

/// Opaque handle to a system-parameter set.
pub struct CatqecParams {
    inner: SystemParams,
}

/// Opaque handle to a Bayesian record-confidence table.
pub struct CatqecConfidenceTable {
    inner: ConfidenceTable,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail<E: std::fmt::Display>(status: CatqecStatus, error: E) -> CatqecStatus {
    let sanitized = error.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
    status
}

/// Keep panics on this side of the ABI.
fn guarded(body: impl FnOnce() -> CatqecStatus) -> CatqecStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(CatqecStatus::Internal, "internal panic"),
    }
}

/// The library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn catqec_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(catqec::VERSION).unwrap_or_default())
        .as_ptr()
}

/// Message describing the most recent failure on the calling thread (empty
/// before the first failure). The pointer stays valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn catqec_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Create a parameter handle holding the reference device values.
#[no_mangle]
pub extern "C" fn catqec_params_new() -> *mut CatqecParams {
    Box::into_raw(Box::new(CatqecParams { inner: SystemParams::default() }))
}

/// Create a parameter handle from a flat `key = value` document using the
/// same keys as the CLI configuration (for example `system.tau_s = 300`).
/// Unknown keys are rejected.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn catqec_params_parse(
    text: *const c_char,
    out: *mut *mut CatqecParams,
) -> CatqecStatus {
    guarded(|| {
        if text.is_null() || out.is_null() {
            return fail(CatqecStatus::NullPointer, "text and out must be non-null");
        }
        let text = match CStr::from_ptr(text).to_str() {
            Ok(text) => text,
            Err(e) => {
                return fail(CatqecStatus::InvalidArgument, format!("text is not UTF-8: {e}"))
            }
        };
        match ExperimentConfig::parse(text) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(CatqecParams { inner: config.params }));
                CatqecStatus::Ok
            }
            Err(e) => fail(CatqecStatus::InvalidArgument, e),
        }
    })
}

/// Release a parameter handle. A null pointer is ignored.
///
/// # Safety
/// `params` must be a pointer returned by `catqec_params_new` or
/// `catqec_params_parse` that has not already been freed.
#[no_mangle]
pub unsafe extern "C" fn catqec_params_free(params: *mut CatqecParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Lifetime gain `G` of the monitored cat under the handle's parameters.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn catqec_gain(params: *const CatqecParams, out: *mut f64) -> CatqecStatus {
    guarded(|| {
        let (Some(params), Some(out)) = (params.as_ref(), out.as_mut()) else {
            return fail(CatqecStatus::NullPointer, "params and out must be non-null");
        };
        match gain(&params.inner) {
            Ok(g) => {
                *out = g;
                CatqecStatus::Ok
            }
            Err(e) => fail(CatqecStatus::InvalidArgument, e),
        }
    })
}

/// Break-even ratio `2G/(3 n̄₀)` against the Fock-encoding reference.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn catqec_break_even_ratio(
    params: *const CatqecParams,
    nbar0: f64,
    out: *mut f64,
) -> CatqecStatus {
    guarded(|| {
        let (Some(params), Some(out)) = (params.as_ref(), out.as_mut()) else {
            return fail(CatqecStatus::NullPointer, "params and out must be non-null");
        };
        match break_even_ratio(&params.inner, nbar0) {
            Ok(ratio) => {
                *out = ratio;
                CatqecStatus::Ok
            }
            Err(e) => fail(CatqecStatus::InvalidArgument, e),
        }
    })
}

/// One cadence optimum; the wait schedule itself is copied into the caller
/// buffer of [`catqec_optimize_cadence`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CatqecCadence {
    /// Optimal number of parity-measurement steps.
    pub steps: usize,
    /// Mean expected photon jumps per step.
    pub lambda_per_step: f64,
    /// Predicted process fidelity, the product of the four factors below.
    pub predicted_f: f64,
    /// Ancilla-excitation survival.
    pub f_gamma_up: f64,
    /// Encode/decode floor.
    pub f_ed: f64,
    /// Monitored-evolution component.
    pub f_t: f64,
    /// Kerr-dephasing component.
    pub f_kd: f64,
}

/// Optimise the monitoring cadence for a total time.
///
/// Always fills `out` on success of the underlying optimisation; the
/// per-step waits are additionally copied into `schedule` when
/// `schedule_capacity >= out->steps`. When the buffer is too small the call
/// returns `CATQEC_STATUS_BUFFER_TOO_SMALL` with `out` filled, so
/// `out->steps` is the required capacity — pass a null `schedule` with
/// capacity 0 to probe.
///
/// # Safety
/// `params` and `out` must be valid; `schedule` must point to at least
/// `schedule_capacity` doubles, or be null when the capacity is 0.
#[no_mangle]
pub unsafe extern "C" fn catqec_optimize_cadence(
    params: *const CatqecParams,
    t_total: f64,
    nbar0: f64,
    out: *mut CatqecCadence,
    schedule: *mut f64,
    schedule_capacity: usize,
) -> CatqecStatus {
    guarded(|| {
        let (Some(params), Some(out)) = (params.as_ref(), out.as_mut()) else {
            return fail(CatqecStatus::NullPointer, "params and out must be non-null");
        };
        if schedule.is_null() && schedule_capacity > 0 {
            return fail(CatqecStatus::NullPointer, "schedule is null but has nonzero capacity");
        }
        let solution = match optimize_cadence(t_total, nbar0, &params.inner) {
            Ok(solution) => solution,
            Err(e) => return fail(CatqecStatus::InvalidArgument, e),
        };
        *out = CatqecCadence {
            steps: solution.s,
            lambda_per_step: solution.lambda_per_step,
            predicted_f: solution.predicted_f,
            f_gamma_up: solution.f_gamma_up,
            f_ed: solution.f_ed,
            f_t: solution.f_t,
            f_kd: solution.f_kd,
        };
        if schedule_capacity < solution.s {
            return fail(
                CatqecStatus::BufferTooSmall,
                format!("schedule needs {} slots, got {schedule_capacity}", solution.s),
            );
        }
        std::ptr::copy_nonoverlapping(solution.t_k.as_ptr(), schedule, solution.s);
        CatqecStatus::Ok
    })
}

/// Build the record-confidence table for a `steps`-step monitor. The handle
/// must be released with [`catqec_confidence_table_free`].
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn catqec_bayes_records(
    params: *const CatqecParams,
    nbar0: f64,
    t_w: f64,
    steps: usize,
    f_g: f64,
    f_e: f64,
    out: *mut *mut CatqecConfidenceTable,
) -> CatqecStatus {
    guarded(|| {
        let Some(params) = params.as_ref() else {
            return fail(CatqecStatus::NullPointer, "params must be non-null");
        };
        if out.is_null() {
            return fail(CatqecStatus::NullPointer, "out must be non-null");
        }
        match bayes_records(nbar0, t_w, steps, f_g, f_e, &params.inner) {
            Ok(table) => {
                *out = Box::into_raw(Box::new(CatqecConfidenceTable { inner: table }));
                CatqecStatus::Ok
            }
            Err(e) => fail(CatqecStatus::InvalidArgument, e),
        }
    })
}

/// Number of records in the table; 0 for a null handle.
///
/// # Safety
/// `table` must be null or a live confidence-table handle.
#[no_mangle]
pub unsafe extern "C" fn catqec_confidence_table_len(
    table: *const CatqecConfidenceTable,
) -> usize {
    table.as_ref().map_or(0, |table| table.inner.records.len())
}

/// Posterior single-step confidences. Either output may be null to skip it.
///
/// # Safety
/// `table` must be a live handle; non-null outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn catqec_confidence_table_confidences(
    table: *const CatqecConfidenceTable,
    q_g: *mut f64,
    q_e: *mut f64,
) -> CatqecStatus {
    guarded(|| {
        let Some(table) = table.as_ref() else {
            return fail(CatqecStatus::NullPointer, "table must be non-null");
        };
        if let Some(q) = q_g.as_mut() {
            *q = table.inner.q_g;
        }
        if let Some(q) = q_e.as_mut() {
            *q = table.inner.q_e;
        }
        CatqecStatus::Ok
    })
}

/// Copy record `index` out of the table: the NUL-terminated bit string
/// (`bits_capacity` must be at least steps + 1 bytes), its probability, and
/// its conditional success. `probability` and `conditional` may be null.
///
/// # Safety
/// `table` must be a live handle; `bits` must point to `bits_capacity`
/// writable bytes; non-null number outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn catqec_confidence_table_entry(
    table: *const CatqecConfidenceTable,
    index: usize,
    bits: *mut c_char,
    bits_capacity: usize,
    probability: *mut f64,
    conditional: *mut f64,
) -> CatqecStatus {
    guarded(|| {
        let Some(table) = table.as_ref() else {
            return fail(CatqecStatus::NullPointer, "table must be non-null");
        };
        let Some(record) = table.inner.records.get(index) else {
            return fail(
                CatqecStatus::InvalidArgument,
                format!("index {index} out of range for {} records", table.inner.records.len()),
            );
        };
        if bits.is_null() {
            return fail(CatqecStatus::NullPointer, "bits must be non-null");
        }
        let needed = record.bits.len() + 1;
        if bits_capacity < needed {
            return fail(
                CatqecStatus::BufferTooSmall,
                format!("bits needs {needed} bytes, got {bits_capacity}"),
            );
        }
        std::ptr::copy_nonoverlapping(
            record.bits.as_ptr().cast::<c_char>(),
            bits,
            record.bits.len(),
        );
        *bits.add(record.bits.len()) = 0;
        if let Some(p) = probability.as_mut() {
            *p = record.probability;
        }
        if let Some(c) = conditional.as_mut() {
            *c = record.conditional_success;
        }
        CatqecStatus::Ok
    })
}

/// Release a confidence-table handle. A null pointer is ignored.
///
/// # Safety
/// `table` must be a pointer returned by `catqec_bayes_records` that has not
/// already been freed.
#[no_mangle]
pub unsafe extern "C" fn catqec_confidence_table_free(table: *mut CatqecConfidenceTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Monitoring regime at a given measurement interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatqecRegime {
    /// The wait is within the instrument overhead (mapping + readout +
    /// feedback).
    Fast = 0,
    /// Waits long enough that coherence, not the instrument, dominates.
    Optimized = 1,
}

/// Per-channel lifetime gains, mirroring the CSV emitted by the CLI.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CatqecLossBudget {
    pub t_m: f64,
    pub nbar: f64,
    pub regime: CatqecRegime,
    /// Double jumps within one interval (uncorrectable).
    pub g_2eps: f64,
    /// Storage thermal excitations (uncorrectable).
    pub g_up_s: f64,
    /// Readout-error channel of the active regime.
    pub g_readout: f64,
    /// Ancilla-preparation channel of the active regime.
    pub g_up_a: f64,
    /// Kerr phase uncertainty of the corrected jump.
    pub g_kerr: f64,
    /// Forward propagation of ancilla decay.
    pub g_fp: f64,
    /// Fock-encoding reference lifetime (µs).
    pub tau_f01: f64,
}

/// Per-channel loss budget at mean photon number `nbar` and measurement
/// interval `t_m` (µs).
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn catqec_loss_budget(
    params: *const CatqecParams,
    nbar: f64,
    t_m: f64,
    out: *mut CatqecLossBudget,
) -> CatqecStatus {
    guarded(|| {
        let (Some(params), Some(out)) = (params.as_ref(), out.as_mut()) else {
            return fail(CatqecStatus::NullPointer, "params and out must be non-null");
        };
        match loss_budget(&params.inner, nbar, t_m) {
            Ok(budget) => {
                *out = CatqecLossBudget {
                    t_m: budget.t_m,
                    nbar: budget.nbar,
                    regime: match budget.regime {
                        MonitoringRegime::Fast => CatqecRegime::Fast,
                        MonitoringRegime::Optimized => CatqecRegime::Optimized,
                    },
                    g_2eps: budget.g_2eps,
                    g_up_s: budget.g_up_s,
                    g_readout: budget.g_readout,
                    g_up_a: budget.g_up_a,
                    g_kerr: budget.g_kerr,
                    g_fp: budget.g_fp,
                    tau_f01: budget.tau_f01,
                };
                CatqecStatus::Ok
            }
            Err(e) => fail(CatqecStatus::InvalidArgument, e),
        }
    })
}

/// Monte-Carlo record frequencies of the phenomenological plant over a wait
/// schedule of `steps` entries.
///
/// `frequencies` is indexed by the record read as a binary number with the
/// first step in the most significant bit, and needs `1 << steps` slots.
/// Results are deterministic in (`seed`, arguments) and independent of the
/// thread count.
///
/// # Safety
/// `params` must be a live handle; `schedule` must point to `steps` doubles;
/// `frequencies` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn catqec_record_frequencies(
    params: *const CatqecParams,
    nbar0: f64,
    schedule: *const f64,
    steps: usize,
    shots: usize,
    seed: u64,
    frequencies: *mut f64,
    capacity: usize,
) -> CatqecStatus {
    guarded(|| {
        let Some(params) = params.as_ref() else {
            return fail(CatqecStatus::NullPointer, "params must be non-null");
        };
        if schedule.is_null() || frequencies.is_null() {
            return fail(CatqecStatus::NullPointer, "schedule and frequencies must be non-null");
        }
        if steps == 0 || steps > 20 {
            return fail(
                CatqecStatus::InvalidArgument,
                format!("steps must be in 1..=20, got {steps}"),
            );
        }
        let needed = 1usize << steps;
        if capacity < needed {
            return fail(
                CatqecStatus::BufferTooSmall,
                format!("frequencies needs {needed} slots, got {capacity}"),
            );
        }
        let waits = std::slice::from_raw_parts(schedule, steps);
        match record_frequencies(
            nbar0,
            waits,
            &params.inner,
            PlantKind::Phenomenological,
            shots,
            seed,
        ) {
            Ok(map) => {
                let out = std::slice::from_raw_parts_mut(frequencies, needed);
                out.fill(0.0);
                for (bits, frequency) in &map {
                    if let Ok(code) = usize::from_str_radix(bits, 2) {
                        out[code] = *frequency;
                    }
                }
                CatqecStatus::Ok
            }
            Err(e) => fail(CatqecStatus::InvalidArgument, e),
        }
    })
}
