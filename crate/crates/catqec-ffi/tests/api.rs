//! End-to-end exercise of the C surface: handle lifecycles, status codes,
//! buffer-size probing, last-error reporting, and the generated header.

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use catqec_ffi::*;

unsafe fn c_str<'a>(ptr: *const c_char) -> &'a str {
    assert!(!ptr.is_null());
    CStr::from_ptr(ptr).to_str().expect("C string is not UTF-8")
}

fn last_error() -> String {
    unsafe { c_str(catqec_last_error()).to_owned() }
}

#[test]
fn version_is_a_dotted_static_string() {
    let version = unsafe { c_str(catqec_version()) };
    assert!(version.contains('.'), "unexpected version {version:?}");
    // The pointer is static: a second call must agree.
    assert_eq!(version, unsafe { c_str(catqec_version()) });
}

#[test]
fn default_params_reproduce_the_reference_gain() {
    let params = catqec_params_new();
    assert!(!params.is_null());

    let mut g = 0.0;
    assert_eq!(unsafe { catqec_gain(params, &mut g) }, CatqecStatus::Ok);
    assert!((g - 4.958346).abs() < 1e-3, "gain {g}");

    let mut ratio = 0.0;
    assert_eq!(
        unsafe { catqec_break_even_ratio(params, 2.0, &mut ratio) },
        CatqecStatus::Ok
    );
    assert!((ratio - 1.652782).abs() < 1e-3, "break-even ratio {ratio}");
    assert!((ratio - 2.0 * g / 6.0).abs() < 1e-12);

    unsafe { catqec_params_free(params) };
}

#[test]
fn parsed_params_override_the_defaults() {
    let text = CString::new("system.t2 = 12\n").unwrap();
    let mut parsed = ptr::null_mut();
    assert_eq!(
        unsafe { catqec_params_parse(text.as_ptr(), &mut parsed) },
        CatqecStatus::Ok
    );
    assert!(!parsed.is_null());

    let defaults = catqec_params_new();
    let (mut g_parsed, mut g_default) = (0.0, 0.0);
    unsafe {
        assert_eq!(catqec_gain(parsed, &mut g_parsed), CatqecStatus::Ok);
        assert_eq!(catqec_gain(defaults, &mut g_default), CatqecStatus::Ok);
        catqec_params_free(parsed);
        catqec_params_free(defaults);
    }
    // A shorter ancilla T2 degrades the parity meter and with it the gain.
    assert!(
        g_parsed > 0.0 && g_parsed < g_default,
        "gain {g_parsed} should drop below the default {g_default}"
    );
}

#[test]
fn unknown_keys_are_rejected_and_named() {
    let text = CString::new("bogus = 1\n").unwrap();
    let mut parsed = ptr::null_mut();
    assert_eq!(
        unsafe { catqec_params_parse(text.as_ptr(), &mut parsed) },
        CatqecStatus::InvalidArgument
    );
    assert!(parsed.is_null());
    assert!(last_error().contains("bogus"), "last error {:?}", last_error());
}

#[test]
fn cadence_buffer_protocol_probes_then_fills() {
    let params = catqec_params_new();
    let mut out = CatqecCadence {
        steps: 0,
        lambda_per_step: 0.0,
        predicted_f: 0.0,
        f_gamma_up: 0.0,
        f_ed: 0.0,
        f_t: 0.0,
        f_kd: 0.0,
    };

    // Probe with an empty buffer: the status flags the short buffer but the
    // summary is already filled, so `steps` is the required capacity.
    let status =
        unsafe { catqec_optimize_cadence(params, 110.0, 2.0, &mut out, ptr::null_mut(), 0) };
    assert_eq!(status, CatqecStatus::BufferTooSmall);
    assert_eq!(out.steps, 6);

    let mut schedule = vec![0.0; out.steps];
    let status = unsafe {
        catqec_optimize_cadence(params, 110.0, 2.0, &mut out, schedule.as_mut_ptr(), schedule.len())
    };
    assert_eq!(status, CatqecStatus::Ok);
    assert_eq!(out.steps, 6);
    let total: f64 = schedule.iter().sum();
    assert!((total - 110.0).abs() < 1e-9, "schedule sums to {total}");
    assert!(schedule.iter().all(|&t| t > 0.0));
    let product = out.f_gamma_up * out.f_ed * out.f_t * out.f_kd;
    assert!((out.predicted_f - product).abs() < 1e-12);

    unsafe { catqec_params_free(params) };
}

#[test]
fn confidence_table_round_trips_records() {
    let params = catqec_params_new();
    let mut table = ptr::null_mut();
    let status =
        unsafe { catqec_bayes_records(params, 3.0, 13.8, 2, 0.983, 0.971, &mut table) };
    assert_eq!(status, CatqecStatus::Ok);

    assert_eq!(unsafe { catqec_confidence_table_len(table) }, 4);

    let (mut q_g, mut q_e) = (0.0, 0.0);
    assert_eq!(
        unsafe { catqec_confidence_table_confidences(table, &mut q_g, &mut q_e) },
        CatqecStatus::Ok
    );
    assert!((q_g - 0.994869).abs() < 1e-4, "q_g {q_g}");
    assert!((q_e - 0.908968).abs() < 1e-4, "q_e {q_e}");

    let mut bits = [0 as c_char; 3];
    let mut total = 0.0;
    let mut seen = Vec::new();
    for index in 0..4 {
        let (mut p, mut c) = (0.0, 0.0);
        let status = unsafe {
            catqec_confidence_table_entry(table, index, bits.as_mut_ptr(), bits.len(), &mut p, &mut c)
        };
        assert_eq!(status, CatqecStatus::Ok);
        seen.push(unsafe { c_str(bits.as_ptr()).to_owned() });
        assert!(p > 0.0 && p < 1.0);
        assert!(c > 0.0 && c <= 1.0);
        total += p;
    }
    assert_eq!(seen, ["00", "01", "10", "11"]);
    assert!((total - 1.0).abs() < 1e-9, "probabilities sum to {total}");

    // A two-byte buffer cannot hold two bits plus the terminator.
    let status = unsafe {
        catqec_confidence_table_entry(table, 0, bits.as_mut_ptr(), 2, ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(status, CatqecStatus::BufferTooSmall);

    let status = unsafe {
        catqec_confidence_table_entry(table, 99, bits.as_mut_ptr(), bits.len(), ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(status, CatqecStatus::InvalidArgument);
    assert!(last_error().contains("99"));

    unsafe {
        catqec_confidence_table_free(table);
        catqec_params_free(params);
    }
}

#[test]
fn loss_budget_switches_regime_with_the_interval() {
    let params = catqec_params_new();
    let mut fast = CatqecLossBudget {
        t_m: 0.0,
        nbar: 0.0,
        regime: CatqecRegime::Fast,
        g_2eps: 0.0,
        g_up_s: 0.0,
        g_readout: 0.0,
        g_up_a: 0.0,
        g_kerr: 0.0,
        g_fp: 0.0,
        tau_f01: 0.0,
    };
    let mut slow = fast;

    unsafe {
        assert_eq!(catqec_loss_budget(params, 2.0, 1.0, &mut fast), CatqecStatus::Ok);
        assert_eq!(catqec_loss_budget(params, 2.0, 21.0, &mut slow), CatqecStatus::Ok);
        catqec_params_free(params);
    }

    assert_eq!(fast.regime, CatqecRegime::Fast);
    assert!((fast.g_fp - 0.702623).abs() < 1e-5, "fast g_fp {}", fast.g_fp);
    assert_eq!(slow.regime, CatqecRegime::Optimized);
    assert!((slow.g_kerr - 7.087983).abs() < 1e-5, "slow g_kerr {}", slow.g_kerr);
    assert_eq!(fast.tau_f01, slow.tau_f01);
}

#[test]
fn record_frequencies_fill_the_caller_buffer() {
    let params = catqec_params_new();
    let schedule = [13.8, 13.8];
    let mut frequencies = [0.0; 4];

    let status = unsafe {
        catqec_record_frequencies(
            params,
            3.0,
            schedule.as_ptr(),
            schedule.len(),
            4000,
            11,
            frequencies.as_mut_ptr(),
            frequencies.len(),
        )
    };
    assert_eq!(status, CatqecStatus::Ok);
    let total: f64 = frequencies.iter().sum();
    assert!((total - 1.0).abs() < 1e-9, "frequencies sum to {total}");
    // The clean record `00` dominates at these waits.
    assert!(frequencies[0] > 0.5, "frequencies {frequencies:?}");

    let status = unsafe {
        catqec_record_frequencies(
            params,
            3.0,
            schedule.as_ptr(),
            schedule.len(),
            4000,
            11,
            frequencies.as_mut_ptr(),
            3,
        )
    };
    assert_eq!(status, CatqecStatus::BufferTooSmall);

    let status = unsafe {
        catqec_record_frequencies(
            params,
            3.0,
            ptr::null(),
            2,
            4000,
            11,
            frequencies.as_mut_ptr(),
            frequencies.len(),
        )
    };
    assert_eq!(status, CatqecStatus::NullPointer);

    let status = unsafe {
        catqec_record_frequencies(
            params,
            3.0,
            schedule.as_ptr(),
            0,
            4000,
            11,
            frequencies.as_mut_ptr(),
            frequencies.len(),
        )
    };
    assert_eq!(status, CatqecStatus::InvalidArgument);

    unsafe { catqec_params_free(params) };
}

#[test]
fn null_handles_are_reported_not_dereferenced() {
    let mut g = 0.0;
    assert_eq!(unsafe { catqec_gain(ptr::null(), &mut g) }, CatqecStatus::NullPointer);
    assert_eq!(unsafe { catqec_confidence_table_len(ptr::null()) }, 0);
    unsafe {
        catqec_params_free(ptr::null_mut());
        catqec_confidence_table_free(ptr::null_mut());
    }
}

#[test]
fn generated_header_exports_the_full_surface() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/catqec.h"
    ))
    .expect("the build script generates include/catqec.h");

    for symbol in [
        "catqec_version",
        "catqec_last_error",
        "catqec_params_new",
        "catqec_params_parse",
        "catqec_params_free",
        "catqec_gain",
        "catqec_break_even_ratio",
        "catqec_optimize_cadence",
        "catqec_bayes_records",
        "catqec_confidence_table_len",
        "catqec_confidence_table_confidences",
        "catqec_confidence_table_entry",
        "catqec_confidence_table_free",
        "catqec_loss_budget",
        "catqec_record_frequencies",
    ] {
        assert!(header.contains(symbol), "header is missing {symbol}");
    }
    assert!(header.contains("CATQEC_H"));
    assert!(header.contains("CatqecStatus"));
    assert!(header.contains("CATQEC_STATUS_BUFFER_TOO_SMALL"));
    assert!(header.contains("typedef struct CatqecParams CatqecParams"));
    assert!(header.contains("typedef struct CatqecConfidenceTable CatqecConfidenceTable"));
}
