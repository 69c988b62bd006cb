use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use hivspill_ffi::*;

fn last_error() -> String {
    let p = hiv_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn preset_round_trip() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(hiv_model_new_preset(HivVariant::Basic, &mut m), HivStatus::Ok);
        assert!(hiv_last_error_message().is_null());
        assert_eq!(hiv_model_n_groups(m), 3);
        let mut rc = 0.0;
        assert_eq!(hiv_model_rc(m, &mut rc), HivStatus::Ok);
        assert!(rc.is_finite() && rc > 0.0);
        let mut prevented = [0.0; 3];
        assert_eq!(hiv_model_run_intervention(m, 0, 10_000.0, prevented.as_mut_ptr(), 3), HivStatus::Ok);
        assert!(prevented[0] > 0.0);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(hiv_model_nnt(m, 0, 0, 5.0, &mut a, &mut b), HivStatus::Ok);
        assert!(a > 0.0 && b > 0.0);
        hiv_model_free(m);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(hiv_model_new_preset(HivVariant::Basic, ptr::null_mut()), HivStatus::NullPointer);
        assert!(last_error().contains("null"));
        let mut rc = 0.0;
        assert_eq!(hiv_model_rc(ptr::null(), &mut rc), HivStatus::NullPointer);
        assert_eq!(hiv_model_n_groups(ptr::null()), 0);
        hiv_model_free(ptr::null_mut());
    }
}

#[test]
fn bad_arguments() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(hiv_model_new_preset(HivVariant::Basic, &mut m), HivStatus::Ok);
        let mut buf = [0.0; 2];
        assert_eq!(hiv_model_run_intervention(m, 0, 1.0, buf.as_mut_ptr(), 2), HivStatus::InvalidArgument);
        let mut buf = [0.0; 3];
        assert_eq!(hiv_model_run_intervention(m, 7, 1.0, buf.as_mut_ptr(), 3), HivStatus::InvalidArgument);
        assert_eq!(hiv_model_run_intervention(m, 0, -1.0, buf.as_mut_ptr(), 3), HivStatus::InvalidArgument);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(hiv_model_nnt(m, 0, 0, 0.5, &mut a, &mut b), HivStatus::InvalidArgument);
        assert!(last_error().contains("horizon"));
        hiv_model_free(m);
    }
}

#[test]
fn config_errors_and_infeasible_closure() {
    unsafe {
        let mut m = ptr::null_mut();
        let bad = CString::new(r#"{"model": "basic", "bogus": 1}"#).unwrap();
        assert_eq!(hiv_model_from_json(bad.as_ptr(), &mut m), HivStatus::Config);
        assert!(last_error().contains("bogus"));
        assert!(m.is_null());

        let ok = CString::new(r#"{"model": "risk"}"#).unwrap();
        assert_eq!(hiv_model_from_json(ok.as_ptr(), &mut m), HivStatus::Ok);
        assert_eq!(hiv_model_n_groups(m), 4);
        let mut rc = 0.0;
        assert_eq!(hiv_model_rc(m, &mut rc), HivStatus::InfeasibleClosure);
        assert!(last_error().contains("infeasible"));
        hiv_model_free(m);
    }
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/hivspill.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in [
        "hiv_model_new_preset",
        "hiv_model_from_json",
        "hiv_model_free",
        "hiv_model_rc",
        "hiv_model_run_intervention",
        "hiv_model_nnt",
        "hiv_last_error_message",
        "HIV_STATUS_INFEASIBLE_CLOSURE",
        "typedef struct HivModel HivModel",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", header]).output() else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
