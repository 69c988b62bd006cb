//! C ABI over the hivspill engine.
//!
//! All functions return a `HivStatus`; on failure the message is available
//! from `hiv_last_error_message` on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hivspill::model::Variant;
use hivspill::ngm::{build_ngm, rc_numeric};
use hivspill::scenario::config::{parse_config, ResolvedIntervention, ScenarioConfig};
use hivspill::scenario::run_scenarios;
use hivspill::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HivStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InfeasibleClosure = 3,
    Numerical = 4,
    Config = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HivVariant {
    Basic = 0,
    Risk = 1,
}

/// Opaque model handle.
pub struct HivModel {
    cfg: ScenarioConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> HivStatus {
    match e.root() {
        Error::InfeasibleClosure { .. } => HivStatus::InfeasibleClosure,
        Error::NegativeState { .. } | Error::StepSizeUnderflow { .. } => HivStatus::Numerical,
        Error::SchemaViolation { .. } | Error::Config(_) | Error::Parse(_) | Error::UnknownGroup(_) => {
            HivStatus::Config
        }
        _ => HivStatus::InvalidArgument,
    }
}

fn guard<F: FnOnce() -> Result<(), (HivStatus, String)>>(f: F) -> HivStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HivStatus::Ok,
        Ok(Err((st, msg))) => {
            set_error(msg);
            st
        }
        Err(_) => {
            set_error("panic inside hivspill");
            HivStatus::Panic
        }
    }
}

fn lift(e: Error) -> (HivStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HivStatus, String) {
    (HivStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model_ref<'a>(m: *const HivModel) -> Result<&'a HivModel, (HivStatus, String)> {
    m.as_ref().ok_or_else(|| null("model"))
}

/// Creates a model from the built-in preset.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hiv_model_new_preset(variant: HivVariant, out: *mut *mut HivModel) -> HivStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = match variant {
            HivVariant::Basic => Variant::Basic,
            HivVariant::Risk => Variant::Risk,
        };
        let cfg = ScenarioConfig::preset(v);
        *out = Box::into_raw(Box::new(HivModel { cfg }));
        Ok(())
    })
}

/// Creates a model from a JSON scenario config.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hiv_model_from_json(json: *const c_char, out: *mut *mut HivModel) -> HivStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (HivStatus::InvalidArgument, format!("json is not utf-8: {e}")))?;
        let cfg = parse_config(text).map_err(lift)?;
        *out = Box::into_raw(Box::new(HivModel { cfg }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hiv_model_free(model: *mut HivModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of population groups in the model (0 for a null handle).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hiv_model_n_groups(model: *const HivModel) -> usize {
    model.as_ref().map(|m| m.cfg.spec.n_groups()).unwrap_or(0)
}

/// Control reproduction number at the disease-free equilibrium.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hiv_model_rc(model: *const HivModel, out: *mut f64) -> HivStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ngm = build_ngm(&m.cfg.spec).map_err(lift)?;
        *out = rc_numeric(&ngm).value;
        Ok(())
    })
}

/// Runs one intervention and writes the infections prevented per group over
/// the reporting window into `prevented[0..len]`; `len` must equal the group
/// count.
///
/// # Safety
/// `model` must be a live handle and `prevented` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hiv_model_run_intervention(
    model: *const HivModel,
    group: usize,
    additional_persons: f64,
    prevented: *mut f64,
    len: usize,
) -> HivStatus {
    guard(|| {
        let m = model_ref(model)?;
        if prevented.is_null() {
            return Err(null("prevented"));
        }
        let n = m.cfg.spec.n_groups();
        if len != n {
            return Err((HivStatus::InvalidArgument, format!("len = {len}, model has {n} groups")));
        }
        if group >= n {
            return Err((HivStatus::InvalidArgument, format!("group {group} out of range")));
        }
        if !(additional_persons.is_finite() && additional_persons >= 0.0) {
            return Err((HivStatus::InvalidArgument, "additional_persons must be finite and >= 0".into()));
        }
        let mut cfg = m.cfg.clone();
        cfg.interventions = vec![ResolvedIntervention {
            label: "ffi".into(),
            group,
            additional_persons,
            start_year: cfg.report_first_year,
        }];
        cfg.outputs.spillover_sources.clear();
        cfg.outputs.nnt_pairs.clear();
        cfg.outputs.sobol = None;
        let run = run_scenarios(&cfg).map_err(lift)?;
        let p = run.report.scenarios[0].prevented.clone().unwrap_or_default();
        std::slice::from_raw_parts_mut(prevented, len).copy_from_slice(&p);
        Ok(())
    })
}

/// NNT for PrEP in `source` measured on infections averted in `target`
/// after `horizon` years. Undefined values are written as NaN with status Ok.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn hiv_model_nnt(
    model: *const HivModel,
    target: usize,
    source: usize,
    horizon: f64,
    out_simple: *mut f64,
    out_integral: *mut f64,
) -> HivStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out_simple.is_null() || out_integral.is_null() {
            return Err(null("out"));
        }
        let labels = m.cfg.spec.variant.labels();
        if target >= labels.len() || source >= labels.len() {
            return Err((HivStatus::InvalidArgument, "group index out of range".into()));
        }
        let max_t = (m.cfg.report_last_year + 1 - m.cfg.report_first_year) as f64;
        if !(horizon >= 1.0 && horizon <= max_t && horizon.fract() == 0.0) {
            return Err((
                HivStatus::InvalidArgument,
                format!("horizon must be a whole number of years in [1, {max_t}]"),
            ));
        }
        let mut cfg = m.cfg.clone();
        cfg.interventions.clear();
        cfg.outputs.spillover_sources.clear();
        cfg.outputs.nnt_pairs = vec![(labels[target].to_string(), labels[source].to_string())];
        cfg.outputs.nnt_horizon = horizon;
        cfg.outputs.sobol = None;
        let run = run_scenarios(&cfg).map_err(lift)?;
        let r = run
            .nnt
            .iter()
            .find(|r| r.horizon == horizon)
            .ok_or_else(|| (HivStatus::Numerical, "nnt not produced".to_string()))?;
        *out_simple = r.nnt_simple;
        *out_integral = r.nnt_integral;
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn hiv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map(|s| s.as_ptr()).unwrap_or(ptr::null()))
}
