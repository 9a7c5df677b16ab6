//! C ABI for the d2dsim simulator.
//!
//! Every fallible call returns a [`D2dStatus`] and writes its result through
//! an out-pointer. On failure the message is kept per thread and can be read
//! with [`d2d_last_error`]. Handles ([`D2dProfiles`], [`D2dScenario`]) and
//! returned strings are owned by the caller and released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use d2dsim::channel::{calibrate, default_anchors, ChannelError, ProfileTemplates};
use d2dsim::energy::{duty_cycle_lifetime, lifetime_hours, Battery, PowerModel};
use d2dsim::engine::{airtime, coverage_area_km2, run_scenario_with, EngineError, RunOptions};
use d2dsim::scenario::{parse_scenario, ScenarioError};
use d2dsim::{Composition, LinkKind, ProfileSet, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Domain = 5,
    Calibration = 6,
    Runtime = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2dLink {
    BtsUe = 0,
    D2d = 1,
}

impl From<D2dLink> for LinkKind {
    fn from(l: D2dLink) -> Self {
        match l {
            D2dLink::BtsUe => LinkKind::BtsUe,
            D2dLink::D2d => LinkKind::D2d,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2dComposition {
    SingleHop = 0,
    TwoHopMidpointRelay = 1,
}

impl From<D2dComposition> for Composition {
    fn from(c: D2dComposition) -> Self {
        match c {
            D2dComposition::SingleHop => Composition::SingleHop,
            D2dComposition::TwoHopMidpointRelay => Composition::TwoHopMidpointRelay,
        }
    }
}

/// Calibrated radio profiles for both link classes.
pub struct D2dProfiles {
    inner: ProfileSet,
}

/// A parsed and validated scenario document.
pub struct D2dScenario {
    inner: Scenario,
}

struct Failure {
    status: D2dStatus,
    message: String,
}

impl Failure {
    fn new(status: D2dStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<ChannelError> for Failure {
    fn from(e: ChannelError) -> Self {
        let status = match e {
            ChannelError::Calibration { .. } => D2dStatus::Calibration,
            _ => D2dStatus::Domain,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let status = match e {
            ScenarioError::Parse(_) => D2dStatus::Parse,
            _ => D2dStatus::Validation,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match e {
            EngineError::Scenario(_) | EngineError::Geometry { .. } => D2dStatus::Validation,
            EngineError::NonPositiveRate(_) | EngineError::NegativeRadius(_) => D2dStatus::Domain,
            _ => D2dStatus::Runtime,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<d2dsim::EnergyError> for Failure {
    fn from(e: d2dsim::EnergyError) -> Self {
        Failure::new(D2dStatus::Domain, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Run `f`, record any failure or panic, and map it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> D2dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            D2dStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(_) => {
            set_last_error("internal panic");
            D2dStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure::new(D2dStatus::NullPointer, "null pointer argument")
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s).to_str().map_err(|_| Failure::new(D2dStatus::InvalidUtf8, "string is not valid UTF-8"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

unsafe fn profiles<'a>(p: *const D2dProfiles) -> Result<&'a ProfileSet, Failure> {
    p.as_ref().map(|p| &p.inner).ok_or_else(null)
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. Free the result with `d2d_string_free`.
#[no_mangle]
pub extern "C" fn d2d_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn d2d_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Calibrate the default profiles against the default anchors.
///
/// # Safety
/// `out` must be a valid pointer to a `D2dProfiles *`.
#[no_mangle]
pub unsafe extern "C" fn d2d_profiles_calibrate_default(retries_per_hop: u32, out: *mut *mut D2dProfiles) -> D2dStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let inner = calibrate(&default_anchors(), &ProfileTemplates::default(), retries_per_hop)?;
        write_out(out, Box::into_raw(Box::new(D2dProfiles { inner })))
    })
}

/// Calibrate the profiles of a scenario against its anchors.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_profiles_calibrate(scenario: *const D2dScenario, out: *mut *mut D2dProfiles) -> D2dStatus {
    guard(|| {
        let s = &scenario.as_ref().ok_or_else(null)?.inner;
        if out.is_null() {
            return Err(null());
        }
        let inner = calibrate(&s.anchors, &s.profiles, s.trial.retries_per_hop)?;
        write_out(out, Box::into_raw(Box::new(D2dProfiles { inner })))
    })
}

/// Load profiles from JSON: either a bare profile set or a calibration
/// artifact written by `sim calibrate`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_profiles_from_json(json: *const c_char, out: *mut *mut D2dProfiles) -> D2dStatus {
    guard(|| {
        let text = read_str(json)?;
        if out.is_null() {
            return Err(null());
        }
        let parse_err = |e: serde_json::Error| Failure::new(D2dStatus::Parse, e.to_string());
        let value: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
        let set = match value.get("profiles") {
            Some(p) => p.clone(),
            None => value,
        };
        let inner: ProfileSet = serde_json::from_value(set).map_err(parse_err)?;
        inner.validate()?;
        write_out(out, Box::into_raw(Box::new(D2dProfiles { inner })))
    })
}

/// # Safety
/// `p` must be a live handle and `out` a valid pointer. The string is freed
/// with `d2d_string_free`.
#[no_mangle]
pub unsafe extern "C" fn d2d_profiles_to_json(p: *const D2dProfiles, out: *mut *mut c_char) -> D2dStatus {
    guard(|| {
        let json = serde_json::to_string(profiles(p)?).expect("profiles serialise");
        write_out(out, owned_string(json))
    })
}

/// # Safety
/// `p` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn d2d_profiles_free(p: *mut D2dProfiles) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_mean_rssi(
    p: *const D2dProfiles,
    link: D2dLink,
    distance_m: f64,
    out: *mut f64,
) -> D2dStatus {
    guard(|| write_out(out, profiles(p)?.get(link.into()).mean_rssi(distance_m)?))
}

/// # Safety
/// `p` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_estimate_distance(
    p: *const D2dProfiles,
    link: D2dLink,
    rssi_dbm: f64,
    out: *mut f64,
) -> D2dStatus {
    guard(|| write_out(out, profiles(p)?.get(link.into()).estimate_distance(rssi_dbm)?))
}

/// # Safety
/// `p` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_packet_success_prob(
    p: *const D2dProfiles,
    link: D2dLink,
    rssi_dbm: f64,
    out: *mut f64,
) -> D2dStatus {
    guard(|| {
        if !rssi_dbm.is_finite() {
            return Err(Failure::new(D2dStatus::Domain, format!("rssi {rssi_dbm} is not finite")));
        }
        write_out(out, profiles(p)?.get(link.into()).packet_success_prob(rssi_dbm))
    })
}

/// # Safety
/// `p` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_range_at_threshold(
    p: *const D2dProfiles,
    link: D2dLink,
    composition: D2dComposition,
    threshold_pct: f64,
    retries_per_hop: u32,
    out: *mut f64,
) -> D2dStatus {
    guard(|| {
        let profile = profiles(p)?.get(link.into());
        write_out(out, profile.range_at_threshold(composition.into(), threshold_pct, retries_per_hop)?)
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_scenario_parse(json: *const c_char, out: *mut *mut D2dScenario) -> D2dStatus {
    guard(|| {
        let inner = parse_scenario(read_str(json)?)?;
        write_out(out, Box::into_raw(Box::new(D2dScenario { inner })))
    })
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2d_scenario_set_seed(s: *mut D2dScenario, seed: u64) -> D2dStatus {
    guard(|| {
        s.as_mut().ok_or_else(null)?.inner.trial.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn d2d_scenario_free(s: *mut D2dScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Run a scenario and return its report as JSON. With `trace` non-zero the
/// report carries the per-frame trace lines.
///
/// # Safety
/// `s` and `p` must be live handles and `out` a valid pointer. The string is
/// freed with `d2d_string_free`.
#[no_mangle]
pub unsafe extern "C" fn d2d_scenario_run(
    s: *const D2dScenario,
    p: *const D2dProfiles,
    trace: bool,
    out: *mut *mut c_char,
) -> D2dStatus {
    guard(|| {
        let scenario = &s.as_ref().ok_or_else(null)?.inner;
        let profiles = profiles(p)?;
        if out.is_null() {
            return Err(null());
        }
        let report = run_scenario_with(scenario, profiles, RunOptions { trace })?;
        write_out(out, owned_string(serde_json::to_string(&report).expect("report serialises")))
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_airtime(
    payload_bytes: u32,
    overhead_bytes: u32,
    data_rate_baud: f64,
    out: *mut f64,
) -> D2dStatus {
    guard(|| write_out(out, airtime(payload_bytes, overhead_bytes, data_rate_baud)?))
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_coverage_area_km2(radius_m: f64, out: *mut f64) -> D2dStatus {
    guard(|| write_out(out, coverage_area_km2(radius_m)?))
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_lifetime_hours(capacity_wh: f64, draw_w: f64, out: *mut f64) -> D2dStatus {
    guard(|| {
        let battery = Battery::full(capacity_wh, Battery::default().nominal_voltage_v);
        battery.validate()?;
        write_out(out, lifetime_hours(&battery, draw_w)?)
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_duty_cycle_lifetime(
    draw_on_w: f64,
    draw_off_w: f64,
    capacity_wh: f64,
    fraction_d2d_on: f64,
    out: *mut f64,
) -> D2dStatus {
    guard(|| {
        let model = PowerModel { draw_d2d_on_w: draw_on_w, draw_d2d_off_w: draw_off_w };
        model.validate()?;
        let battery = Battery::full(capacity_wh, Battery::default().nominal_voltage_v);
        battery.validate()?;
        write_out(out, duty_cycle_lifetime(&model, &battery, fraction_d2d_on)?)
    })
}
