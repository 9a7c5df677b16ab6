use std::ffi::{CStr, CString};
use std::ptr;

use d2dsim_ffi::*;

fn last_error() -> Option<String> {
    let p = d2d_last_error();
    if p.is_null() {
        return None;
    }
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { d2d_string_free(p) };
    Some(s)
}

fn default_profiles() -> *mut D2dProfiles {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { d2d_profiles_calibrate_default(1, &mut p) }, D2dStatus::Ok);
    assert!(!p.is_null());
    p
}

#[test]
fn calibrated_ranges_through_the_abi() {
    let p = default_profiles();
    let mut r = 0.0;
    let cases = [
        (D2dLink::BtsUe, D2dComposition::SingleHop, 85.0, 120.0),
        (D2dLink::D2d, D2dComposition::SingleHop, 90.0, 30.0),
        (D2dLink::D2d, D2dComposition::TwoHopMidpointRelay, 90.0, 62.0),
    ];
    for (link, comp, pct, want) in cases {
        assert_eq!(unsafe { d2d_range_at_threshold(p, link, comp, pct, 1, &mut r) }, D2dStatus::Ok);
        assert!((r - want).abs() < 0.1, "{link:?} {comp:?}: {r}");
    }
    unsafe { d2d_profiles_free(p) };
}

#[test]
fn distance_round_trip() {
    let p = default_profiles();
    let (mut rssi, mut d) = (0.0, 0.0);
    unsafe {
        assert_eq!(d2d_mean_rssi(p, D2dLink::D2d, 25.0, &mut rssi), D2dStatus::Ok);
        assert_eq!(d2d_estimate_distance(p, D2dLink::D2d, rssi, &mut d), D2dStatus::Ok);
        d2d_profiles_free(p);
    }
    assert!((d - 25.0).abs() < 1e-9);
}

#[test]
fn domain_errors_set_the_message() {
    let p = default_profiles();
    let mut out = 0.0;
    let st = unsafe { d2d_mean_rssi(p, D2dLink::BtsUe, 0.1, &mut out) };
    assert_eq!(st, D2dStatus::Domain);
    assert!(last_error().is_some());
    // A later success clears it.
    assert_eq!(unsafe { d2d_mean_rssi(p, D2dLink::BtsUe, 10.0, &mut out) }, D2dStatus::Ok);
    assert!(last_error().is_none());
    unsafe { d2d_profiles_free(p) };
}

#[test]
fn null_arguments_are_reported() {
    let mut out = 0.0;
    assert_eq!(unsafe { d2d_mean_rssi(ptr::null(), D2dLink::D2d, 10.0, &mut out) }, D2dStatus::NullPointer);
    assert_eq!(unsafe { d2d_airtime(64, 8, 57_600.0, ptr::null_mut()) }, D2dStatus::NullPointer);
    assert_eq!(unsafe { d2d_scenario_parse(ptr::null(), ptr::null_mut()) }, D2dStatus::NullPointer);
    unsafe { d2d_profiles_free(ptr::null_mut()) };
    unsafe { d2d_scenario_free(ptr::null_mut()) };
    unsafe { d2d_string_free(ptr::null_mut()) };
}

#[test]
fn scalar_helpers() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(d2d_airtime(64, 8, 57_600.0, &mut v), D2dStatus::Ok);
        assert_eq!(v, 0.01);
        assert_eq!(d2d_airtime(64, 8, 0.0, &mut v), D2dStatus::Domain);
        assert_eq!(d2d_coverage_area_km2(120.0, &mut v), D2dStatus::Ok);
        assert!((v - 0.0452).abs() < 5e-4);
        assert_eq!(d2d_lifetime_hours(5.3, 0.3852, &mut v), D2dStatus::Ok);
        assert!((v - 5.3 / 0.3852).abs() < 1e-12);
        assert_eq!(d2d_duty_cycle_lifetime(0.3852, 0.234, 5.3, 0.5, &mut v), D2dStatus::Ok);
        assert!((v - 17.12).abs() < 0.01);
        assert_eq!(d2d_duty_cycle_lifetime(0.3852, 0.234, 5.3, 2.0, &mut v), D2dStatus::Domain);
        assert_eq!(d2d_lifetime_hours(5.3, 0.0, &mut v), D2dStatus::Domain);
    }
}

const DOC: &str = r#"{"nodes": [
    {"id": 0, "kind": "Bts", "x": 0, "y": 0},
    {"id": 1, "kind": "Ue", "x": 20, "y": 0},
    {"id": 2, "kind": "Ue", "x": 30, "y": 0}
]}"#;

fn run(doc: &str, seed: u64) -> String {
    let p = default_profiles();
    let text = CString::new(doc).unwrap();
    let mut s = ptr::null_mut();
    let mut json = ptr::null_mut();
    unsafe {
        assert_eq!(d2d_scenario_parse(text.as_ptr(), &mut s), D2dStatus::Ok);
        assert_eq!(d2d_scenario_set_seed(s, seed), D2dStatus::Ok);
        assert_eq!(d2d_scenario_run(s, p, false, &mut json), D2dStatus::Ok);
        let out = CStr::from_ptr(json).to_str().unwrap().to_owned();
        d2d_string_free(json);
        d2d_scenario_free(s);
        d2d_profiles_free(p);
        out
    }
}

#[test]
fn scenario_report_as_json() {
    let a = run(DOC, 9);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["seed"], 9);
    assert_eq!(v["pairs"][0]["outcome"]["Decided"]["mode"], "D2dDirect");
    assert_eq!(a, run(DOC, 9));
}

#[test]
fn bad_documents_map_to_statuses() {
    let mut s = ptr::null_mut();
    let bad = CString::new(r#"{"nodes": [], "bogus": 1}"#).unwrap();
    assert_eq!(unsafe { d2d_scenario_parse(bad.as_ptr(), &mut s) }, D2dStatus::Parse);
    assert!(last_error().unwrap().contains("bogus"));
    let no_bts = CString::new(r#"{"nodes": [{"id": 1, "kind": "Ue", "x": 0, "y": 0}]}"#).unwrap();
    assert_eq!(unsafe { d2d_scenario_parse(no_bts.as_ptr(), &mut s) }, D2dStatus::Validation);
    assert!(s.is_null());
}

#[test]
fn profiles_json_round_trip() {
    let p = default_profiles();
    let mut json = ptr::null_mut();
    let mut q = ptr::null_mut();
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        assert_eq!(d2d_profiles_to_json(p, &mut json), D2dStatus::Ok);
        assert_eq!(d2d_profiles_from_json(json, &mut q), D2dStatus::Ok);
        d2d_mean_rssi(p, D2dLink::D2d, 40.0, &mut a);
        d2d_mean_rssi(q, D2dLink::D2d, 40.0, &mut b);
        d2d_packet_success_prob(q, D2dLink::D2d, -70.0, &mut b);
        d2d_packet_success_prob(p, D2dLink::D2d, -70.0, &mut a);
        d2d_string_free(json);
        d2d_profiles_free(p);
        d2d_profiles_free(q);
    }
    assert_eq!(a, b);
}

#[test]
fn infeasible_calibration_reports_status() {
    let doc = CString::new(
        r#"{"nodes": [{"id": 0, "kind": "Bts", "x": 0, "y": 0}],
            "anchors": [
                {"link": "D2d", "composition": "SingleHop", "distance_m": 30, "efficiency_pct": 90},
                {"link": "D2d", "composition": "TwoHopMidpointRelay", "distance_m": 20, "efficiency_pct": 90},
                {"link": "BtsUe", "composition": "SingleHop", "distance_m": 120, "efficiency_pct": 85}
            ]}"#,
    )
    .unwrap();
    let mut s = ptr::null_mut();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(d2d_scenario_parse(doc.as_ptr(), &mut s), D2dStatus::Ok);
        assert_eq!(d2d_profiles_calibrate(s, &mut p), D2dStatus::Calibration);
        d2d_scenario_free(s);
    }
    assert!(p.is_null());
    assert!(last_error().unwrap().contains("20"));
}
