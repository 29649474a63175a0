use std::ffi::{CStr, CString};
use std::ptr;

use conflict_testbed_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(tb_last_error_message()) }.to_string_lossy().into_owned()
}

fn generate(templates: &str, count: usize) -> *mut TbScenarioSet {
    let names = CString::new(templates).unwrap();
    let mut set = ptr::null_mut();
    assert_eq!(unsafe { tb_scenarios_generate(names.as_ptr(), count, 7, &mut set) }, TbStatus::Ok, "{}", last_error());
    assert!(!set.is_null());
    set
}

fn run(set: *const TbScenarioSet, predictor: &str, workers: usize) -> Result<String, (TbStatus, String)> {
    let name = CString::new(predictor).unwrap();
    let mut json = ptr::null_mut();
    let status = unsafe { tb_run_predictor(set, name.as_ptr(), 0.7, 7, workers, &mut json) };
    if status != TbStatus::Ok {
        return Err((status, last_error()));
    }
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { tb_string_free(json) };
    Ok(text)
}

#[test]
fn generated_set_runs_to_json() {
    let set = generate("all", 8);
    let mut n = 0;
    assert_eq!(unsafe { tb_scenarios_len(set, &mut n) }, TbStatus::Ok);
    assert_eq!(n, 8);
    let one = run(set, "p4p", 1).unwrap();
    let four = run(set, "p4p", 4).unwrap();
    assert_eq!(one, four);
    let v: serde_json::Value = serde_json::from_str(&one).unwrap();
    assert_eq!(v["outcomes"].as_array().unwrap().len(), 8);
    assert_eq!(
        v["config"]["scenario_source"],
        "synthetic:unprotected-left-turn,pedestrian-crossing,two-way-merge,four-way-cross:8"
    );
    unsafe { tb_scenarios_free(set) };
}

#[test]
fn bad_names_are_invalid_arguments() {
    let set = generate("two-way-merge", 2);
    let (status, msg) = run(set, "oracle", 1).unwrap_err();
    assert_eq!(status, TbStatus::InvalidArgument);
    assert!(msg.contains("valid names"), "{msg}");
    unsafe { tb_scenarios_free(set) };

    let names = CString::new("roundabout").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tb_scenarios_generate(names.as_ptr(), 2, 1, &mut out) }, TbStatus::InvalidArgument);
    assert!(out.is_null());
}

#[test]
fn missing_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tb_scenarios_load_dir(missing.as_ptr(), &mut out) }, TbStatus::Io);
    assert!(!last_error().is_empty());
}

#[test]
fn boxes_overlap_through_the_c_surface() {
    let a = TbBox { center_x: 0.0, center_y: 0.0, heading: 0.0, length: 4.0, width: 2.0 };
    let touching = TbBox { center_x: 4.0, ..a };
    let apart = TbBox { center_x: 4.01, ..a };
    let rotated = TbBox { center_x: 2.9, heading: std::f64::consts::FRAC_PI_4, ..a };
    let mut hit = false;
    for (b, expected) in [(touching, true), (apart, false), (rotated, true)] {
        assert_eq!(unsafe { tb_boxes_overlap(&a, &b, &mut hit) }, TbStatus::Ok);
        assert_eq!(hit, expected);
    }
    let bad = TbBox { width: -1.0, ..a };
    assert_eq!(unsafe { tb_boxes_overlap(&a, &bad, &mut hit) }, TbStatus::InvalidArgument);
}

#[test]
fn bezier_endpoints_through_the_c_surface() {
    let c = [1.0, 2.0, 5.0, -3.0, 8.0, 9.0, -4.0, 0.5];
    let (mut x, mut y) = (0.0, 0.0);
    assert_eq!(unsafe { tb_bezier_point(c.as_ptr(), 0.0, &mut x, &mut y) }, TbStatus::Ok);
    assert_eq!((x, y), (1.0, 2.0));
    assert_eq!(unsafe { tb_bezier_point(c.as_ptr(), 1.0, &mut x, &mut y) }, TbStatus::Ok);
    assert_eq!((x, y), (-4.0, 0.5));
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/conflict_testbed.h")).unwrap();
    for f in [
        "tb_last_error_message",
        "tb_bezier_point",
        "tb_boxes_overlap",
        "tb_scenarios_generate",
        "tb_scenarios_load_dir",
        "tb_scenarios_len",
        "tb_scenarios_free",
        "tb_run_predictor",
        "tb_string_free",
        "TB_STATUS_NULL_POINTER",
    ] {
        assert!(h.contains(f), "{f} missing from header");
    }
}
