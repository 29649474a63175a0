//! C interface to the test bed.
//!
//! Every entry point returns a [`TbStatus`]. On failure the message is kept
//! per thread and read back with [`tb_last_error_message`]. Scenario sets are
//! opaque handles released with [`tb_scenarios_free`]; strings handed out by
//! the library are released with [`tb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use conflict_testbed::experiment::{load_scenario_dir, run_predictor, scenarios_from_files, ExperimentSettings};
use conflict_testbed::geometry::{bezier_point, boxes_overlap, OrientedBox, Point2};
use conflict_testbed::predictor::PredictorKind;
use conflict_testbed::relation::HeuristicModel;
use conflict_testbed::scenario::Scenario;
use conflict_testbed::synthetic::{generate_batch, Template};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Failed = 4,
    Panic = 5,
}

/// An oriented rectangle: center, heading in radians, length along the
/// heading and width across it.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TbBox {
    pub center_x: f64,
    pub center_y: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

/// Opaque set of validated scenarios.
pub struct TbScenarioSet {
    scenarios: Vec<Scenario>,
    source: String,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(TbStatus, String);

impl Failure {
    fn invalid(e: impl ToString) -> Self {
        Failure(TbStatus::InvalidArgument, e.to_string())
    }
    fn failed(e: impl ToString) -> Self {
        Failure(TbStatus::Failed, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TbStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TbStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(TbStatus::NullPointer, format!("{name} is null"))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::invalid(format!("{name} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Point on a cubic Bezier curve. `control` holds x0, y0, .., x3, y3 and `t`
/// must lie in [0, 1].
///
/// # Safety
/// `control` must point to 8 doubles; `out_x` and `out_y` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_bezier_point(control: *const f64, t: f64, out_x: *mut f64, out_y: *mut f64) -> TbStatus {
    guard(|| {
        if control.is_null() {
            return Err(null("control"));
        }
        let c = std::slice::from_raw_parts(control, 8);
        let pts = [Point2::new(c[0], c[1]), Point2::new(c[2], c[3]), Point2::new(c[4], c[5]), Point2::new(c[6], c[7])];
        let (x, y) = (out(out_x, "out_x")?, out(out_y, "out_y")?);
        let p = bezier_point(&pts, t).map_err(Failure::invalid)?;
        (*x, *y) = (p.x, p.y);
        Ok(())
    })
}

/// Whether two oriented rectangles overlap; touching counts.
///
/// # Safety
/// `a` and `b` must point to valid boxes and `out_overlap` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_boxes_overlap(a: *const TbBox, b: *const TbBox, out_overlap: *mut bool) -> TbStatus {
    guard(|| {
        let to_box = |p: *const TbBox, name| -> Result<OrientedBox, Failure> {
            let b = p.as_ref().ok_or_else(|| null(name))?;
            OrientedBox::new(Point2::new(b.center_x, b.center_y), b.heading, b.length, b.width)
                .map_err(Failure::invalid)
        };
        let (a, b) = (to_box(a, "a")?, to_box(b, "b")?);
        *out(out_overlap, "out_overlap")? = boxes_overlap(&a, &b);
        Ok(())
    })
}

/// Generate `count` synthetic scenarios. `templates` is a comma separated
/// list of template names, or "all".
///
/// # Safety
/// `templates` must be a NUL-terminated string and `out_set` writable.
#[no_mangle]
pub unsafe extern "C" fn tb_scenarios_generate(
    templates: *const c_char,
    count: usize,
    seed: u64,
    out_set: *mut *mut TbScenarioSet,
) -> TbStatus {
    guard(|| {
        let names = text(templates, "templates")?;
        let slot = out(out_set, "out_set")?;
        let chosen: Vec<Template> = if names == "all" {
            Template::ALL.to_vec()
        } else {
            names
                .split(',')
                .map(|n| n.trim().parse::<Template>())
                .collect::<Result<_, _>>()
                .map_err(Failure::invalid)?
        };
        let files = generate_batch(&chosen, count, seed, false).map_err(Failure::failed)?;
        let scenarios = scenarios_from_files(&files).map_err(Failure::failed)?;
        let list: Vec<&str> = chosen.iter().map(|t| t.name()).collect();
        let source = format!("synthetic:{}:{count}", list.join(","));
        *slot = Box::into_raw(Box::new(TbScenarioSet { scenarios, source }));
        Ok(())
    })
}

/// Load every scenario file in a directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out_set` writable.
#[no_mangle]
pub unsafe extern "C" fn tb_scenarios_load_dir(dir: *const c_char, out_set: *mut *mut TbScenarioSet) -> TbStatus {
    guard(|| {
        let dir = text(dir, "dir")?;
        let slot = out(out_set, "out_set")?;
        let scenarios = load_scenario_dir(Path::new(dir)).map_err(|e| Failure(TbStatus::Io, e.to_string()))?;
        *slot = Box::into_raw(Box::new(TbScenarioSet { scenarios, source: format!("dir:{dir}") }));
        Ok(())
    })
}

/// Number of scenarios in a set.
///
/// # Safety
/// `set` must be a live handle and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn tb_scenarios_len(set: *const TbScenarioSet, out_len: *mut usize) -> TbStatus {
    guard(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        *out(out_len, "out_len")? = set.scenarios.len();
        Ok(())
    })
}

/// Release a scenario set. Null is ignored.
///
/// # Safety
/// `set` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_scenarios_free(set: *mut TbScenarioSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Roll out every scenario under one predictor and return the results file
/// as canonical JSON. `predictor` is one of cv, p4p, p4p-norelation,
/// nopredict or replay. The string must be released with [`tb_string_free`].
///
/// # Safety
/// `set` must be a live handle, `predictor` a NUL-terminated string and
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn tb_run_predictor(
    set: *const TbScenarioSet,
    predictor: *const c_char,
    relation_threshold: f64,
    seed: u64,
    workers: usize,
    out_json: *mut *mut c_char,
) -> TbStatus {
    guard(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        let kind: PredictorKind = text(predictor, "predictor")?.parse().map_err(Failure::invalid)?;
        let slot = out(out_json, "out_json")?;
        if !(0.0..=1.0).contains(&relation_threshold) {
            return Err(Failure::invalid("relation_threshold must lie in [0, 1]"));
        }
        let mut settings = ExperimentSettings {
            seed,
            workers: workers.max(1),
            scenario_source: set.source.clone(),
            ..ExperimentSettings::default()
        };
        settings.predictor.relation_threshold = relation_threshold;
        let results =
            run_predictor(&set.scenarios, kind, &HeuristicModel::default(), &settings).map_err(Failure::failed)?;
        let json = results.to_canonical_json().map_err(Failure::failed)?;
        *slot = CString::new(json).map_err(Failure::failed)?.into_raw();
        Ok(())
    })
}

/// Release a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
