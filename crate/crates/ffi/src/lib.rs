//! C ABI over the rigalign toolkit.
//!
//! Every function returns a [`RigStatus`]; on failure the message is kept
//! per thread and can be read with [`rig_last_error_message`]. Strings handed
//! out by the library must be released with [`rig_string_free`], recordings
//! with [`rig_recording_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rigalign::alignment::Strategy;
use rigalign::evaluation::{evaluate_runs, format_table, run_strategy, EvalOptions};
use rigalign::geometry::{Box2D, RigidTransform};
use rigalign::registration::chain_initial_transform;
use rigalign::scan::point_timestamp;
use rigalign::sim::{simulate_scene, sync_misalignment, SceneConfig, SceneRecording};
use rigalign::store::{read_recording, recording_id, write_recording, ScanFormat};
use rigalign::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RigStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    FrameMismatch = 4,
    OutOfRange = 5,
    Domain = 6,
    InsufficientPoints = 7,
    SceneMismatch = 8,
    Io = 9,
    Format = 10,
    Internal = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RigStrategy {
    Stamp = 0,
    Frame = 1,
    Target = 2,
}

impl From<RigStrategy> for Strategy {
    fn from(s: RigStrategy) -> Self {
        match s {
            RigStrategy::Stamp => Strategy::Stamp,
            RigStrategy::Frame => Strategy::Frame,
            RigStrategy::Target => Strategy::Target,
        }
    }
}

/// Rigid transform: unit quaternion (w, x, y, z) and translation in meters.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigTransform {
    pub rotation_wxyz: [f64; 4],
    pub translation: [f64; 3],
}

/// Axis-aligned image box in pixels.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigBox2D {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

/// Opaque simulated or loaded recording.
pub struct RigRecording {
    recording: SceneRecording,
    id: String,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> RigStatus {
    match e {
        Error::FrameMismatch { .. } => RigStatus::FrameMismatch,
        Error::OutOfRange { .. } => RigStatus::OutOfRange,
        Error::Domain(_)
        | Error::InvalidGeometry(_)
        | Error::TooFewSamples(_)
        | Error::NonIncreasingTimestamps { .. }
        | Error::EmptySchedule(_)
        | Error::ObjectWithoutPoints(_)
        | Error::EmptyMatches => RigStatus::Domain,
        Error::InsufficientPoints { .. } => RigStatus::InsufficientPoints,
        Error::SceneMismatch(_) => RigStatus::SceneMismatch,
        Error::InvalidConfig(_) => RigStatus::InvalidConfig,
        Error::Format { .. } | Error::Json(_) => RigStatus::Format,
        Error::Io { .. } => RigStatus::Io,
    }
}

struct Failure(RigStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RigStatus::NullArgument, format!("`{what}` is null"))
}

/// Runs `f`, turning errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RigStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RigStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {msg}"));
            RigStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RigStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn recording_arg<'a>(p: *const RigRecording) -> Result<&'a RigRecording, Failure> {
    p.as_ref().ok_or_else(|| null("recording"))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(RigStatus::Internal, "string contains a NUL byte".into()))
}

fn to_rigid(t: &RigTransform, source: &str, target: &str) -> Result<RigidTransform, Failure> {
    Ok(RigidTransform::from_wxyz(
        t.rotation_wxyz,
        t.translation,
        source,
        target,
    )?)
}

fn from_rigid(t: &RigidTransform) -> RigTransform {
    let v = t.translation();
    RigTransform {
        rotation_wxyz: t.wxyz(),
        translation: [v.x, v.y, v.z],
    }
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rig_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rig_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn rig_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Intersection over union of two boxes.
///
/// # Safety
/// `a`, `b` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rig_iou(a: *const RigBox2D, b: *const RigBox2D, out: *mut f64) -> RigStatus {
    guard(|| {
        let (a, b) = (
            a.as_ref().ok_or_else(|| null("a"))?,
            b.as_ref().ok_or_else(|| null("b"))?,
        );
        let out = out_arg(out, "out")?;
        let boxed = |r: &RigBox2D| Box2D::new(r.min_x, r.min_y, r.max_x, r.max_y);
        *out = rigalign::evaluation::iou(&boxed(a)?, &boxed(b)?);
        Ok(())
    })
}

/// Acquisition time of a clockwise azimuth (radians, `[0, 2π)`).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rig_point_timestamp(scan_start: f64, azimuth: f64, period: f64, out: *mut f64) -> RigStatus {
    guard(|| {
        *out_arg(out, "out")? = point_timestamp(scan_start, azimuth, period)?;
        Ok(())
    })
}

/// `out = a ∘ b` (apply `b` first).
///
/// # Safety
/// All pointers must be valid; `out` may alias an input.
#[no_mangle]
pub unsafe extern "C" fn rig_transform_compose(
    a: *const RigTransform,
    b: *const RigTransform,
    out: *mut RigTransform,
) -> RigStatus {
    guard(|| {
        let a = to_rigid(a.as_ref().ok_or_else(|| null("a"))?, "b", "a")?;
        let b = to_rigid(b.as_ref().ok_or_else(|| null("b"))?, "c", "b")?;
        let composed = a.compose(&b)?;
        *out_arg(out, "out")? = from_rigid(&composed);
        Ok(())
    })
}

/// # Safety
/// Both pointers must be valid; `out` may alias `t`.
#[no_mangle]
pub unsafe extern "C" fn rig_transform_inverse(t: *const RigTransform, out: *mut RigTransform) -> RigStatus {
    guard(|| {
        let t = to_rigid(t.as_ref().ok_or_else(|| null("t"))?, "a", "b")?;
        *out_arg(out, "out")? = from_rigid(&t.inverse());
        Ok(())
    })
}

/// Initial guess mapping vehicle-2 LiDAR points into vehicle-1 LiDAR
/// coordinates: `inv(ins1←lidar1) · inv(world←ins1) · (world←ins2) · (ins2←lidar2)`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rig_chain_initial_transform(
    ins1_from_lidar1: *const RigTransform,
    world_from_ins1: *const RigTransform,
    world_from_ins2: *const RigTransform,
    ins2_from_lidar2: *const RigTransform,
    out: *mut RigTransform,
) -> RigStatus {
    guard(|| {
        let arg = |p: *const RigTransform, what: &str| p.as_ref().ok_or_else(|| null(what)).copied();
        let chained = chain_initial_transform(
            &to_rigid(&arg(ins1_from_lidar1, "ins1_from_lidar1")?, "lidar1", "ins1")?,
            &to_rigid(&arg(world_from_ins1, "world_from_ins1")?, "ins1", "world")?,
            &to_rigid(&arg(world_from_ins2, "world_from_ins2")?, "ins2", "world")?,
            &to_rigid(&arg(ins2_from_lidar2, "ins2_from_lidar2")?, "lidar2", "ins2")?,
        )?;
        *out_arg(out, "out")? = from_rigid(&chained);
        Ok(())
    })
}

/// Simulates a scene from a JSON scene config (`"{}"` for defaults).
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rig_recording_simulate(config_json: *const c_char, out: *mut *mut RigRecording) -> RigStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let out = out_arg(out, "out")?;
        let config: SceneConfig =
            serde_json::from_str(text).map_err(|e| Failure(RigStatus::InvalidConfig, format!("scene config: {e}")))?;
        config.validate()?;
        let recording = simulate_scene(&config)?;
        let id = recording_id(&recording, ScanFormat::Binary)?;
        *out = Box::into_raw(Box::new(RigRecording { recording, id }));
        Ok(())
    })
}

/// Loads a recording directory written by `rig_recording_write` or the CLI.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rig_recording_open(dir: *const c_char, out: *mut *mut RigRecording) -> RigStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        let out = out_arg(out, "out")?;
        let (manifest, recording) = read_recording(Path::new(dir))?;
        *out = Box::into_raw(Box::new(RigRecording {
            recording,
            id: manifest.recording_id,
        }));
        Ok(())
    })
}

/// Writes the recording (binary scans) to `dir`.
///
/// # Safety
/// `recording` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rig_recording_write(recording: *const RigRecording, dir: *const c_char) -> RigStatus {
    guard(|| {
        let rec = recording_arg(recording)?;
        write_recording(Path::new(str_arg(dir, "dir")?), &rec.recording, ScanFormat::Binary)?;
        Ok(())
    })
}

/// # Safety
/// `recording` must be a handle from this library, not freed before; NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn rig_recording_free(recording: *mut RigRecording) {
    if !recording.is_null() {
        drop(Box::from_raw(recording));
    }
}

/// # Safety
/// `recording` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rig_recording_vehicle_count(recording: *const RigRecording, out: *mut usize) -> RigStatus {
    guard(|| {
        *out_arg(out, "out")? = recording_arg(recording)?.recording.vehicles.len();
        Ok(())
    })
}

/// # Safety
/// `recording` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rig_recording_scan_count(
    recording: *const RigRecording,
    vehicle: usize,
    out: *mut usize,
) -> RigStatus {
    guard(|| {
        let rec = recording_arg(recording)?;
        let veh = rec
            .recording
            .vehicles
            .get(vehicle)
            .ok_or_else(|| Failure(RigStatus::InvalidArgument, format!("no vehicle {vehicle}")))?;
        *out_arg(out, "out")? = veh.scans.len();
        Ok(())
    })
}

/// Content hash of the recording as a new string.
///
/// # Safety
/// `recording` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rig_recording_id(recording: *const RigRecording, out: *mut *mut c_char) -> RigStatus {
    guard(|| {
        let id = recording_arg(recording)?.id.clone();
        *out_arg(out, "out")? = into_c_string(id)?;
        Ok(())
    })
}

/// Mean object misplacement (meters) of one vehicle's points under its
/// reported timestamps; `*has_objects` is false when no point hit an object.
///
/// # Safety
/// `recording` must be a live handle; `out` and `has_objects` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rig_sync_misalignment(
    recording: *const RigRecording,
    vehicle: usize,
    out: *mut f64,
    has_objects: *mut bool,
) -> RigStatus {
    guard(|| {
        let rec = recording_arg(recording)?;
        if vehicle >= rec.recording.vehicles.len() {
            return Err(Failure(RigStatus::InvalidArgument, format!("no vehicle {vehicle}")));
        }
        let value = sync_misalignment(&rec.recording, vehicle)?;
        *out_arg(has_objects, "has_objects")? = value.is_some();
        *out_arg(out, "out")? = value.unwrap_or(0.0);
        Ok(())
    })
}

/// Aligns every scan with one strategy; `*out_json` receives the run as JSON.
///
/// # Safety
/// `recording` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rig_align(
    recording: *const RigRecording,
    strategy: RigStrategy,
    out_json: *mut *mut c_char,
) -> RigStatus {
    guard(|| {
        let rec = recording_arg(recording)?;
        let out = out_arg(out_json, "out_json")?;
        let run = run_strategy(&rec.recording, &rec.id, strategy.into(), None)?;
        *out = into_c_string(serde_json::to_string(&run).map_err(Error::from)?)?;
        Ok(())
    })
}

/// Runs all three strategies and evaluates them against ground truth.
/// `options_json` may be NULL for defaults. `*out_table` receives the text
/// table, `*out_json` (if not NULL) the structured table.
///
/// # Safety
/// `recording` must be a live handle, `options_json` NULL or a NUL-terminated
/// string, `out_table` a valid pointer and `out_json` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn rig_evaluate(
    recording: *const RigRecording,
    options_json: *const c_char,
    out_table: *mut *mut c_char,
    out_json: *mut *mut c_char,
) -> RigStatus {
    guard(|| {
        let rec = recording_arg(recording)?;
        let options: EvalOptions = if options_json.is_null() {
            EvalOptions::default()
        } else {
            serde_json::from_str(str_arg(options_json, "options_json")?)
                .map_err(|e| Failure(RigStatus::InvalidConfig, format!("evaluation options: {e}")))?
        };
        let out_table = out_arg(out_table, "out_table")?;
        let runs = Strategy::ALL
            .iter()
            .map(|&s| run_strategy(&rec.recording, &rec.id, s, options.cameras.as_deref()))
            .collect::<rigalign::Result<Vec<_>>>()?;
        let table = evaluate_runs(&rec.recording, &runs, &options)?;
        let json = serde_json::to_string(&table).map_err(Error::from)?;
        *out_table = into_c_string(format_table(&table))?;
        if let Some(out_json) = out_json.as_mut() {
            match into_c_string(json) {
                Ok(s) => *out_json = s,
                Err(e) => {
                    rig_string_free(*out_table);
                    *out_table = ptr::null_mut();
                    return Err(e);
                }
            }
        }
        Ok(())
    })
}
