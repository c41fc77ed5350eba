//! Projected-box evaluation of alignment strategies against simulator
//! ground truth: average IoU, recall at IoU thresholds and center offset.
//!
//! The "annotated" 3D box of an object is what a labeler would draw around
//! its compensated points: each member point carries the object's true
//! center at the point's acquisition instant, placed through the pose at the
//! point's reported time and re-expressed at the compensation time. The box
//! is projected with the camera extrinsic and compared with the true box at
//! the true time of the chosen frame.

mod metrics;
mod report;

use std::collections::{BTreeSet, HashMap};

use nalgebra::{Isometry3, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{
    average_iou, center_offset, iou, mean_center_offset, recall_at, relative_delta, MatchRecord, MetricsRow,
    MetricsTable, RecallPoint, RowDeltas, DEFAULT_THRESHOLDS,
};
pub use report::{format_delta, format_delta_latex, format_latex, format_table};

use crate::alignment::{align_scan, membership_from_labels, AlignmentAssignment, ObjectMembership, Strategy};
use crate::error::{Error, Result};
use crate::geometry::{project_box3d, Box2D, Box3D};
use crate::sim::{SceneRecording, VehicleRecording};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub thresholds: Vec<f64>,
    /// Objects with fewer member points in a scan are not evaluated there.
    pub min_points: usize,
    /// Camera subset; all cameras when `None`.
    pub cameras: Option<Vec<String>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            min_points: 5,
            cameras: None,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidConfig("IoU thresholds must lie in [0, 1]".into()));
        }
        if self.thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("IoU thresholds must be increasing".into()));
        }
        Ok(())
    }

    fn wants_camera(&self, id: &str) -> bool {
        self.cameras.as_ref().is_none_or(|c| c.iter().any(|x| x == id))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanAssignments {
    pub vehicle: usize,
    pub scan_index: usize,
    pub assignments: Vec<AlignmentAssignment>,
}

/// Every scan of a recording aligned with one strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub recording_id: String,
    pub scans: Vec<ScanAssignments>,
}

fn scan_keys(rec: &SceneRecording) -> Vec<(usize, usize)> {
    rec.vehicles
        .iter()
        .enumerate()
        .flat_map(|(v, veh)| (0..veh.scans.len()).map(move |k| (v, k)))
        .collect()
}

/// Annotated box of an object (sensor frame at `compensation_time`) from
/// its member points in scan `scan_index` of `vehicle`.
pub fn annotated_box(
    rec: &SceneRecording,
    vehicle: usize,
    scan_index: usize,
    object_id: u64,
    members: &[usize],
    compensation_time: f64,
) -> Result<Box3D> {
    let veh = &rec.vehicles[vehicle];
    let scan = &veh.scans[scan_index];
    let object = rec
        .truth
        .world
        .object(object_id)
        .ok_or_else(|| Error::SceneMismatch(format!("object {object_id} not in ground truth")))?;
    if members.is_empty() {
        return Err(Error::ObjectWithoutPoints(object_id));
    }
    let at_ref = veh.lidar_pose(compensation_time)?.inverse();
    let heading_w = Vector3::new(object.yaw.cos(), object.yaw.sin(), 0.0);
    let mut center = Vector3::zeros();
    let mut heading = Vector3::zeros();
    let mut cache: Option<(f64, Isometry3<f64>)> = None;
    for &i in members {
        let p = &scan.points[i];
        let reported = p.timestamp;
        let t_true = rec.true_point_time(scan_index, p)?;
        let motion = match cache {
            Some((t, m)) if t == reported => m,
            _ => {
                let m = at_ref * veh.lidar_pose(reported)? * veh.lidar_pose(t_true)?.inverse();
                cache = Some((reported, m));
                m
            }
        };
        center += motion.transform_point(&Point3::from(object.center_at(t_true))).coords;
        heading += motion.rotation * heading_w;
    }
    Ok(Box3D {
        center: center / members.len() as f64,
        dimensions: object.dimensions,
        yaw: heading.y.atan2(heading.x),
        object_id,
        class_label: object.class_label,
        frame: scan.sensor_frame.clone(),
    })
}

/// Member points per object, with a sensor-frame box at the object's mean
/// reported time.
pub fn scan_objects(rec: &SceneRecording, vehicle: usize, scan_index: usize) -> Result<Vec<ObjectMembership>> {
    let scan = &rec.vehicles[vehicle].scans[scan_index];
    membership_from_labels(scan)
        .into_iter()
        .map(|(id, member_indices)| {
            let mean = scan
                .mean_timestamp(&member_indices)
                .ok_or(Error::ObjectWithoutPoints(id))?;
            Ok(ObjectMembership {
                bbox: annotated_box(rec, vehicle, scan_index, id, &member_indices, mean)?,
                member_indices,
            })
        })
        .collect()
}

/// Aligns every scan of every vehicle with `strategy`.
pub fn run_strategy(
    rec: &SceneRecording,
    recording_id: &str,
    strategy: Strategy,
    cameras: Option<&[String]>,
) -> Result<StrategyRun> {
    let scans = scan_keys(rec)
        .par_iter()
        .map(|&(v, k)| {
            let veh = &rec.vehicles[v];
            let cams: Vec<_> = veh
                .cameras
                .iter()
                .filter(|c| cameras.is_none_or(|ids| ids.contains(&c.id)))
                .cloned()
                .collect();
            let objects = match strategy {
                Strategy::Target => scan_objects(rec, v, k)?,
                _ => Vec::new(),
            };
            let aligned = align_scan(
                strategy,
                &veh.scans[k],
                &cams,
                &objects,
                &veh.schedules,
                &veh.trajectory,
                &veh.lidar_extrinsic,
            )?;
            Ok(ScanAssignments {
                vehicle: v,
                scan_index: k,
                assignments: aligned.into_iter().map(|a| a.assignment).collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(StrategyRun {
        strategy,
        recording_id: recording_id.to_owned(),
        scans,
    })
}

fn check_runs(rec: &SceneRecording, runs: &[StrategyRun]) -> Result<()> {
    let Some(first) = runs.first() else {
        return Err(Error::SceneMismatch("no strategy runs to evaluate".into()));
    };
    let keys = scan_keys(rec);
    for run in runs {
        if run.recording_id != first.recording_id {
            return Err(Error::SceneMismatch(format!(
                "{} run is from recording {}, {} run from {}",
                run.strategy, run.recording_id, first.strategy, first.recording_id
            )));
        }
        let run_keys: Vec<(usize, usize)> = run.scans.iter().map(|s| (s.vehicle, s.scan_index)).collect();
        if run_keys != keys {
            return Err(Error::SceneMismatch(format!(
                "{} run does not cover the recording's scans",
                run.strategy
            )));
        }
    }
    let mut seen = BTreeSet::new();
    for run in runs {
        if !seen.insert(run.strategy) {
            return Err(Error::SceneMismatch(format!("strategy {} given twice", run.strategy)));
        }
    }
    Ok(())
}

type GtIndex<'a> = HashMap<(usize, &'a str, usize, u64), &'a Box2D>;

fn frame_index(veh: &VehicleRecording, camera_id: &str, frame_time: f64) -> Result<usize> {
    let schedule = veh
        .schedule(camera_id)
        .ok_or_else(|| Error::EmptySchedule(camera_id.to_owned()))?;
    schedule
        .frame_timestamps
        .iter()
        .position(|&t| t == frame_time)
        .ok_or_else(|| {
            Error::SceneMismatch(format!(
                "frame time {frame_time} is not in camera `{camera_id}`'s schedule"
            ))
        })
}

/// Match records of each run, over the common key set: (vehicle, scan,
/// camera, object) with enough member points and a ground-truth box at the
/// frame every strategy chose.
pub fn match_records(rec: &SceneRecording, runs: &[StrategyRun], opts: &EvalOptions) -> Result<Vec<Vec<MatchRecord>>> {
    opts.validate()?;
    check_runs(rec, runs)?;
    let gt: GtIndex = rec
        .truth
        .boxes_2d
        .iter()
        .map(|g| ((g.vehicle, g.camera_id.as_str(), g.frame_index, g.object_id), &g.bbox))
        .collect();

    let per_scan: Vec<Vec<Vec<MatchRecord>>> = (0..runs[0].scans.len())
        .into_par_iter()
        .map(|s| {
            let (v, k) = (runs[0].scans[s].vehicle, runs[0].scans[s].scan_index);
            let veh = &rec.vehicles[v];
            let members = membership_from_labels(&veh.scans[k]);
            let mut out = vec![Vec::new(); runs.len()];
            for cam in veh.cameras.iter().filter(|c| opts.wants_camera(&c.id)) {
                let assignments: Vec<&AlignmentAssignment> = runs
                    .iter()
                    .map(|r| {
                        r.scans[s]
                            .assignments
                            .iter()
                            .find(|a| a.camera_id == cam.id)
                            .ok_or_else(|| {
                                Error::SceneMismatch(format!("{} run lacks camera `{}`", r.strategy, cam.id))
                            })
                    })
                    .collect::<Result<_>>()?;
                for (&id, idx) in &members {
                    if idx.len() < opts.min_points {
                        continue;
                    }
                    let mut picks = Vec::with_capacity(runs.len());
                    for a in &assignments {
                        let choice = a.frame_for_object(id);
                        let fi = frame_index(veh, &cam.id, choice.frame_time)?;
                        match gt.get(&(v, cam.id.as_str(), fi, id)) {
                            Some(&b) => picks.push((choice, *b)),
                            None => break,
                        }
                    }
                    if picks.len() != runs.len() {
                        continue;
                    }
                    for (r, (choice, truth)) in picks.into_iter().enumerate() {
                        let annotated = annotated_box(rec, v, k, id, idx, choice.compensation_time)?;
                        let projected = project_box3d(cam, &annotated, &cam.extrinsic);
                        out[r].push(MatchRecord::new(
                            v,
                            k,
                            id,
                            cam.id.clone(),
                            choice.frame_time,
                            projected,
                            truth,
                        ));
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut records = vec![Vec::new(); runs.len()];
    for scan in per_scan {
        for (r, recs) in scan.into_iter().enumerate() {
            records[r].extend(recs);
        }
    }
    Ok(records)
}

/// One row per run (first run is the baseline for the deltas).
pub fn evaluate_runs(rec: &SceneRecording, runs: &[StrategyRun], opts: &EvalOptions) -> Result<MetricsTable> {
    let records = match_records(rec, runs, opts)?;
    table_from_records(
        runs.iter().map(|r| r.strategy).zip(records.iter().map(Vec::as_slice)),
        opts,
    )
}

pub fn table_from_records<'a>(
    rows: impl IntoIterator<Item = (Strategy, &'a [MatchRecord])>,
    opts: &EvalOptions,
) -> Result<MetricsTable> {
    let rows = rows
        .into_iter()
        .map(|(s, m)| MetricsRow::from_matches(s, m, &opts.thresholds))
        .collect::<Result<_>>()?;
    Ok(MetricsTable::new(opts.thresholds.clone(), rows))
}
