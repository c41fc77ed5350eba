//! Assigning LiDAR geometry to camera frames.
//!
//! * stamp: every camera gets the whole scan and the frame nearest the scan
//!   header stamp; points stay at the preprocessing reference (scan start).
//! * frame: each camera takes the points inside its azimuth wedge, picks the
//!   frame nearest their mean acquisition time and deskews them to it.
//! * target: like frame for the background, but every object picks its own
//!   frame from the mean time of its member points and is compensated to it.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_box3d, Box3D, CameraModel, PoseTrajectory, RigidTransform};
use crate::scan::{azimuth_of, deskew_points, point_timestamp, LidarScan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Stamp,
    Frame,
    Target,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Stamp, Strategy::Frame, Strategy::Target];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Stamp => "stamp",
            Strategy::Frame => "frame",
            Strategy::Target => "target",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stamp" => Ok(Strategy::Stamp),
            "frame" => Ok(Strategy::Frame),
            "target" => Ok(Strategy::Target),
            other => Err(Error::InvalidConfig(format!(
                "unknown strategy `{other}` (expected stamp, frame or target)"
            ))),
        }
    }
}

/// Reported trigger times of one camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraFrameSchedule {
    pub camera_id: String,
    pub frame_timestamps: Vec<f64>,
}

impl CameraFrameSchedule {
    pub fn new(camera_id: impl Into<String>, frame_timestamps: Vec<f64>) -> Result<Self> {
        let camera_id = camera_id.into();
        if let Some(i) = frame_timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "camera `{camera_id}` frame {} is not after its predecessor",
                i + 1
            )));
        }
        Ok(CameraFrameSchedule {
            camera_id,
            frame_timestamps,
        })
    }

    /// Consecutive deltas must stay within ±10% of the nominal period.
    pub fn check_nominal_rate(&self, rate: f64) -> Result<()> {
        let nominal = 1.0 / rate;
        for (i, w) in self.frame_timestamps.windows(2).enumerate() {
            let dt = w[1] - w[0];
            if (dt - nominal).abs() > 0.1 * nominal {
                return Err(Error::Domain(format!(
                    "camera `{}` frame interval {i} is {dt} s, nominal {nominal} s",
                    self.camera_id
                )));
            }
        }
        Ok(())
    }

    /// Frame whose timestamp is nearest `t`; ties go to the earlier frame.
    pub fn nearest_frame(&self, t: f64) -> Result<f64> {
        let times = &self.frame_timestamps;
        if times.is_empty() {
            return Err(Error::EmptySchedule(self.camera_id.clone()));
        }
        let i = times.partition_point(|&f| f < t);
        let best = match (i.checked_sub(1).map(|j| times[j]), times.get(i)) {
            (Some(before), Some(&after)) => {
                if t - before <= after - t {
                    before
                } else {
                    after
                }
            }
            (Some(before), None) => before,
            (None, Some(&after)) => after,
            (None, None) => unreachable!("non-empty schedule"),
        };
        Ok(best)
    }
}

/// Azimuth interval of the sweep seen by a camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AzimuthWedge {
    pub center: f64,
    pub half_width: f64,
}

impl AzimuthWedge {
    pub fn of_camera(cam: &CameraModel) -> Self {
        AzimuthWedge {
            center: azimuth_of(&cam.optical_axis_in_lidar()),
            half_width: cam.horizontal_fov / 2.0,
        }
    }

    pub fn contains(&self, azimuth: f64) -> bool {
        let mut d = (azimuth - self.center) % TAU;
        if d > PI {
            d -= TAU;
        } else if d <= -PI {
            d += TAU;
        }
        d.abs() <= self.half_width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectFrame {
    pub frame_time: f64,
    pub compensation_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentAssignment {
    pub camera_id: String,
    pub chosen_frame_time: f64,
    /// Indices into the scan's points.
    pub point_subset: Vec<usize>,
    /// Time the subset's points are expressed at.
    pub compensation_time: f64,
    /// Objects with their own frame choice (target strategy only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_object: BTreeMap<u64, ObjectFrame>,
}

impl AlignmentAssignment {
    /// Frame used for an object seen by this camera.
    pub fn frame_for_object(&self, object_id: u64) -> ObjectFrame {
        self.per_object.get(&object_id).copied().unwrap_or(ObjectFrame {
            frame_time: self.chosen_frame_time,
            compensation_time: self.compensation_time,
        })
    }
}

/// An assignment together with the compensated sensor-frame positions of its
/// `point_subset` (same order).
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedCamera {
    pub assignment: AlignmentAssignment,
    pub points: Vec<Vector3<f64>>,
}

/// An object box in the scan's sensor frame plus the indices of its points.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectMembership {
    pub bbox: Box3D,
    pub member_indices: Vec<usize>,
}

/// Groups points by their `object_id` (exact simulator membership).
pub fn membership_from_labels(scan: &LidarScan) -> BTreeMap<u64, Vec<usize>> {
    let mut out: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, p) in scan.points.iter().enumerate() {
        if let Some(id) = p.object_id {
            out.entry(id).or_default().push(i);
        }
    }
    out
}

/// Fallback membership for unlabeled data: points inside the box inflated
/// by 5 cm. `box_at` gives the box (sensor frame) at a point's acquisition
/// instant.
pub fn membership_from_boxes(scan: &LidarScan, box_at: impl Fn(f64) -> Box3D) -> Vec<usize> {
    const MARGIN: f64 = 0.05;
    scan.points
        .iter()
        .enumerate()
        .filter(|(_, p)| box_at(p.timestamp).contains(&p.position, MARGIN))
        .map(|(i, _)| i)
        .collect()
}

fn schedule_for<'a>(schedules: &'a [CameraFrameSchedule], camera_id: &str) -> Result<&'a CameraFrameSchedule> {
    schedules
        .iter()
        .find(|s| s.camera_id == camera_id)
        .ok_or_else(|| Error::EmptySchedule(camera_id.to_owned()))
}

/// Every camera gets all points and the frame nearest the scan header stamp.
pub fn stamp_align(scan: &LidarScan, schedules: &[CameraFrameSchedule]) -> Result<Vec<AlignmentAssignment>> {
    let all: Vec<usize> = (0..scan.points.len()).collect();
    schedules
        .iter()
        .map(|s| {
            Ok(AlignmentAssignment {
                camera_id: s.camera_id.clone(),
                chosen_frame_time: s.nearest_frame(scan.scan_start)?,
                point_subset: all.clone(),
                compensation_time: scan.scan_start,
                per_object: BTreeMap::new(),
            })
        })
        .collect()
}

/// Wedge subset of one camera and the frame nearest its mean point time.
fn wedge_assignment(
    scan: &LidarScan,
    cam: &CameraModel,
    schedule: &CameraFrameSchedule,
) -> Result<AlignmentAssignment> {
    let wedge = AzimuthWedge::of_camera(cam);
    let subset: Vec<usize> = scan
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| wedge.contains(p.azimuth))
        .map(|(i, _)| i)
        .collect();
    let representative = match scan.mean_timestamp(&subset) {
        Some(t) => t,
        // nothing returned inside the wedge: use the sweep time of its center
        None => point_timestamp(scan.scan_start, wedge.center, scan.period)?,
    };
    let frame = schedule.nearest_frame(representative)?;
    Ok(AlignmentAssignment {
        camera_id: cam.id.clone(),
        chosen_frame_time: frame,
        point_subset: subset,
        compensation_time: frame,
        per_object: BTreeMap::new(),
    })
}

pub fn frame_align(
    scan: &LidarScan,
    cameras: &[CameraModel],
    schedules: &[CameraFrameSchedule],
    traj: &PoseTrajectory,
    lidar_extrinsic: &RigidTransform,
) -> Result<Vec<AlignedCamera>> {
    cameras
        .iter()
        .map(|cam| {
            let assignment = wedge_assignment(scan, cam, schedule_for(schedules, &cam.id)?)?;
            let points = deskew_points(
                scan,
                &assignment.point_subset,
                traj,
                lidar_extrinsic,
                assignment.compensation_time,
            )?;
            Ok(AlignedCamera { assignment, points })
        })
        .collect()
}

/// Whether `cam` sees the object: its box projects into the image or one of
/// its points lies inside the camera's wedge.
fn camera_observes(scan: &LidarScan, cam: &CameraModel, object: &ObjectMembership) -> bool {
    let wedge = AzimuthWedge::of_camera(cam);
    object
        .member_indices
        .iter()
        .any(|&i| wedge.contains(scan.points[i].azimuth))
        || (object.bbox.frame == scan.sensor_frame && project_box3d(cam, &object.bbox, &cam.extrinsic).is_some())
}

pub fn target_align(
    scan: &LidarScan,
    cameras: &[CameraModel],
    objects: &[ObjectMembership],
    schedules: &[CameraFrameSchedule],
    traj: &PoseTrajectory,
    lidar_extrinsic: &RigidTransform,
) -> Result<Vec<AlignedCamera>> {
    let mut mean_times = Vec::with_capacity(objects.len());
    let mut is_member = vec![false; scan.points.len()];
    for obj in objects {
        let mean = scan
            .mean_timestamp(&obj.member_indices)
            .ok_or(Error::ObjectWithoutPoints(obj.bbox.object_id))?;
        mean_times.push(mean);
        for &i in &obj.member_indices {
            is_member[i] = true;
        }
    }

    cameras
        .iter()
        .map(|cam| {
            let schedule = schedule_for(schedules, &cam.id)?;
            let mut assignment = wedge_assignment(scan, cam, schedule)?;
            let background: Vec<usize> = assignment
                .point_subset
                .iter()
                .copied()
                .filter(|&i| !is_member[i])
                .collect();
            let mut points = deskew_points(scan, &background, traj, lidar_extrinsic, assignment.compensation_time)?;
            let mut subset = background;
            for (obj, &mean) in objects.iter().zip(&mean_times) {
                if !camera_observes(scan, cam, obj) {
                    continue;
                }
                let frame = schedule.nearest_frame(mean)?;
                points.extend(deskew_points(scan, &obj.member_indices, traj, lidar_extrinsic, frame)?);
                subset.extend_from_slice(&obj.member_indices);
                assignment.per_object.insert(
                    obj.bbox.object_id,
                    ObjectFrame {
                        frame_time: frame,
                        compensation_time: frame,
                    },
                );
            }
            assignment.point_subset = subset;
            Ok(AlignedCamera { assignment, points })
        })
        .collect()
}

/// Runs one strategy on a scan. For `stamp` the points are deskewed to the
/// scan start (the preprocessing reference) and nothing else.
pub fn align_scan(
    strategy: Strategy,
    scan: &LidarScan,
    cameras: &[CameraModel],
    objects: &[ObjectMembership],
    schedules: &[CameraFrameSchedule],
    traj: &PoseTrajectory,
    lidar_extrinsic: &RigidTransform,
) -> Result<Vec<AlignedCamera>> {
    match strategy {
        Strategy::Stamp => {
            let all: Vec<usize> = (0..scan.points.len()).collect();
            let points = deskew_points(scan, &all, traj, lidar_extrinsic, scan.scan_start)?;
            let camera_schedules: Vec<CameraFrameSchedule> = cameras
                .iter()
                .map(|c| schedule_for(schedules, &c.id).cloned())
                .collect::<Result<_>>()?;
            Ok(stamp_align(scan, &camera_schedules)?
                .into_iter()
                .map(|assignment| AlignedCamera {
                    assignment,
                    points: points.clone(),
                })
                .collect())
        }
        Strategy::Frame => frame_align(scan, cameras, schedules, traj, lidar_extrinsic),
        Strategy::Target => target_align(scan, cameras, objects, schedules, traj, lidar_extrinsic),
    }
}
