//! Spinning-LiDAR scans with per-point acquisition times, and ego-motion
//! compensation (deskewing).
//!
//! Azimuth convention: radians in `[0, 2π)`, measured clockwise (seen from
//! above) from the sensor's +x axis, i.e. `atan2(-y, x)`. The sensor spins
//! clockwise, so acquisition time grows linearly with azimuth across one
//! revolution.

pub mod io;

use std::f64::consts::TAU;

use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FrameId, PoseTrajectory, RigidTransform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    /// Sensor frame; at the acquisition instant unless the scan is compensated.
    pub position: Vector3<f64>,
    pub intensity: f64,
    pub azimuth: f64,
    pub timestamp: f64,
    pub object_id: Option<u64>,
}

/// One revolution of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub scan_start: f64,
    pub period: f64,
    pub sensor_frame: FrameId,
    /// Set once the points have been re-expressed in the sensor frame at this
    /// time; `None` for raw scans.
    pub compensated_to: Option<f64>,
    pub points: Vec<LidarPoint>,
}

impl LidarScan {
    pub fn scan_end(&self) -> f64 {
        self.scan_start + self.period
    }

    /// Checks the timing invariants: every point inside the revolution and
    /// timestamps non-decreasing in storage order.
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) {
            return Err(Error::Domain(format!("scan period {} must be positive", self.period)));
        }
        let (lo, hi) = (self.scan_start, self.scan_end());
        let mut prev = f64::NEG_INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            if p.timestamp < lo || p.timestamp > hi {
                return Err(Error::Domain(format!(
                    "point {i} timestamp {} outside scan [{lo}, {hi}]",
                    p.timestamp
                )));
            }
            if p.timestamp < prev {
                return Err(Error::Domain(format!("point {i} timestamp decreases")));
            }
            prev = p.timestamp;
        }
        Ok(())
    }

    /// The time each point's `position` is expressed at.
    pub fn expressed_at(&self, point: &LidarPoint) -> f64 {
        self.compensated_to.unwrap_or(point.timestamp)
    }

    pub fn mean_timestamp(&self, indices: &[usize]) -> Option<f64> {
        if indices.is_empty() {
            return None;
        }
        let sum: f64 = indices.iter().map(|&i| self.points[i].timestamp).sum();
        Some(sum / indices.len() as f64)
    }
}

/// Azimuth of a sensor-frame direction under the clockwise convention.
pub fn azimuth_of(v: &Vector3<f64>) -> f64 {
    let a = (-v.y).atan2(v.x);
    if a < 0.0 {
        // a + TAU can round up to exactly TAU for tiny negative angles
        let wrapped = a + TAU;
        if wrapped >= TAU {
            0.0
        } else {
            wrapped
        }
    } else {
        a
    }
}

/// Acquisition time of an azimuth under the linear sweep model.
pub fn point_timestamp(scan_start: f64, azimuth: f64, period: f64) -> Result<f64> {
    if !(0.0..TAU).contains(&azimuth) {
        return Err(Error::Domain(format!("azimuth {azimuth} outside [0, 2π)")));
    }
    if !(period > 0.0) {
        return Err(Error::Domain(format!("period {period} must be positive")));
    }
    let t = scan_start + period * azimuth / TAU;
    let end = scan_start + period;
    // rounding can land the last azimuths on the next revolution's start
    Ok(if t >= end { end.next_down() } else { t })
}

/// `world ← lidar` at time `t`.
pub(crate) fn lidar_pose_at(traj: &PoseTrajectory, lidar_extrinsic: &Isometry3<f64>, t: f64) -> Result<Isometry3<f64>> {
    Ok(traj.interpolate_isometry(t)? * lidar_extrinsic)
}

pub(crate) fn check_extrinsic(
    sensor_frame: &FrameId,
    traj: &PoseTrajectory,
    lidar_extrinsic: &RigidTransform,
) -> Result<()> {
    if lidar_extrinsic.source_frame() != sensor_frame {
        return Err(Error::FrameMismatch {
            left: lidar_extrinsic.source_frame().to_string(),
            right: sensor_frame.to_string(),
        });
    }
    if lidar_extrinsic.target_frame() != traj.body_frame() {
        return Err(Error::FrameMismatch {
            left: traj.body_frame().to_string(),
            right: lidar_extrinsic.target_frame().to_string(),
        });
    }
    Ok(())
}

/// Re-expresses every point in the sensor frame as it was at `ref_time`:
/// `p' = T_WL(ref)⁻¹ · T_WL(t_p) · p`, with `T_WL(t) = traj(t) ∘ extrinsic`.
///
/// `lidar_extrinsic` maps the scan's sensor frame into the trajectory's body
/// frame. Already-compensated scans are retargeted from their current
/// reference time. Original per-point timestamps are kept.
pub fn deskew_to(
    scan: &LidarScan,
    traj: &PoseTrajectory,
    lidar_extrinsic: &RigidTransform,
    ref_time: f64,
) -> Result<LidarScan> {
    let indices: Vec<usize> = (0..scan.points.len()).collect();
    let points = deskew_points(scan, &indices, traj, lidar_extrinsic, ref_time)?;
    Ok(LidarScan {
        scan_start: scan.scan_start,
        period: scan.period,
        sensor_frame: scan.sensor_frame.clone(),
        compensated_to: Some(ref_time),
        points: scan
            .points
            .iter()
            .zip(points)
            .map(|(p, position)| LidarPoint { position, ..p.clone() })
            .collect(),
    })
}

/// Compensated positions of a subset of points (same order as `indices`).
pub fn deskew_points(
    scan: &LidarScan,
    indices: &[usize],
    traj: &PoseTrajectory,
    lidar_extrinsic: &RigidTransform,
    ref_time: f64,
) -> Result<Vec<Vector3<f64>>> {
    check_extrinsic(&scan.sensor_frame, traj, lidar_extrinsic)?;
    let ext = lidar_extrinsic.isometry();
    let ref_inv = lidar_pose_at(traj, ext, ref_time)?.inverse();

    // consecutive points usually share a firing time
    let mut cached: Option<(f64, Isometry3<f64>)> = None;
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let point = &scan.points[i];
        let t = scan.expressed_at(point);
        let motion = match cached {
            Some((ct, m)) if ct == t => m,
            _ => {
                let m = ref_inv * lidar_pose_at(traj, ext, t)?;
                cached = Some((t, m));
                m
            }
        };
        out.push(motion.transform_point(&Point3::from(point.position)).coords);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use nalgebra::UnitQuaternion;

    use super::*;
    use crate::geometry::PoseSample;

    #[test]
    fn timestamp_examples() {
        assert_eq!(point_timestamp(3.0, 0.0, 0.1).unwrap(), 3.0);
        assert!((point_timestamp(3.0, PI, 0.1).unwrap() - 3.05).abs() < 1e-15);
        let last = point_timestamp(0.0, TAU.next_down(), 0.1).unwrap();
        assert!(last < 0.1 && last > 0.1 - 1e-12);
        assert!(point_timestamp(3.0, TAU.next_down(), 0.1).unwrap() < 3.1);
    }

    #[test]
    fn timestamp_domain_errors() {
        assert!(point_timestamp(0.0, TAU, 0.1).is_err());
        assert!(point_timestamp(0.0, -1e-9, 0.1).is_err());
        assert!(point_timestamp(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn azimuth_is_clockwise() {
        assert_eq!(azimuth_of(&Vector3::new(1.0, 0.0, 0.0)), 0.0);
        assert!((azimuth_of(&Vector3::new(0.0, -1.0, 0.0)) - PI / 2.0).abs() < 1e-15);
        assert!((azimuth_of(&Vector3::new(0.0, 1.0, 0.0)) - 1.5 * PI).abs() < 1e-15);
        assert!(azimuth_of(&Vector3::new(1.0, 1e-300, 0.0)) < TAU);
    }

    fn still_traj() -> PoseTrajectory {
        let pose = RigidTransform::new(
            UnitQuaternion::from_euler_angles(0.01, 0.02, 0.7),
            Vector3::new(5.0, -3.0, 0.2),
            "ins",
            "world",
        );
        PoseTrajectory::new(vec![
            PoseSample {
                time: 0.0,
                pose: pose.clone(),
            },
            PoseSample { time: 1.0, pose },
        ])
        .unwrap()
    }

    fn scan_with(points: Vec<(Vector3<f64>, f64)>) -> LidarScan {
        LidarScan {
            scan_start: 0.1,
            period: 0.1,
            sensor_frame: "lidar".into(),
            compensated_to: None,
            points: points
                .into_iter()
                .map(|(position, timestamp)| LidarPoint {
                    position,
                    intensity: 0.5,
                    azimuth: 0.0,
                    timestamp,
                    object_id: None,
                })
                .collect(),
        }
    }

    #[test]
    fn stationary_ego_is_identity() {
        let ext = RigidTransform::from_yaw(0.3, Vector3::new(0.0, 0.0, 1.8), "lidar", "ins");
        let scan = scan_with(vec![
            (Vector3::new(10.0, 2.0, -1.0), 0.1),
            (Vector3::new(-40.0, 7.0, 3.0), 0.15),
            (Vector3::new(1.0, -90.0, 0.5), 0.2),
        ]);
        let out = deskew_to(&scan, &still_traj(), &ext, 0.1).unwrap();
        for (a, b) in scan.points.iter().zip(&out.points) {
            assert!((a.position - b.position).norm() < 1e-12);
            assert_eq!(a.timestamp, b.timestamp);
        }
        assert_eq!(out.compensated_to, Some(0.1));
    }

    #[test]
    fn frame_and_coverage_errors() {
        let scan = scan_with(vec![(Vector3::new(1.0, 0.0, 0.0), 0.15)]);
        let wrong = RigidTransform::identity("ins").relabel("radar", "ins");
        assert!(matches!(
            deskew_to(&scan, &still_traj(), &wrong, 0.1),
            Err(Error::FrameMismatch { .. })
        ));
        let ext = RigidTransform::identity("ins").relabel("lidar", "ins");
        assert!(matches!(
            deskew_to(&scan, &still_traj(), &ext, 1.5),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn validate_catches_out_of_scan_points() {
        let scan = scan_with(vec![(Vector3::zeros(), 0.1), (Vector3::zeros(), 0.25)]);
        assert!(scan.validate().is_err());
        let scan = scan_with(vec![(Vector3::zeros(), 0.15), (Vector3::zeros(), 0.12)]);
        assert!(scan.validate().is_err());
    }
}
