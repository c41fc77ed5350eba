use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::transform::{FrameId, RigidTransform};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub time: f64,
    pub pose: RigidTransform,
}

/// Time-ordered vehicle poses (`world ← ins`), interpolated piecewise:
/// translation linearly, rotation by slerp between the bracketing samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PoseSample>", into = "Vec<PoseSample>")]
pub struct PoseTrajectory {
    samples: Vec<PoseSample>,
}

impl PoseTrajectory {
    pub fn new(samples: Vec<PoseSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TooFewSamples(samples.len()));
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].time > w[0].time) {
                return Err(Error::NonIncreasingTimestamps { index: i + 1 });
            }
            if w[1].pose.source_frame() != w[0].pose.source_frame()
                || w[1].pose.target_frame() != w[0].pose.target_frame()
            {
                return Err(Error::FrameMismatch {
                    left: w[0].pose.source_frame().to_string(),
                    right: w[1].pose.source_frame().to_string(),
                });
            }
        }
        Ok(PoseTrajectory { samples })
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].time
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.start_time() && t <= self.end_time()
    }

    /// Frame the poses map from (the vehicle body / INS frame).
    pub fn body_frame(&self) -> &FrameId {
        self.samples[0].pose.source_frame()
    }

    pub fn world_frame(&self) -> &FrameId {
        self.samples[0].pose.target_frame()
    }

    pub fn check_coverage(&self, start: f64, end: f64) -> Result<()> {
        for t in [start, end] {
            if !self.covers(t) {
                return Err(self.out_of_range(t));
            }
        }
        Ok(())
    }

    fn out_of_range(&self, t: f64) -> Error {
        Error::OutOfRange {
            t,
            start: self.start_time(),
            end: self.end_time(),
        }
    }

    /// Interpolated pose at `t`; no extrapolation outside the sampled span.
    pub fn interpolate(&self, t: f64) -> Result<RigidTransform> {
        let iso = self.interpolate_isometry(t)?;
        Ok(RigidTransform::from_isometry(
            iso,
            self.body_frame().clone(),
            self.world_frame().clone(),
        ))
    }

    /// Label-free variant of [`interpolate`](Self::interpolate) for hot loops.
    pub fn interpolate_isometry(&self, t: f64) -> Result<Isometry3<f64>> {
        if !t.is_finite() || !self.covers(t) {
            return Err(self.out_of_range(t));
        }
        // index of the first sample with time > t
        let upper = self.samples.partition_point(|s| s.time <= t);
        let lo = &self.samples[upper - 1];
        if lo.time == t || upper == self.samples.len() {
            return Ok(*lo.pose.isometry());
        }
        let hi = &self.samples[upper];
        let s = (t - lo.time) / (hi.time - lo.time);
        Ok(interpolate_isometries(lo.pose.isometry(), hi.pose.isometry(), s))
    }
}

impl TryFrom<Vec<PoseSample>> for PoseTrajectory {
    type Error = Error;

    fn try_from(samples: Vec<PoseSample>) -> Result<Self> {
        PoseTrajectory::new(samples)
    }
}

impl From<PoseTrajectory> for Vec<PoseSample> {
    fn from(t: PoseTrajectory) -> Self {
        t.samples
    }
}

/// Linear translation, shortest-arc slerp rotation; `s ∈ [0, 1]`.
pub fn interpolate_isometries(a: &Isometry3<f64>, b: &Isometry3<f64>, s: f64) -> Isometry3<f64> {
    let translation = a.translation.vector.lerp(&b.translation.vector, s);
    Isometry3::from_parts(
        Translation3::from(translation),
        slerp_shortest(&a.rotation, &b.rotation, s),
    )
}

pub fn slerp_shortest(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    let qa = a.quaternion();
    let mut qb = *b.quaternion();
    let mut dot = qa.dot(&qb);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    if dot > 1.0 - 1e-12 {
        // nearly parallel: normalized lerp is exact to machine precision
        return UnitQuaternion::from_quaternion(qa.lerp(&qb, s));
    }
    let theta = dot.min(1.0).acos();
    let sin_theta = theta.sin();
    let wa = ((1.0 - s) * theta).sin() / sin_theta;
    let wb = (s * theta).sin() / sin_theta;
    UnitQuaternion::from_quaternion(qa * wa + qb * wb)
}
