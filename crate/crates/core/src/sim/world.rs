use std::f64::consts::TAU;

use nalgebra::{Rotation3, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::SceneConfig;
use crate::geometry::{Box3D, ObjectClass};

pub const WORLD_FRAME: &str = "world";
const BUILDING_ID_BASE: u64 = 10_000;

/// A cuboid moving at constant velocity with a fixed heading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectTrack {
    pub object_id: u64,
    pub class_label: ObjectClass,
    pub dimensions: Vector3<f64>,
    /// World position of the box center at t = 0.
    pub initial_center: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub yaw: f64,
}

impl ObjectTrack {
    pub fn center_at(&self, t: f64) -> Vector3<f64> {
        self.initial_center + self.velocity * t
    }

    pub fn box_at(&self, t: f64) -> Box3D {
        Box3D {
            center: self.center_at(t),
            dimensions: self.dimensions,
            yaw: self.yaw,
            object_id: self.object_id,
            class_label: self.class_label,
            frame: WORLD_FRAME.into(),
        }
    }
}

/// Ground plane at z = 0, static buildings and moving objects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    pub static_boxes: Vec<Box3D>,
    pub objects: Vec<ObjectTrack>,
}

/// Entry distance of a ray into a yawed box, if the origin is outside it.
fn ray_box(origin: &Vector3<f64>, dir: &Vector3<f64>, b: &Box3D) -> Option<f64> {
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), -b.yaw);
    let o = rot * (origin - b.center);
    let d = rot * dir;
    let h = b.dimensions * 0.5;
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i].abs() > h[i] {
                return None;
            }
            continue;
        }
        let a = (-h[i] - o[i]) / d[i];
        let c = (h[i] - o[i]) / d[i];
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

fn box_surface_distance(p: &Vector3<f64>, b: &Box3D) -> f64 {
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), -b.yaw);
    let q = (rot * (p - b.center)).abs();
    let h = b.dimensions * 0.5;
    let outside = (q - h).map(|x| x.max(0.0));
    if outside.norm() > 0.0 {
        outside.norm()
    } else {
        (h - q).min()
    }
}

impl World {
    /// Nearest surface hit along a unit ray at time `t`: range and the id of
    /// the dynamic object hit, if any.
    pub fn cast(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        t: f64,
        max_range: f64,
    ) -> Option<(f64, Option<u64>)> {
        let mut best: Option<(f64, Option<u64>)> = None;
        let mut consider = |r: f64, id: Option<u64>| {
            if r <= max_range && best.is_none_or(|(b, _)| r < b) {
                best = Some((r, id));
            }
        };
        if dir.z < 0.0 && origin.z > 0.0 {
            consider(-origin.z / dir.z, None);
        }
        for b in &self.static_boxes {
            if let Some(r) = ray_box(origin, dir, b) {
                consider(r, None);
            }
        }
        for o in &self.objects {
            if let Some(r) = ray_box(origin, dir, &o.box_at(t)) {
                consider(r, Some(o.object_id));
            }
        }
        best
    }

    /// Distance from `p` to the nearest static surface (ground or building).
    pub fn static_surface_distance(&self, p: &Vector3<f64>) -> f64 {
        self.static_boxes
            .iter()
            .map(|b| box_surface_distance(p, b))
            .fold(p.z.abs(), f64::min)
    }

    pub fn object(&self, id: u64) -> Option<&ObjectTrack> {
        self.objects.iter().find(|o| o.object_id == id)
    }
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Buildings are placed relative to vehicle 0's starting pose; objects are
/// spread around vehicle 0's mid-clip position and rejected when they come
/// too close to a vehicle, a building or another object during the clip.
pub fn generate_world<R: Rng>(config: &SceneConfig, rng: &mut R) -> World {
    let ego = &config.vehicles[0];
    let (p0, h0) = ego.state_at(0.0);
    let forward = Vector2::new(h0.cos(), h0.sin());
    let left = Vector2::new(-h0.sin(), h0.cos());

    let b = &config.buildings;
    let static_boxes: Vec<Box3D> = (0..b.count)
        .map(|i| {
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            let along = uniform(rng, b.along_track);
            let lateral = side * uniform(rng, b.lateral_offset);
            let dims = Vector3::new(
                uniform(rng, b.footprint),
                uniform(rng, b.footprint),
                uniform(rng, b.height),
            );
            let xy = p0 + forward * along + left * lateral;
            Box3D {
                center: Vector3::new(xy.x, xy.y, dims.z / 2.0),
                dimensions: dims,
                yaw: h0,
                object_id: BUILDING_ID_BASE + i as u64,
                class_label: ObjectClass::Building,
                frame: WORLD_FRAME.into(),
            }
        })
        .collect();

    let o = &config.objects;
    let mid = config.duration / 2.0;
    let (ego_mid, _) = ego.state_at(mid);
    let ego_v = ego.velocity_at(0.0);
    let check_times: Vec<f64> = (0..=40).map(|k| config.duration * k as f64 / 40.0).collect();
    let mut objects: Vec<ObjectTrack> = Vec::new();
    for id in 1..=o.count as u64 {
        for _attempt in 0..200 {
            let rel_speed = uniform(rng, o.relative_speed);
            let rel_dir = rng.random_range(0.0..TAU);
            let bearing = rng.random_range(0.0..TAU);
            let distance = uniform(rng, o.distance);
            let dims = Vector3::new(uniform(rng, o.length), uniform(rng, o.width), uniform(rng, o.height));
            let v = ego_v + rel_speed * Vector2::new(rel_dir.cos(), rel_dir.sin());
            let yaw = if v.norm() > 0.1 {
                v.y.atan2(v.x)
            } else {
                rng.random_range(0.0..TAU)
            };
            let mid_xy = ego_mid + distance * Vector2::new(bearing.cos(), bearing.sin());
            let start_xy = mid_xy - v * mid;
            let track = ObjectTrack {
                object_id: id,
                class_label: if dims.z > 2.0 {
                    ObjectClass::Truck
                } else {
                    ObjectClass::Car
                },
                dimensions: dims,
                initial_center: Vector3::new(start_xy.x, start_xy.y, dims.z / 2.0),
                velocity: Vector3::new(v.x, v.y, 0.0),
                yaw,
            };
            let radius = 0.5 * dims.xy().norm();
            let clear = check_times.iter().all(|&t| {
                let c = track.center_at(t).xy();
                config
                    .vehicles
                    .iter()
                    .all(|veh| (veh.state_at(t).0 - c).norm() >= o.clearance + radius)
                    && objects.iter().all(|other| {
                        (other.center_at(t).xy() - c).norm() >= radius + 0.5 * other.dimensions.xy().norm() + 0.5
                    })
                    && static_boxes
                        .iter()
                        .all(|b| !b.contains(&track.center_at(t), radius + 0.5))
            });
            if clear {
                objects.push(track);
                break;
            }
        }
    }
    World { static_boxes, objects }
}
