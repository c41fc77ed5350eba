use nalgebra::{UnitQuaternion, Vector3};

use rigalign::geometry::RigidTransform;
use rigalign::registration::{gicp_refine, registration_residual, RegistrationParams};
use rigalign::scan::{deskew_to, LidarScan};
use rigalign::sim::{lidar_frame, simulate_scene, LidarConfig, NoiseConfig, ObjectConfig, SceneConfig};
use rigalign::Error;

/// Deskewed scan 1 of both vehicles and the true `lidar0 ← lidar1`.
fn scene(seed: u64) -> (LidarScan, LidarScan, RigidTransform) {
    let cfg = SceneConfig {
        seed,
        duration: 0.2,
        lidar: LidarConfig {
            rings: 32,
            min_elevation_deg: -25.0,
            ..Default::default()
        },
        objects: ObjectConfig {
            count: 0,
            ..Default::default()
        },
        noise: NoiseConfig::none(),
        ..Default::default()
    };
    let rec = simulate_scene(&cfg).unwrap();
    let (a, b) = (&rec.vehicles[0], &rec.vehicles[1]);
    let s = a.scans[1].scan_start;
    let target = deskew_to(&a.scans[1], &a.trajectory, &a.lidar_extrinsic, s).unwrap();
    let source = deskew_to(&b.scans[1], &b.trajectory, &b.lidar_extrinsic, s).unwrap();
    let truth = RigidTransform::from_isometry(
        a.lidar_pose(s).unwrap().inverse() * b.lidar_pose(s).unwrap(),
        lidar_frame(1),
        lidar_frame(0),
    );
    (source, target, truth)
}

fn offset(truth: &RigidTransform, shift: [f64; 3], yaw_deg: f64) -> RigidTransform {
    RigidTransform::new(
        UnitQuaternion::from_euler_angles(0.0, 0.0, yaw_deg.to_radians()),
        Vector3::from(shift),
        lidar_frame(0),
        lidar_frame(0),
    )
    .compose(truth)
    .unwrap()
}

#[test]
fn residual_history_never_increases() {
    let params = RegistrationParams::default();
    for (seed, shift, yaw) in [
        (1, [0.3, -0.2, 0.05], 3.0),
        (2, [-0.1, 0.4, 0.0], -4.0),
        (3, [0.02, 0.0, 0.0], 0.2),
    ] {
        let (source, target, truth) = scene(seed);
        let init = offset(&truth, shift, yaw);
        let r = gicp_refine(&source, &target, &init, &params).unwrap();
        let h = &r.residual_history;
        assert!(r.converged, "seed {seed}");
        assert!(r.iterations <= params.max_iterations);
        assert_eq!(h.first(), Some(&r.initial_residual));
        assert_eq!(h.last(), Some(&r.final_residual));
        assert!(h.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {h:?}");
        let again = registration_residual(&source, &target, &r.transform, &params).unwrap();
        assert!((again - r.final_residual).abs() < 1e-12);
        assert!(r.transform.distance_to(&truth) < 0.01, "seed {seed}");
    }
}

#[test]
fn frames_must_chain() {
    let (source, target, truth) = scene(4);
    let params = RegistrationParams::default();
    let swapped = truth.inverse();
    assert!(matches!(
        gicp_refine(&source, &target, &swapped, &params),
        Err(Error::FrameMismatch { .. })
    ));
    let bad = RegistrationParams {
        fine_correspondence_distance: 2.0,
        ..params
    };
    assert!(matches!(
        gicp_refine(&source, &target, &truth, &bad),
        Err(Error::InvalidConfig(_))
    ));
}
