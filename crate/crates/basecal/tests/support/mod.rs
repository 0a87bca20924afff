//! Planted-truth scenes shared by the integration tests and the fixture generator.
#![allow(dead_code)]

use basecal_core::basepose::PreparedModel;
use basecal_core::basepose::CALIBRATION_THETA2;
use basecal_core::cloud::transform;
use basecal_core::geometry::{angle_between, rot_z, RigidTransform, Vec3};
use basecal_core::handeye::{forward_kinematics, DhRow, DhTable, JointConfig};
use basecal_core::synth::{jitter, seeded_rng, visible_indices, Viewpoint};
use basecal_core::{Aabb, PointCloud};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

/// Where the simulated cameras aim.
pub const BASE_CENTER: Vec3 = Vec3::new(0.0, 0.03, 0.1);

/// A six-axis arm of roughly UR-type proportions.
pub fn robot() -> DhTable {
    let rows = [
        (0.0, FRAC_PI_2, 0.158),
        (-0.43, 0.0, 0.0),
        (-0.39, 0.0, 0.0),
        (0.0, FRAC_PI_2, 0.135),
        (0.0, -FRAC_PI_2, 0.101),
        (0.0, 0.0, 0.098),
    ];
    DhTable::new(
        rows.iter()
            .map(|&(a, alpha, d)| DhRow {
                a,
                alpha,
                d,
                theta_offset: 0.0,
            })
            .collect(),
    )
    .unwrap()
}

/// A robot pose, the camera it carries and the base scan that camera records.
#[derive(Clone, Debug)]
pub struct Scene {
    pub joints: Vec<f64>,
    pub base_to_tcp: RigidTransform,
    /// Planted `^TCP_Cam T`.
    pub x_star: RigidTransform,
    /// `^Cam_Base T`.
    pub cam_to_base: RigidTransform,
    /// Visible base points in camera coordinates.
    pub scan: PointCloud,
    /// Box around the scan, camera coordinates.
    pub bbox: Aabb,
    /// Ground-truth overlap of the scan with the model.
    pub overlap: f64,
}

pub fn random_joints(rng: &mut ChaCha8Rng) -> Vec<f64> {
    vec![
        rng.random_range(-PI..PI),
        CALIBRATION_THETA2,
        rng.random_range(-2.4..-0.6),
        rng.random_range(-PI..PI),
        rng.random_range(-PI..PI),
        rng.random_range(-PI..PI),
    ]
}

/// The scan seen from `base_to_cam`, or `None` when the camera is not in a usable spot
/// (too close or far, below the mounting plane, or seeing less than `min_overlap`).
pub fn observe(
    model: &PointCloud,
    prepared: &PreparedModel,
    joints: &[f64],
    x_star: &RigidTransform,
    min_overlap: f64,
) -> Option<Scene> {
    let base_to_tcp = forward_kinematics(&robot(), &JointConfig::new(joints.to_vec())).unwrap();
    let base_to_cam = base_to_tcp * *x_star;
    let eye = base_to_cam.translation;
    let dist = (eye - BASE_CENTER).norm();
    if !(0.35..=1.2).contains(&dist) || eye.z < 0.05 {
        return None;
    }
    // The whole base turns with the first joint.
    let posed = transform(model, &rot_z(joints[0]));
    let keep = visible_indices(&posed, &eye).ok()?;
    let unposed: PointCloud = keep.iter().map(|&i| model.points[i]).collect();
    let overlap = prepared.reference.overlap(&unposed).ok()?;
    if overlap < min_overlap {
        return None;
    }
    let cam_to_base = base_to_cam.inverse();
    let visible: PointCloud = keep.iter().map(|&i| posed.points[i]).collect();
    let scan = transform(&visible, &cam_to_base);
    let bbox = scan.bounds()?.padded(0.01);
    Some(Scene {
        joints: joints.to_vec(),
        base_to_tcp,
        x_star: *x_star,
        cam_to_base,
        scan,
        bbox,
        overlap,
    })
}

/// A random robot pose with a camera near the flange aimed at the base. The planted
/// `X*` is whatever mounting makes that camera pose.
pub fn random_scene(model: &PointCloud, prepared: &PreparedModel, rng: &mut ChaCha8Rng, min_overlap: f64) -> Scene {
    loop {
        let joints = random_joints(rng);
        let tcp = forward_kinematics(&robot(), &JointConfig::new(joints.clone())).unwrap();
        let offset = Vec3::new(
            rng.random_range(-0.06..0.06),
            rng.random_range(-0.06..0.06),
            rng.random_range(0.0..0.08),
        );
        let eye = tcp.apply(&offset);
        let Ok(vp) = Viewpoint::new(eye, BASE_CENTER, Vec3::z()) else {
            continue;
        };
        let x_star = tcp.inverse() * vp.camera_pose();
        if let Some(s) = observe(model, prepared, &joints, &x_star, min_overlap) {
            return s;
        }
    }
}

/// `n` robot poses spread around the base, all carrying the same camera mount.
pub fn scenes_with_fixed_mount(
    model: &PointCloud,
    prepared: &PreparedModel,
    n: usize,
    seed: u64,
    min_overlap: f64,
) -> Vec<Scene> {
    let mut rng = seeded_rng(seed);
    let first = random_scene(model, prepared, &mut rng, min_overlap);
    let mut out = vec![first.clone()];
    let mut k = 1;
    for _ in 0..10_000 {
        if out.len() == n {
            break;
        }
        let mut q = first.joints.clone();
        q[0] += 2.0 * PI * k as f64 / n as f64;
        for qi in &mut q[2..] {
            *qi += rng.random_range(-0.3..0.3);
        }
        if let Some(s) = observe(model, prepared, &q, &first.x_star, min_overlap) {
            out.push(s);
            k += 1;
        }
    }
    assert_eq!(out.len(), n, "no usable poses around the base for this mount");
    out
}

pub fn jittered(scene: &Scene, sigma: f64, seed: u64) -> PointCloud {
    jitter(&scene.scan, sigma, seed)
}

/// Rotation (deg) and translation (m) between two transforms.
pub fn pose_error(a: &RigidTransform, b: &RigidTransform) -> (f64, f64) {
    (
        angle_between(&a.rotation, &b.rotation).to_degrees(),
        (a.translation - b.translation).norm(),
    )
}
