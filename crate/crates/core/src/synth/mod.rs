//! Synthetic partial views of a reference model with exact ground-truth poses.
//!
//! A camera is placed at sampled viewpoints around the model, the points it can see are
//! selected by spherical-flipping hidden-point removal, and each view is pushed through
//! random rigid motions. Every record stores the transform that maps its cloud back onto
//! the reference frame.

pub mod shapes;

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{axis_angle_matrix, Mat3, RigidTransform, Vec3};
use crate::hull::hull_vertices;

/// Flip radius as a multiple of the farthest camera-to-point distance.
pub const FLIP_RADIUS_FACTOR: f64 = 1000.0;
/// Elevation band for sampled viewpoints, degrees above the horizontal plane.
pub const ELEVATION_BAND_DEG: (f64, f64) = (10.0, 80.0);

/// The generator every seeded routine here uses.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent seed from a base seed and a stream id (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    #[serde(with = "vec3_serde")]
    pub position: Vec3,
    #[serde(with = "vec3_serde")]
    pub look_at: Vec3,
    #[serde(with = "vec3_serde")]
    pub up_hint: Vec3,
}

impl Viewpoint {
    pub fn new(position: Vec3, look_at: Vec3, up_hint: Vec3) -> Result<Self> {
        let view = look_at - position;
        if view.norm() == 0.0 {
            return Err(Error::InvalidRange("viewpoint position equals look_at".into()));
        }
        if view.normalize().cross(&up_hint).norm() < 1e-9 {
            return Err(Error::InvalidRange("up hint is parallel to the view direction".into()));
        }
        Ok(Self {
            position,
            look_at,
            up_hint,
        })
    }

    /// Pose of the camera in the world frame (`^World_Cam T`): +Z along the view
    /// direction, +X to the right of it with respect to `up_hint`, +Y completing the frame.
    pub fn camera_pose(&self) -> RigidTransform {
        let z = (self.look_at - self.position).normalize();
        let x = z.cross(&self.up_hint).normalize();
        let y = z.cross(&x);
        RigidTransform::new(Mat3::from_columns(&[x, y, z]), self.position)
    }
}

/// `n` viewpoints on the shell `radius_range` around `center`, looking at it.
///
/// Radius and azimuth are uniform; elevation is uniform over [`ELEVATION_BAND_DEG`].
pub fn sample_viewpoints(n: usize, radius_range: (f64, f64), center: Vec3, seed: u64) -> Result<Vec<Viewpoint>> {
    let (lo, hi) = radius_range;
    if n == 0 {
        return Err(Error::InvalidRange("need at least one viewpoint".into()));
    }
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidRange(alloc::format!(
            "radius range must satisfy 0 < min <= max, got ({lo}, {hi})"
        )));
    }
    let mut rng = seeded_rng(seed);
    let (e_lo, e_hi) = (ELEVATION_BAND_DEG.0.to_radians(), ELEVATION_BAND_DEG.1.to_radians());
    (0..n)
        .map(|_| {
            let r = lo + (hi - lo) * rng.random::<f64>();
            let az = rng.random::<f64>() * 2.0 * core::f64::consts::PI;
            let el = e_lo + (e_hi - e_lo) * rng.random::<f64>();
            let (saz, caz) = libm::sincos(az);
            let (sel, cel) = libm::sincos(el);
            let pos = center + Vec3::new(cel * caz, cel * saz, sel) * r;
            Viewpoint::new(pos, center, Vec3::z())
        })
        .collect()
}

/// Indices of the model points visible from `eye`.
///
/// Each point is flipped through the sphere of radius `R = 1000 · max‖p − eye‖` centred at
/// the eye, `p ↦ p + 2(R − ‖p − eye‖)(p − eye)/‖p − eye‖`; a point is visible when its
/// flipped image is a vertex of the convex hull of all flipped points and the eye.
pub fn visible_indices(model: &PointCloud, eye: &Vec3) -> Result<Vec<usize>> {
    let (c, radius) = bounding_sphere(model).ok_or(Error::EmptyInput)?;
    if (eye - c).norm() <= radius {
        return Err(Error::ViewpointInsideModel);
    }
    let rel: Vec<Vec3> = model.iter().map(|p| p - eye).collect();
    let far = rel.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let flip_radius = FLIP_RADIUS_FACTOR * far;
    let mut flipped: Vec<Vec3> = rel
        .iter()
        .map(|d| {
            let n = d.norm();
            d + d * (2.0 * (flip_radius - n) / n)
        })
        .collect();
    flipped.push(Vec3::zeros());
    let mask = hull_vertices(&flipped);
    Ok((0..model.len()).filter(|&i| mask[i]).collect())
}

/// The visible subset of `model` from `vp.position`, in original order.
pub fn hidden_point_removal(model: &PointCloud, vp: &Viewpoint) -> Result<PointCloud> {
    let keep = visible_indices(model, &vp.position)?;
    Ok(PointCloud {
        points: keep.into_iter().map(|i| model.points[i]).collect(),
        frame_label: model.frame_label.clone(),
    })
}

/// What a camera at `vp` sees of `model`: the visible points in camera coordinates,
/// together with `^Cam_World T` (model frame into the camera frame).
pub fn camera_scan(model: &PointCloud, vp: &Viewpoint) -> Result<(PointCloud, RigidTransform)> {
    let visible = hidden_point_removal(model, vp)?;
    let world_to_cam = vp.camera_pose().inverse();
    Ok((crate::cloud::transform(&visible, &world_to_cam), world_to_cam))
}

/// Centroid and the largest distance from it.
fn bounding_sphere(pc: &PointCloud) -> Option<(Vec3, f64)> {
    let c = pc.centroid()?;
    let r = pc.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
    Some((c, r))
}

/// One partial view of a reference model, before augmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialView {
    pub cloud: PointCloud,
    pub reference_id: String,
    pub viewpoint: Viewpoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    /// Augmented partial view.
    pub source: PointCloud,
    pub reference_id: String,
    /// Maps `source` back onto the reference frame.
    pub gt_transform: RigidTransform,
    pub viewpoint: Viewpoint,
    pub seed: u64,
}

/// A rotation with axis uniform on the sphere and angle uniform in `[0, rot_max]`, and a
/// translation uniform in the ball of radius `trans_max`.
pub fn random_motion(rng: &mut ChaCha8Rng, rot_max: f64, trans_max: f64) -> RigidTransform {
    let axis = unit_vector(rng);
    let angle = rot_max * rng.random::<f64>();
    let dir = unit_vector(rng);
    let r = trans_max * libm::cbrt(rng.random::<f64>());
    RigidTransform::new(axis_angle_matrix(&axis, angle), dir * r)
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    // z uniform on [-1, 1] and uniform azimuth is uniform on the sphere.
    let z = 2.0 * rng.random::<f64>() - 1.0;
    let phi = rng.random::<f64>() * 2.0 * core::f64::consts::PI;
    let rho = libm::sqrt((1.0 - z * z).max(0.0));
    let (s, c) = libm::sincos(phi);
    Vec3::new(rho * c, rho * s, z)
}

/// `k` randomly moved copies of a partial view.
pub fn augment(view: &PartialView, k: usize, rot_max: f64, trans_max: f64, seed: u64) -> Vec<DatasetRecord> {
    (0..k)
        .map(|i| {
            let record_seed = derive_seed(seed, i as u64);
            let motion = random_motion(&mut seeded_rng(record_seed), rot_max, trans_max);
            DatasetRecord {
                source: crate::cloud::transform(&view.cloud, &motion),
                reference_id: view.reference_id.clone(),
                gt_transform: motion.inverse(),
                viewpoint: view.viewpoint,
                seed: record_seed,
            }
        })
        .collect()
}

/// Adds isotropic Gaussian noise with per-axis standard deviation `sigma` (m).
pub fn jitter(pc: &PointCloud, sigma: f64, seed: u64) -> PointCloud {
    if !(sigma > 0.0) {
        return pc.clone();
    }
    let mut rng = seeded_rng(seed);
    let normal = Normal::new(0.0, sigma).expect("positive finite sigma");
    PointCloud {
        points: pc
            .iter()
            .map(|p| {
                p + Vec3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                )
            })
            .collect(),
        frame_label: pc.frame_label.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_viewpoints: usize,
    pub k_augment: usize,
    /// Camera distance range from the model centre (m).
    pub radius_range: (f64, f64),
    /// Largest augmentation rotation angle (rad).
    pub rot_max: f64,
    /// Largest augmentation translation (m).
    pub trans_max: f64,
    /// Optional per-axis Gaussian noise on the views (m); zero disables it.
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_viewpoints: 90,
            k_augment: 10,
            radius_range: (0.5, 0.8),
            rot_max: core::f64::consts::PI,
            trans_max: 0.5,
            jitter_sigma: 0.0,
            seed: 0,
        }
    }
}

/// All `n_viewpoints × k_augment` records for one reference model.
pub fn generate_records(model: &PointCloud, reference_id: &str, params: &SynthParams) -> Result<Vec<DatasetRecord>> {
    let center = model
        .bounds()
        .ok_or(Error::TooFewPoints { needed: 10, got: 0 })?
        .center();
    if model.len() < 10 {
        return Err(Error::TooFewPoints {
            needed: 10,
            got: model.len(),
        });
    }
    let viewpoints = sample_viewpoints(
        params.n_viewpoints,
        params.radius_range,
        center,
        derive_seed(params.seed, 0),
    )?;
    let mut out = Vec::with_capacity(params.n_viewpoints * params.k_augment);
    for (v, vp) in viewpoints.iter().enumerate() {
        let mut cloud = hidden_point_removal(model, vp)?;
        if params.jitter_sigma > 0.0 {
            cloud = jitter(&cloud, params.jitter_sigma, derive_seed(params.seed, 2 * v as u64 + 1));
        }
        let view = PartialView {
            cloud,
            reference_id: reference_id.into(),
            viewpoint: *vp,
        };
        out.extend(augment(
            &view,
            params.k_augment,
            params.rot_max,
            params.trans_max,
            derive_seed(params.seed, 2 * v as u64 + 2),
        ));
    }
    Ok(out)
}

pub(crate) mod vec3_serde {
    use crate::geometry::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::new(a[0], a[1], a[2]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::transform;

    #[test]
    fn single_fixed_radius_viewpoint() {
        let c = Vec3::new(0.1, 0.0, 0.05);
        let v = sample_viewpoints(1, (0.5, 0.5), c, 9).unwrap();
        assert_eq!(v.len(), 1);
        assert!(((v[0].position - c).norm() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn viewpoints_respect_shell_and_band() {
        let c = Vec3::zeros();
        let vps = sample_viewpoints(90, (0.5, 0.8), c, 1).unwrap();
        assert_eq!(vps.len(), 90);
        for vp in &vps {
            let d = vp.position - c;
            let r = d.norm();
            assert!((0.5..=0.8).contains(&r));
            let el = (d.z / r).asin().to_degrees();
            assert!((10.0..=80.0).contains(&el), "elevation {el}");
        }
        assert_eq!(vps, sample_viewpoints(90, (0.5, 0.8), c, 1).unwrap());
        assert!(sample_viewpoints(3, (0.0, 1.0), c, 1).is_err());
        assert!(sample_viewpoints(3, (1.0, 0.5), c, 1).is_err());
        assert!(sample_viewpoints(0, (1.0, 2.0), c, 1).is_err());
    }

    #[test]
    fn camera_pose_looks_at_target() {
        let vp = Viewpoint::new(Vec3::new(1.0, 0.0, 1.0), Vec3::zeros(), Vec3::z()).unwrap();
        let pose = vp.camera_pose();
        assert!(pose.is_rigid(1e-12));
        let target_in_cam = pose.inverse().apply(&Vec3::zeros());
        assert!(target_in_cam.x.abs() < 1e-12 && target_in_cam.y.abs() < 1e-12);
        assert!(target_in_cam.z > 0.0);
        assert!(Viewpoint::new(Vec3::z(), Vec3::zeros(), Vec3::z()).is_err());
    }

    #[test]
    fn sphere_back_hemisphere_is_hidden() {
        // Oracle: from a camera on +Z a point of the unit sphere is visible iff its
        // tangent plane faces the eye, i.e. p·(eye − p) > 0 ⇔ z > 1/eye_z = 0.2.
        let mut rng = seeded_rng(4);
        let model: PointCloud = (0..3000).map(|_| unit_vector(&mut rng)).collect();
        let vp = Viewpoint::new(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros(), Vec3::y()).unwrap();
        let visible = hidden_point_removal(&model, &vp).unwrap();
        // A flip radius this large lets a small fraction of back points through.
        let behind = visible.iter().filter(|p| p.z < 0.0).count();
        assert!(
            behind as f64 <= 0.1 * visible.len() as f64,
            "{behind} of {}",
            visible.len()
        );
        let front = model.iter().filter(|p| p.z > 0.4).count();
        let front_kept = visible.iter().filter(|p| p.z > 0.4).count();
        assert!(front_kept as f64 >= 0.95 * front as f64);
    }

    #[test]
    fn occluded_point_behind_another_is_removed() {
        let model = PointCloud::new(alloc::vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 2.0)]);
        let vp = Viewpoint::new(Vec3::zeros(), Vec3::z(), Vec3::y()).unwrap();
        let kept = hidden_point_removal(&model, &vp).unwrap();
        assert_eq!(kept.points, alloc::vec![Vec3::new(0.0, 0.0, 1.0)]);
    }

    #[test]
    fn plane_facing_camera_is_fully_visible() {
        let model = shapes::plane_patch(800, 0.1, 3);
        let vp = Viewpoint::new(Vec3::new(0.01, -0.02, 0.5), Vec3::zeros(), Vec3::y()).unwrap();
        let kept = hidden_point_removal(&model, &vp).unwrap();
        assert_eq!(kept.len(), model.len());
    }

    #[test]
    fn viewpoint_inside_model_is_rejected() {
        let model = shapes::base_model(500, 1);
        let vp = Viewpoint::new(Vec3::new(0.0, 0.0, 0.1), Vec3::zeros(), Vec3::y()).unwrap();
        assert_eq!(hidden_point_removal(&model, &vp), Err(Error::ViewpointInsideModel));
    }

    #[test]
    fn hpr_output_is_subset_of_input() {
        let model = shapes::base_model(4000, 2);
        for vp in sample_viewpoints(5, (0.5, 0.8), Vec3::new(0.0, 0.03, 0.1), 3).unwrap() {
            let idx = visible_indices(&model, &vp.position).unwrap();
            assert!(!idx.is_empty() && idx.len() < model.len());
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn augmentation_properties() {
        let model = shapes::base_model(1500, 2);
        let vp = sample_viewpoints(1, (0.6, 0.6), Vec3::zeros(), 1).unwrap()[0];
        let view = PartialView {
            cloud: hidden_point_removal(&model, &vp).unwrap(),
            reference_id: "base".into(),
            viewpoint: vp,
        };
        let none = augment(&view, 1, 0.0, 0.0, 3);
        assert_eq!(none[0].gt_transform, RigidTransform::identity());

        let recs = augment(&view, 10, core::f64::consts::PI, 0.5, 3);
        assert_eq!(recs.len(), 10);
        for r in &recs {
            let back = transform(&r.source, &r.gt_transform);
            for (a, b) in back.iter().zip(view.cloud.iter()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
        for i in 0..recs.len() {
            for j in 0..i {
                let d = recs[i].gt_transform.max_abs_diff(&recs[j].gt_transform);
                assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn records_are_reproducible() {
        let model = shapes::base_model(800, 2);
        let params = SynthParams {
            n_viewpoints: 3,
            k_augment: 2,
            seed: 11,
            ..SynthParams::default()
        };
        let a = generate_records(&model, "base", &params).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, generate_records(&model, "base", &params).unwrap());
    }
}
