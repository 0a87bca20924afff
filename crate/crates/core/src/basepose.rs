//! Camera→base pose from scans of the robot base.
//!
//! Chain per shot: crop the scan to the base's box, register the crop to the reference
//! model, move the result from the adjusted model frame `Ref′` to the raw model frame
//! `Ref`, then undo the first joint's rotation. Several shots are filtered by overlap
//! ratio and averaged.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cloud::{crop, Aabb, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{mean_rotation, nearest_rotation, rot_z_matrix, row_normalize, RigidTransform, Vec3};
use crate::registration::{register_prepared, MatchParams, PreparedReference, RegistrationResult};

/// Reference-model origin in homogeneous coordinates.
pub const P0: [f64; 4] = [0.0, 0.0, 0.0, 1.0];
/// Fewest points a region of interest may hold.
pub const MIN_ROI_POINTS: usize = 100;
/// Default filter: keep shots whose overlap is at least this fraction of the best one.
pub const DEFAULT_OR_FRACTION: f64 = 0.85;
/// Second-joint angle the bundled reference model is built for (radians).
pub const CALIBRATION_THETA2: f64 = -core::f64::consts::FRAC_PI_2;
/// Allowed difference between the robot's and the model's second joint (radians).
pub const THETA2_TOLERANCE: f64 = 0.5 * core::f64::consts::PI / 180.0;

/// The base model to register against.
///
/// `cloud` is expressed in the adjusted frame `Ref′`; `adjust` is `^Ref′_Ref T`, the
/// rigid part of whatever manipulation produced it from the raw model frame `Ref`, whose
/// origin is the bottom of the base on the first joint's axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceModel {
    pub cloud: PointCloud,
    pub adjust: RigidTransform,
    /// Uniform scale already applied to `cloud`, for the record only.
    pub scale_baked: f64,
    /// Second-joint angle (radians) the model's shoulder is posed at.
    pub declared_theta2: f64,
}

impl ReferenceModel {
    pub fn new(cloud: PointCloud, adjust: RigidTransform, scale_baked: f64) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !adjust.is_rigid(1e-9) {
            return Err(Error::InvalidTransform(
                "adjust must be rigid; bake any scaling into the cloud".into(),
            ));
        }
        if !(scale_baked > 0.0 && scale_baked.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "scale_baked",
                reason: "must be positive".into(),
            });
        }
        Ok(Self {
            cloud,
            adjust,
            scale_baked,
            declared_theta2: CALIBRATION_THETA2,
        })
    }

    /// Model in the raw frame (`adjust = I`).
    pub fn raw(cloud: PointCloud) -> Result<Self> {
        Self::new(cloud, RigidTransform::identity(), 1.0)
    }

    pub fn prepare(&self, params: &MatchParams) -> Result<PreparedModel> {
        Ok(PreparedModel {
            reference: PreparedReference::new(&self.cloud, params)?,
            adjust: self.adjust,
        })
    }

    /// A warning when the robot's second joint does not match the model's pose.
    pub fn check_theta2(&self, theta2: f64) -> Option<String> {
        let diff = libm::remainder(theta2 - self.declared_theta2, core::f64::consts::TAU);
        (diff.abs() > THETA2_TOLERANCE).then(|| {
            alloc::format!(
                "second joint is at {:.2} deg but the reference model is posed at {:.2} deg",
                theta2.to_degrees(),
                self.declared_theta2.to_degrees()
            )
        })
    }
}

/// A [`ReferenceModel`] ready for repeated registration.
#[derive(Clone, Debug)]
pub struct PreparedModel {
    pub reference: PreparedReference,
    pub adjust: RigidTransform,
}

/// The scan points inside `bbox`.
pub fn extract_roi(scan: &PointCloud, bbox: &Aabb) -> Result<PointCloud> {
    let roi = crop(scan, bbox);
    if roi.len() < MIN_ROI_POINTS {
        return Err(Error::RoiTooSparse {
            points: roi.len(),
            needed: MIN_ROI_POINTS,
        });
    }
    Ok(roi)
}

/// Registers a camera-frame RoI to the model. The returned transform is `^Cam_Ref T`
/// (raw model coordinates into the camera frame); the other fields are the registration's.
pub fn estimate_cam_to_ref(
    roi: &PointCloud,
    model: &ReferenceModel,
    params: &MatchParams,
) -> Result<RegistrationResult> {
    estimate_cam_to_ref_prepared(roi, &model.prepare(params)?)
}

pub fn estimate_cam_to_ref_prepared(roi: &PointCloud, model: &PreparedModel) -> Result<RegistrationResult> {
    if roi.len() < MIN_ROI_POINTS {
        return Err(Error::RoiTooSparse {
            points: roi.len(),
            needed: MIN_ROI_POINTS,
        });
    }
    let mut result = register_prepared(roi, &model.reference)?;
    // Registration gives ^Ref′_Cam T.
    result.transform = result.transform.inverse() * model.adjust;
    Ok(result)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orthonormalization {
    /// Nearest rotation by SVD.
    #[default]
    Svd,
    /// Each row scaled to unit length. Not a rotation in general; kept for comparison.
    RowNormalize,
}

/// `^Cam_Base T` from `^Cam_Ref T` and the first joint angle.
pub fn assemble_cam_to_base(cam_to_ref: &RigidTransform, theta1: f64) -> RigidTransform {
    assemble_cam_to_base_with(cam_to_ref, theta1, Orthonormalization::Svd)
}

pub fn assemble_cam_to_base_with(cam_to_ref: &RigidTransform, theta1: f64, mode: Orthonormalization) -> RigidTransform {
    let r = match mode {
        Orthonormalization::Svd => nearest_rotation(&cam_to_ref.rotation),
        Orthonormalization::RowNormalize => row_normalize(&cam_to_ref.rotation),
    };
    let p = cam_to_ref.to_homogeneous() * nalgebra::Vector4::from(P0);
    RigidTransform::new(r * rot_z_matrix(-theta1), Vec3::new(p.x, p.y, p.z))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum OrThreshold {
    /// Keep shots with overlap ≥ this fraction of the best shot's.
    Relative(f64),
    /// Keep shots with overlap ≥ this value.
    Absolute(f64),
}

impl Default for OrThreshold {
    fn default() -> Self {
        Self::Relative(DEFAULT_OR_FRACTION)
    }
}

/// What happened to one shot in [`filtered_base_pose`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub index: usize,
    pub kept: bool,
    pub roi_points: usize,
    pub overlap_ratio: Option<f64>,
    pub inlier_rmse: Option<f64>,
    pub ambiguous: bool,
    pub cam_to_base: Option<RigidTransform>,
    /// Why the shot produced no estimate.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePoseEstimate {
    /// `^Cam_Base T`.
    pub cam_to_base: RigidTransform,
    /// Mean overlap ratio of the kept shots.
    pub overlap_ratio: f64,
    pub theta1: f64,
    pub shots_used: usize,
    /// Some kept shot had an ambiguous registration.
    pub ambiguous: bool,
    pub threshold: OrThreshold,
    pub shots: Vec<ShotRecord>,
}

/// Runs the chain on every shot, keeps those passing the overlap threshold, and averages
/// the kept poses (chordal mean rotation, mean translation).
pub fn filtered_base_pose(
    shots: &[PointCloud],
    bbox: &Aabb,
    model: &ReferenceModel,
    theta1: f64,
    params: &MatchParams,
    threshold: OrThreshold,
) -> Result<BasePoseEstimate> {
    if shots.is_empty() {
        return Err(Error::EmptyInput);
    }
    filtered_base_pose_prepared(shots, bbox, &model.prepare(params)?, theta1, threshold)
}

pub fn filtered_base_pose_prepared(
    shots: &[PointCloud],
    bbox: &Aabb,
    model: &PreparedModel,
    theta1: f64,
    threshold: OrThreshold,
) -> Result<BasePoseEstimate> {
    if shots.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut records: Vec<ShotRecord> = shots
        .iter()
        .enumerate()
        .map(|(index, scan)| {
            let roi = crop(scan, bbox);
            let mut rec = ShotRecord {
                index,
                kept: false,
                roi_points: roi.len(),
                overlap_ratio: None,
                inlier_rmse: None,
                ambiguous: false,
                cam_to_base: None,
                error: None,
            };
            match estimate_cam_to_ref_prepared(&roi, model) {
                Ok(r) => {
                    rec.overlap_ratio = Some(r.overlap_ratio);
                    rec.inlier_rmse = Some(r.inlier_rmse);
                    rec.ambiguous = r.ambiguous;
                    rec.cam_to_base = Some(assemble_cam_to_base(&r.transform, theta1));
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect();

    let best = records
        .iter()
        .filter_map(|r| r.overlap_ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let cut = match threshold {
        OrThreshold::Relative(f) => f * best,
        OrThreshold::Absolute(v) => v,
    };
    for r in &mut records {
        r.kept = r.overlap_ratio.is_some_and(|o| o >= cut);
    }
    let kept: Vec<&ShotRecord> = records.iter().filter(|r| r.kept).collect();
    if kept.is_empty() {
        return Err(Error::AllShotsRejected);
    }
    let poses: Vec<RigidTransform> = kept.iter().filter_map(|r| r.cam_to_base).collect();
    let n = poses.len() as f64;
    let rotation = mean_rotation(&poses.iter().map(|t| t.rotation).collect::<Vec<_>>())?;
    let translation = poses.iter().map(|t| t.translation).sum::<Vec3>() / n;
    let overlap = kept.iter().filter_map(|r| r.overlap_ratio).sum::<f64>() / n;
    let ambiguous = kept.iter().any(|r| r.ambiguous);
    Ok(BasePoseEstimate {
        cam_to_base: RigidTransform::new(rotation, translation),
        overlap_ratio: overlap,
        theta1,
        shots_used: poses.len(),
        ambiguous,
        threshold,
        shots: records,
    })
}
