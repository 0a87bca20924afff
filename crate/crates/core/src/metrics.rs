//! Pose and reconstruction error metrics.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cloud::{Aabb, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{to_euler_with, EulerFormula, Mat3, RigidTransform, Vec3};

/// Relative rotation error: the geodesic angle between two rotations, degrees.
///
/// The arccos argument is clamped, so `rre(r, r)` is exactly zero.
pub fn rre(r_est: &Mat3, r_gt: &Mat3) -> f64 {
    let c = (((r_est.transpose() * r_gt).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    libm::acos(c).to_degrees()
}

/// Relative translation error, meters.
pub fn rte(t_est: &Vec3, t_gt: &Vec3) -> f64 {
    (t_est - t_gt).norm()
}

/// Euler-vector rotation error `‖ν_est − ν_gt‖₂` in degrees, with `ν = (β, α, γ)` of the
/// Z-Y-X decomposition.
///
/// Convention dependent and not invariant under a common rotation of both inputs, so
/// values are only comparable with other values computed here.
pub fn re(r_est: &Mat3, r_gt: &Mat3) -> Result<f64> {
    re_with(r_est, r_gt, EulerFormula::Corrected)
}

pub fn re_with(r_est: &Mat3, r_gt: &Mat3, formula: EulerFormula) -> Result<f64> {
    let a = to_euler_with(r_est, formula);
    let b = to_euler_with(r_gt, formula);
    if a.gimbal_lock || b.gimbal_lock {
        return Err(Error::GimbalLock);
    }
    Ok((a.as_vector() - b.as_vector()).norm().to_degrees())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformError {
    /// RMS over every rotation-matrix entry difference.
    pub rmse_r: f64,
    /// RMS over every translation component difference, meters.
    pub rmse_t: f64,
    /// Mean RRE, degrees.
    pub rre: f64,
    /// Mean RTE, meters.
    pub rte: f64,
    /// Mean RE, degrees.
    pub re: f64,
}

/// Errors of one estimate against its ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub rre: f64,
    pub rte: f64,
    pub re: f64,
}

pub fn pair_error(est: &RigidTransform, gt: &RigidTransform) -> Result<PairError> {
    Ok(PairError {
        rre: rre(&est.rotation, &gt.rotation),
        rte: rte(&est.translation, &gt.translation),
        re: re(&est.rotation, &gt.rotation)?,
    })
}

/// Set-level errors: entry-wise RMS for rotation and translation, means of the per-pair
/// RRE, RTE and RE.
pub fn rmse_transform(est: &[RigidTransform], gt: &[RigidTransform]) -> Result<TransformError> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            got: est.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = est.len() as f64;
    let mut out = TransformError::default();
    let (mut sr, mut st) = (0.0, 0.0);
    for (e, g) in est.iter().zip(gt) {
        sr += (e.rotation - g.rotation).norm_squared();
        st += (e.translation - g.translation).norm_squared();
        let p = pair_error(e, g)?;
        out.rre += p.rre / n;
        out.rte += p.rte / n;
        out.re += p.re / n;
    }
    out.rmse_r = libm::sqrt(sr / (9.0 * n));
    out.rmse_t = libm::sqrt(st / (3.0 * n));
    Ok(out)
}

/// Volume intersection over union of two axis-aligned boxes.
pub fn iou3d(a: &Aabb, b: &Aabb) -> Result<f64> {
    let (va, vb) = (a.volume(), b.volume());
    if !(va > 0.0 && vb > 0.0) {
        return Err(Error::ZeroVolume);
    }
    let mut inter = 1.0;
    for k in 0..3 {
        let overlap = a.max[k].min(b.max[k]) - a.min[k].max(b.min[k]);
        if overlap <= 0.0 {
            return Ok(0.0);
        }
        inter *= overlap;
    }
    Ok((inter / (va + vb - inter)).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RmsForm {
    /// Square root of the mean squared distance, meters.
    #[default]
    Root,
    /// The mean squared distance itself, square meters.
    MeanSquare,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRms {
    pub value: f64,
    pub matched: usize,
    /// Points with no neighbour closer than the gate.
    pub excluded: usize,
}

/// RMS distance from `points` to their nearest neighbours in `nn_cloud`, over the points
/// whose neighbour is closer than `tau`.
pub fn rms_to_surface(points: &PointCloud, nn_cloud: &PointCloud, tau: f64) -> Result<SurfaceRms> {
    rms_to_surface_with(points, nn_cloud, tau, RmsForm::Root)
}

pub fn rms_to_surface_with(points: &PointCloud, nn_cloud: &PointCloud, tau: f64, form: RmsForm) -> Result<SurfaceRms> {
    if points.is_empty() || nn_cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: "must be positive".into(),
        });
    }
    let index = nn_cloud.index();
    let d2: Vec<f64> = points
        .iter()
        .filter_map(|p| index.nearest_within(p, tau * tau))
        .map(|n| n.distance_squared)
        .collect();
    if d2.is_empty() {
        return Err(Error::NoMatches);
    }
    let mean = d2.iter().sum::<f64>() / d2.len() as f64;
    Ok(SurfaceRms {
        value: match form {
            RmsForm::Root => libm::sqrt(mean),
            RmsForm::MeanSquare => mean,
        },
        matched: d2.len(),
        excluded: points.len() - d2.len(),
    })
}
