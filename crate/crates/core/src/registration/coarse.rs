use alloc::vec::Vec;

use nalgebra::SymmetricEigen;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{rot_z_matrix, Mat3, RigidTransform, Vec3};

/// Covariances whose smallest eigenvalue falls below this fraction of the largest are
/// treated as rank-deficient.
const RANK_TOL: f64 = 1e-9;

/// Candidate source→reference initializations.
///
/// Emits the centroid alignment, the four proper sign choices of a principal-axes
/// alignment, and every one of those five spun through [`crate::registration::MatchParams::yaw_seeds`]
/// equal steps about the vertical (+Z) axis through the reference centroid.
pub fn coarse_align(source: &PointCloud, reference: &PointCloud) -> Result<Vec<RigidTransform>> {
    coarse_align_with(source, reference, 12)
}

pub fn coarse_align_with(source: &PointCloud, reference: &PointCloud, yaw_seeds: usize) -> Result<Vec<RigidTransform>> {
    for c in [source, reference] {
        if c.len() < 10 {
            return Err(Error::TooFewPoints {
                needed: 10,
                got: c.len(),
            });
        }
    }
    let (cs, axes_s) = principal_axes(source)?;
    let (cr, axes_r) = principal_axes(reference)?;

    let mut base = Vec::with_capacity(5);
    base.push(Mat3::identity());
    for signs in [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]] {
        let s = Mat3::from_diagonal(&Vec3::new(signs[0], signs[1], signs[2]));
        base.push(axes_r * s * axes_s.transpose());
    }

    let yaws = yaw_seeds.max(1);
    let mut out = Vec::with_capacity(base.len() * yaws);
    for r in &base {
        for k in 0..yaws {
            let yaw = rot_z_matrix(2.0 * core::f64::consts::PI * k as f64 / yaws as f64);
            let rot = yaw * r;
            out.push(RigidTransform::new(rot, cr - rot * cs));
        }
    }
    Ok(out)
}

/// Centroid and right-handed eigenvector basis, columns by decreasing variance.
fn principal_axes(pc: &PointCloud) -> Result<(Vec3, Mat3)> {
    let (c, cov) = pc.covariance().ok_or(Error::EmptyInput)?;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let largest = eig.eigenvalues[order[0]];
    let smallest = eig.eigenvalues[order[2]];
    if !(largest > 0.0) || smallest <= RANK_TOL * largest {
        return Err(Error::DegenerateCovariance);
    }
    let mut axes = Mat3::from_columns(&[
        eig.eigenvectors.column(order[0]).into_owned(),
        eig.eigenvectors.column(order[1]).into_owned(),
        eig.eigenvectors.column(order[2]).into_owned(),
    ]);
    if axes.determinant() < 0.0 {
        let flipped = -axes.column(2);
        axes.set_column(2, &flipped);
    }
    Ok((c, axes))
}

/// `n` rotations spread near-uniformly over SO(3) (super-Fibonacci spiral on the unit
/// quaternions).
pub fn rotation_grid(n: usize) -> Vec<Mat3> {
    const PHI: f64 = core::f64::consts::SQRT_2;
    const PSI: f64 = 1.533_751_168_755_204_3;
    let two_pi = 2.0 * core::f64::consts::PI;
    (0..n)
        .map(|i| {
            let s = i as f64 + 0.5;
            let f = s / n as f64;
            let r = libm::sqrt(f);
            let big_r = libm::sqrt(1.0 - f);
            let (sa, ca) = libm::sincos(two_pi * s / PHI);
            let (sb, cb) = libm::sincos(two_pi * s / PSI);
            let q = nalgebra::Quaternion::new(big_r * cb, r * sa, r * ca, big_r * sb);
            crate::geometry::matrix_from_quaternion(&nalgebra::UnitQuaternion::from_quaternion(q))
        })
        .collect()
}

/// Every grid rotation about the source centroid, translated onto the reference centroid.
pub(super) fn grid_seeds(source: &PointCloud, reference: &PointCloud, n: usize) -> Vec<RigidTransform> {
    let (Some(cs), Some(cr)) = (source.centroid(), reference.centroid()) else {
        return Vec::new();
    };
    rotation_grid(n)
        .into_iter()
        .map(|r| RigidTransform::new(r, cr - r * cs))
        .collect()
}

/// `pose` followed by a half turn about each principal axis of the posed source, through
/// its centroid. Partial views often settle upside down; these seeds jump that gap.
pub(super) fn flipped(source: &PointCloud, pose: &RigidTransform) -> Vec<RigidTransform> {
    let Ok((c, axes)) = principal_axes(source) else {
        return Vec::new();
    };
    let centre = pose.apply(&c);
    (0..3)
        .map(|k| {
            let axis = nalgebra::Unit::new_normalize(pose.rotation * axes.column(k));
            let flip = *nalgebra::Rotation3::from_axis_angle(&axis, core::f64::consts::PI).matrix();
            RigidTransform::new(flip, centre - flip * centre) * *pose
        })
        .collect()
}
