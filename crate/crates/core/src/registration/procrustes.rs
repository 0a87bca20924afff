use crate::geometry::{Mat3, RigidTransform, Vec3};

/// Least-squares rigid transform `T` minimizing `Σ ‖T·sᵢ − dᵢ‖²` (Kabsch).
///
/// Returns `None` for fewer than three pairs.
pub fn fit_rigid(src: &[Vec3], dst: &[Vec3]) -> Option<RigidTransform> {
    let n = src.len().min(dst.len());
    if n < 3 {
        return None;
    }
    let cs: Vec3 = src[..n].iter().sum::<Vec3>() / n as f64;
    let cd: Vec3 = dst[..n].iter().sum::<Vec3>() / n as f64;
    let mut h = Mat3::zeros();
    for (s, d) in src[..n].iter().zip(&dst[..n]) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let mut fix = Mat3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = v * fix * u.transpose();
    Some(RigidTransform::new(r, cd - r * cs))
}
