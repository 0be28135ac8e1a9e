use nalgebra::{Matrix3, SVD};

use super::{RigidTransform, Vec3};

/// Least-squares rigid transform (no scale) mapping `src[i]` onto `dst[i]`.
///
/// Returns `None` for fewer than three correspondences or a failed SVD.
pub fn kabsch(src: &[Vec3], dst: &[Vec3]) -> Option<RigidTransform> {
    if src.len() != dst.len() || src.len() < 3 {
        return None;
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = SVD::new(h, true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let v = v_t.transpose();
    let det = (v * u.transpose()).determinant();
    let fix = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, if det < 0.0 { -1.0 } else { 1.0 }));
    let r = v * fix * u.transpose();
    let t = cd - r * cs;
    Some(RigidTransform::from_rotation_matrix(&r, t))
}
