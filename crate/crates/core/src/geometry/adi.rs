use super::{MeshModel, PointGrid, RigidTransform, Vec3};

/// ADI pose distance over the model's sample points: the mean over samples
/// `b1` of `min_b2 ‖T1 b1 − T2 b2‖`, with `b2` ranging over the samples
/// and their symmetric images.
///
/// Evaluated in the model frame of `t2` so the precomputed sample grid can
/// answer the inner minimum.
pub fn adi_distance(t1: &RigidTransform, t2: &RigidTransform, model: &MeshModel) -> f64 {
    adi_with_grid(t1, t2, model.sample_grid(), model.samples().points.len())
}

/// ADI over an explicit point set (e.g. raw mesh vertices).
pub fn adi_points(t1: &RigidTransform, t2: &RigidTransform, points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let cell = bounding_diagonal(points).max(1e-9) / 10.0;
    adi_with_grid(t1, t2, &PointGrid::new(points.to_vec(), cell), points.len())
}

/// Averages over the first `n` grid points.
fn adi_with_grid(t1: &RigidTransform, t2: &RigidTransform, grid: &PointGrid, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let rel = t2.inverse().compose(t1);
    let total: f64 = grid.points()[..n]
        .iter()
        .map(|p| grid.nearest(&rel.apply(p)).map_or(0.0, |(_, d)| d))
        .sum();
    total / n as f64
}

fn bounding_diagonal(points: &[Vec3]) -> f64 {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}
