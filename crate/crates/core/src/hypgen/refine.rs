use nalgebra::{Matrix6, UnitQuaternion, Vector6};

use crate::geometry::{MeshModel, PointCloud, PointGrid, RigidTransform, Vec3};

/// Observed points indexed for radius queries, with their normals.
#[derive(Clone, Debug)]
pub struct IndexedCloud {
    pub grid: PointGrid,
    pub normals: Vec<Vec3>,
}

impl IndexedCloud {
    pub fn new(cloud: &PointCloud, cell: f64) -> Self {
        IndexedCloud {
            grid: PointGrid::new(cloud.points.clone(), cell.max(1e-6)),
            normals: cloud.normals.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Model samples that face the camera (at the origin) under `pose`.
fn facing_samples<'a>(model: &'a MeshModel, pose: &'a RigidTransform, stride: usize) -> impl Iterator<Item = (Vec3, Vec3)> + 'a {
    let s = model.samples();
    (0..s.points.len()).step_by(stride.max(1)).filter_map(move |i| {
        let p = pose.apply(&s.points[i]);
        let n = pose.rotate(&s.normals[i]);
        (n.dot(&p) < 0.0).then_some((p, n))
    })
}

/// Largest-common-pointset score: the fraction of camera-facing model
/// samples (every `stride`-th) that have an observed point within `radius`.
pub fn lcp_score_indexed(pose: &RigidTransform, model: &MeshModel, cloud: &PointGrid, radius: f64, stride: usize) -> f64 {
    let mut total = 0usize;
    let mut hit = 0usize;
    for (p, _) in facing_samples(model, pose, stride) {
        total += 1;
        hit += cloud.any_within(&p, radius) as usize;
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

pub fn lcp_score(pose: &RigidTransform, model: &MeshModel, cloud: &PointCloud, radius: f64) -> f64 {
    let grid = PointGrid::new(cloud.points.clone(), radius.max(1e-6));
    lcp_score_indexed(pose, model, &grid, radius, 1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DedupThresholds {
    /// Radians.
    pub rotation: f64,
    /// Meters.
    pub translation: f64,
}

/// Whether `pose` is within both thresholds of `other` under some element
/// of the model's symmetry group.
pub fn near_duplicate(pose: &RigidTransform, other: &RigidTransform, symmetry: &[RigidTransform], th: &DedupThresholds) -> bool {
    symmetry.iter().any(|s| {
        let p = pose.compose(s);
        p.rotation_distance(other) <= th.rotation && p.translation_distance(other) <= th.translation
    })
}

/// Greedy representatives: walks `poses` in order and keeps each pose that
/// is not a near-duplicate of one already kept, up to `limit`.
pub fn dedup_poses(poses: &[RigidTransform], symmetry: &[RigidTransform], th: &DedupThresholds, limit: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, p) in poses.iter().enumerate() {
        if kept.len() >= limit {
            break;
        }
        if !kept.iter().any(|&k| near_duplicate(p, &poses[k], symmetry, th)) {
            kept.push(i);
        }
    }
    kept
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcpParams {
    pub iterations: usize,
    /// Correspondence radius (meters).
    pub radius: f64,
    /// Use every `stride`-th model sample.
    pub stride: usize,
}

/// Point-to-plane ICP of the camera-facing model samples against `cloud`.
/// Stops early when an update moves less than a micrometer / microradian
/// or fewer than six correspondences remain.
pub fn icp_point_to_plane(pose: &RigidTransform, model: &MeshModel, cloud: &IndexedCloud, params: &IcpParams) -> RigidTransform {
    let mut cur = *pose;
    for _ in 0..params.iterations {
        let mut ata = Matrix6::<f64>::zeros();
        let mut atb = Vector6::<f64>::zeros();
        let mut pairs = 0usize;
        for (p, _) in facing_samples(model, &cur, params.stride) {
            let Some((j, _)) = cloud.grid.nearest_within(&p, params.radius) else {
                continue;
            };
            let q = cloud.grid.points()[j];
            let n = cloud.normals[j];
            let r = (p - q).dot(&n);
            let c = p.cross(&n);
            let row = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
            ata += row * row.transpose();
            atb -= row * r;
            pairs += 1;
        }
        if pairs < 6 {
            break;
        }
        // Light Tikhonov damping keeps rank-deficient cases (a single
        // plane, a sphere) from drifting along unconstrained directions.
        let damping = 1e-9 * ata.trace().max(1e-12);
        ata += Matrix6::identity() * damping;
        let Some(x) = ata.cholesky().map(|c| c.solve(&atb)) else {
            break;
        };
        let omega = Vec3::new(x[0], x[1], x[2]);
        let delta = RigidTransform::new(UnitQuaternion::from_scaled_axis(omega), Vec3::new(x[3], x[4], x[5]));
        cur = delta.compose(&cur).renormalized();
        if omega.norm() < 1e-6 && Vec3::new(x[3], x[4], x[5]).norm() < 1e-6 {
            break;
        }
    }
    cur
}
