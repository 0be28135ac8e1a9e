use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PointGrid, RigidTransform, Vec3};
use crate::{Error, Result};

/// Default number of surface samples kept per model.
pub const DEFAULT_SURFACE_SAMPLES: usize = 500;

const SAMPLING_SEED: u64 = 0x5eed_0f_5a3f;

/// Points and unit normals sampled on a model surface.
#[derive(Clone, Debug, Default)]
pub struct SurfaceSamples {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

/// A triangulated object model in its own frame (meters).
///
/// Construction validates the mesh and precomputes everything downstream
/// stages need repeatedly: diameter, volume, watertightness, a Poisson-disk
/// surface sample set and a nearest-neighbour grid over that set.
#[derive(Clone, Debug)]
pub struct MeshModel {
    name: String,
    class_id: u32,
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    vertex_normals: Vec<Vec3>,
    diameter: f64,
    symmetry_group: Vec<RigidTransform>,
    volume: f64,
    watertight: bool,
    samples: SurfaceSamples,
    sample_grid: Arc<PointGrid>,
    bounds: (Vec3, Vec3),
}

impl MeshModel {
    /// Builds a model. Missing normals are computed from area-weighted face
    /// normals; the identity is added to the symmetry group when absent.
    pub fn new(
        name: impl Into<String>,
        class_id: u32,
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        vertex_normals: Option<Vec<Vec3>>,
        symmetry_group: Vec<RigidTransform>,
    ) -> Result<Self> {
        Self::with_sample_count(
            name,
            class_id,
            vertices,
            triangles,
            vertex_normals,
            symmetry_group,
            DEFAULT_SURFACE_SAMPLES,
        )
    }

    pub fn with_sample_count(
        name: impl Into<String>,
        class_id: u32,
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        vertex_normals: Option<Vec<Vec3>>,
        mut symmetry_group: Vec<RigidTransform>,
        sample_count: usize,
    ) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::TooFewPoints(vertices.len()));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex".into()));
        }
        for t in &triangles {
            if t.iter().any(|&i| i as usize >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t:?} references missing vertex")));
            }
        }
        let face_based = face_vertex_normals(&vertices, &triangles);
        let vertex_normals: Vec<Vec3> = match vertex_normals {
            Some(n) if n.len() == vertices.len() => n
                .iter()
                .zip(&face_based)
                .zip(&vertices)
                .map(|((n, fb), v)| unit_or_fallback(n, fb, v))
                .collect(),
            Some(n) => {
                return Err(Error::InvalidMesh(format!(
                    "{} normals for {} vertices",
                    n.len(),
                    vertices.len()
                )))
            }
            None => face_based
                .iter()
                .zip(&vertices)
                .map(|(fb, v)| unit_or_fallback(fb, fb, v))
                .collect(),
        };
        if !symmetry_group
            .iter()
            .any(|s| s.rotation.angle() < 1e-9 && s.translation.norm() < 1e-12)
        {
            symmetry_group.insert(0, RigidTransform::identity());
        }
        let diameter = model_diameter(&vertices)?;
        let mut lo = vertices[0];
        let mut hi = vertices[0];
        for v in &vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let volume = signed_volume(&vertices, &triangles).abs();
        let watertight = !triangles.is_empty() && is_watertight(&vertices, &triangles, diameter);
        let samples = if triangles.is_empty() {
            SurfaceSamples {
                points: vertices.clone(),
                normals: vertex_normals.clone(),
            }
        } else {
            poisson_surface_samples(&vertices, &triangles, sample_count, SAMPLING_SEED ^ class_id as u64)
        };
        // Closed under the symmetry group so that ADI vanishes at exact
        // symmetries; the original samples come first.
        let mut closure = samples.points.clone();
        for g in symmetry_group.iter().filter(|g| g.rotation.angle() >= 1e-9 || g.translation.norm() >= 1e-12) {
            closure.extend(samples.points.iter().map(|p| g.apply(p)));
        }
        let sample_grid = Arc::new(PointGrid::new(closure, (diameter / 10.0).max(1e-9)));
        Ok(MeshModel {
            name: name.into(),
            class_id,
            vertices,
            triangles,
            vertex_normals,
            diameter,
            symmetry_group,
            volume,
            watertight,
            samples,
            sample_grid,
            bounds: (lo, hi),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn class_id(&self) -> u32 {
        self.class_id
    }
    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }
    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }
    pub fn vertex_normals(&self) -> &[Vec3] {
        &self.vertex_normals
    }
    /// Maximum pairwise vertex distance, `d_l`.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }
    pub fn symmetry_group(&self) -> &[RigidTransform] {
        &self.symmetry_group
    }
    /// Enclosed volume in m³ (0 for open or point-only models).
    pub fn volume(&self) -> f64 {
        self.volume
    }
    pub fn is_watertight(&self) -> bool {
        self.watertight
    }
    /// Surface samples used by ADI, LCP, ICP and the PPF table.
    pub fn samples(&self) -> &SurfaceSamples {
        &self.samples
    }
    /// Surface samples followed by their images under each non-identity
    /// symmetry.
    pub fn sample_grid(&self) -> &PointGrid {
        &self.sample_grid
    }
    /// Axis-aligned bounds of the vertices in the model frame.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        self.bounds
    }

    /// Same geometry under a different class id.
    pub fn with_class_id(&self, class_id: u32) -> MeshModel {
        MeshModel {
            class_id,
            ..self.clone()
        }
    }

    /// Axis-aligned bounds of the model placed at `pose`.
    pub fn world_bounds(&self, pose: &RigidTransform) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            let p = pose.apply(v);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        (lo, hi)
    }

    /// Axis-aligned box of size `dims` centered at the origin, with the box
    /// symmetry group (4, 8 or 24 rotations depending on repeated extents).
    pub fn cuboid(name: impl Into<String>, class_id: u32, dims: Vec3) -> Result<Self> {
        if dims.iter().any(|&d| d <= 0.0 || !d.is_finite()) {
            return Err(Error::InvalidMesh(format!("box extents must be positive, got {dims:?}")));
        }
        let h = dims / 2.0;
        let mut vertices = Vec::with_capacity(24);
        let mut normals = Vec::with_capacity(24);
        let mut triangles = Vec::with_capacity(12);
        // (normal axis, sign); the two tangent axes are chosen so the quad
        // is counter-clockwise seen from outside.
        for axis in 0..3 {
            for sign in [1.0f64, -1.0] {
                let (u, v) = if sign > 0.0 {
                    ((axis + 1) % 3, (axis + 2) % 3)
                } else {
                    ((axis + 2) % 3, (axis + 1) % 3)
                };
                let mut n = Vec3::zeros();
                n[axis] = sign;
                let base = vertices.len() as u32;
                for (su, sv) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                    let mut p = Vec3::zeros();
                    p[axis] = sign * h[axis];
                    p[u] = su * h[u];
                    p[v] = sv * h[v];
                    vertices.push(p);
                    normals.push(n);
                }
                triangles.push([base, base + 1, base + 2]);
                triangles.push([base, base + 2, base + 3]);
            }
        }
        let symmetry = box_symmetry_group(dims);
        MeshModel::new(name, class_id, vertices, triangles, Some(normals), symmetry)
    }

    /// UV sphere centered at the origin; the symmetry group is left to the
    /// caller (it is continuous).
    pub fn uv_sphere(name: impl Into<String>, class_id: u32, radius: f64, rings: usize, segments: usize) -> Result<Self> {
        let rings = rings.max(3);
        let segments = segments.max(3);
        let mut vertices = vec![Vec3::new(0.0, 0.0, radius)];
        for r in 1..rings {
            let theta = std::f64::consts::PI * r as f64 / rings as f64;
            for s in 0..segments {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                vertices.push(radius * Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
            }
        }
        vertices.push(Vec3::new(0.0, 0.0, -radius));
        let south = (vertices.len() - 1) as u32;
        let ring_start = |r: usize| 1 + (r - 1) * segments;
        let mut triangles = Vec::new();
        for s in 0..segments {
            let a = ring_start(1) + s;
            let b = ring_start(1) + (s + 1) % segments;
            triangles.push([0, a as u32, b as u32]);
        }
        for r in 1..rings - 1 {
            for s in 0..segments {
                let a = (ring_start(r) + s) as u32;
                let b = (ring_start(r) + (s + 1) % segments) as u32;
                let c = (ring_start(r + 1) + s) as u32;
                let d = (ring_start(r + 1) + (s + 1) % segments) as u32;
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
        for s in 0..segments {
            let a = ring_start(rings - 1) + s;
            let b = ring_start(rings - 1) + (s + 1) % segments;
            triangles.push([south, b as u32, a as u32]);
        }
        let normals = vertices.iter().map(|v| v.normalize()).collect();
        MeshModel::new(name, class_id, vertices, triangles, Some(normals), Vec::new())
    }
}

fn unit_or_fallback(n: &Vec3, fallback: &Vec3, position: &Vec3) -> Vec3 {
    for cand in [n, fallback, position] {
        let norm = cand.norm();
        if norm > 1e-12 && norm.is_finite() {
            return cand / norm;
        }
    }
    Vec3::z()
}

fn face_vertex_normals(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); vertices.len()];
    for t in triangles {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        let n = (b - a).cross(&(c - a));
        for &i in t {
            acc[i as usize] += n;
        }
    }
    acc
}

/// Maximum pairwise distance over `points`.
///
/// Pairs are visited in order of decreasing distance from the centroid and
/// the scan stops once `r_i + r_j` cannot beat the current best.
pub fn model_diameter(points: &[Vec3]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints(points.len()));
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - centroid).norm(), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = 0.0f64;
    for (a, &(ra, ia)) in order.iter().enumerate() {
        if 2.0 * ra < best {
            break;
        }
        for &(rb, ib) in &order[a + 1..] {
            if ra + rb < best {
                break;
            }
            best = best.max((points[ia] - points[ib]).norm());
        }
    }
    Ok(best)
}

fn signed_volume(vertices: &[Vec3], triangles: &[[u32; 3]]) -> f64 {
    triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| vertices[i as usize]);
            a.dot(&b.cross(&c)) / 6.0
        })
        .sum()
}

/// Every edge (after welding coincident vertices) is shared by exactly two
/// triangles.
fn is_watertight(vertices: &[Vec3], triangles: &[[u32; 3]], diameter: f64) -> bool {
    let q = (diameter * 1e-9).max(1e-15);
    let mut weld: HashMap<[i64; 3], u32> = HashMap::new();
    let ids: Vec<u32> = vertices
        .iter()
        .map(|v| {
            let key = [0, 1, 2].map(|k| (v[k] / q).round() as i64);
            let next = weld.len() as u32;
            *weld.entry(key).or_insert(next)
        })
        .collect();
    let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let a = ids[t[k] as usize];
            let b = ids[t[(k + 1) % 3] as usize];
            if a == b {
                return false;
            }
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    edges.values().all(|&c| c == 2)
}

/// Proper rotations permuting the box `[-d/2, d/2]` onto itself.
pub fn box_symmetry_group(dims: Vec3) -> Vec<RigidTransform> {
    let tol = 1e-9 * dims.max();
    let mut out = Vec::new();
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for p in perms {
        for signs in 0..8u32 {
            let mut m = Matrix3::<f64>::zeros();
            for r in 0..3 {
                let s = if signs >> r & 1 == 1 { -1.0 } else { 1.0 };
                m[(r, p[r])] = s;
            }
            if (m.determinant() - 1.0).abs() > 1e-9 {
                continue;
            }
            let mapped = m.abs() * dims;
            if (mapped - dims).abs().max() <= tol {
                out.push(RigidTransform::from_rotation_matrix(&m, Vec3::zeros()));
            }
        }
    }
    out.sort_by(|a, b| a.rotation.angle().total_cmp(&b.rotation.angle()));
    out
}

/// Area-weighted random candidates thinned by a minimum-distance rule,
/// shrinking the radius until roughly `count` samples survive.
fn poisson_surface_samples(vertices: &[Vec3], triangles: &[[u32; 3]], count: usize, seed: u64) -> SurfaceSamples {
    let areas: Vec<f64> = triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| vertices[i as usize]);
            0.5 * (b - a).cross(&(c - a)).norm()
        })
        .collect();
    let total: f64 = areas.iter().sum();
    if total <= 0.0 || count == 0 {
        return SurfaceSamples::default();
    }
    let mut cdf = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cdf.push(acc / total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cand = count * 30;
    let mut cands = Vec::with_capacity(n_cand);
    for _ in 0..n_cand {
        let u: f64 = rng.random();
        let ti = cdf.partition_point(|&c| c < u).min(triangles.len() - 1);
        let [a, b, c] = triangles[ti].map(|i| vertices[i as usize]);
        let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        let p = a + r1 * (b - a) + r2 * (c - a);
        let n = (b - a).cross(&(c - a));
        let n = if n.norm() > 0.0 { n.normalize() } else { Vec3::z() };
        cands.push((p, n));
    }
    let mut radius = (2.0 * total / (3f64.sqrt() * count as f64)).sqrt() * 0.75;
    loop {
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let mut kept: Vec<usize> = Vec::new();
        let key = |p: &Vec3| [0, 1, 2].map(|k| (p[k] / radius).floor() as i64);
        'cand: for (i, (p, _)) in cands.iter().enumerate() {
            let k = key(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(v) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            if v.iter().any(|&j| (cands[j].0 - p).norm() < radius) {
                                continue 'cand;
                            }
                        }
                    }
                }
            }
            grid.entry(k).or_default().push(i);
            kept.push(i);
        }
        if kept.len() >= count || radius < 1e-9 {
            kept.truncate(count);
            return SurfaceSamples {
                points: kept.iter().map(|&i| cands[i].0).collect(),
                normals: kept.iter().map(|&i| cands[i].1).collect(),
            };
        }
        radius *= 0.85;
    }
}
