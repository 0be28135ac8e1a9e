//! Synthetic bin scenes with ground truth: tightly packed grids and
//! drop-and-settle piles, rendered into depth, label and boundary images.
//!
//! The camera frame doubles as the world frame. The bin floor is the plane
//! `z = floor_depth`; "up" is `-z`.

mod noise;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Unit, UnitQuaternion};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use noise::{simulate_predictions, NoiseConfig, PredictionMaps};

use crate::geometry::{MeshModel, RigidTransform, Vec3};
use crate::render::{render_scene_depth, CameraIntrinsics, DepthImage, Image, Mask};
use crate::select::{boxes_intersect, ColumnOccupancy, ConflictParams, COLUMN_SUBDIVISION};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Packed,
    Pile,
}

/// Where a model's geometry comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSource {
    Box {
        dims: [f64; 3],
    },
    Sphere {
        radius: f64,
    },
    /// ASCII PLY mesh; the symmetry sidecar defaults to the same path with a
    /// `.sym` extension when it exists.
    Ply {
        path: PathBuf,
        #[serde(default)]
        symmetry: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub class_id: u32,
    #[serde(flatten)]
    pub source: ModelSource,
    /// Instances per scene; with `count_max` set, each scene draws uniformly
    /// from `count..=count_max`.
    pub count: usize,
    #[serde(default)]
    pub count_max: Option<usize>,
}

impl ModelEntry {
    pub fn cuboid(class_id: u32, dims: [f64; 3], count: usize) -> Self {
        ModelEntry {
            name: format!("box{class_id}"),
            class_id,
            source: ModelSource::Box { dims },
            count,
            count_max: None,
        }
    }

    pub fn build(&self, base_dir: Option<&Path>) -> Result<MeshModel> {
        match &self.source {
            ModelSource::Box { dims } => MeshModel::cuboid(&self.name, self.class_id, Vec3::from(*dims)),
            ModelSource::Sphere { radius } => MeshModel::uv_sphere(&self.name, self.class_id, *radius, 16, 32),
            ModelSource::Ply { path, symmetry } => {
                let resolve = |p: &Path| match base_dir {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                };
                let path = resolve(path);
                let sym_path = match symmetry {
                    Some(s) => Some(resolve(s)),
                    None => Some(path.with_extension("sym")).filter(|p| p.exists()),
                };
                crate::io::read_ply_model(&path, &self.name, self.class_id, sym_path.as_deref())
            }
        }
    }
}

fn default_floor_depth() -> f64 {
    0.5
}

fn default_packing_gap() -> f64 {
    0.004
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub models: Vec<ModelEntry>,
    pub scenario: Scenario,
    /// Bin interior (x, y, height) in meters, centered on the optical axis.
    pub bin_extent: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub camera: CameraIntrinsics,
    #[serde(default = "default_floor_depth")]
    pub floor_depth: f64,
    /// Target spacing between neighbours in packed scenes (reduced when the
    /// bin is an exact fit).
    #[serde(default = "default_packing_gap")]
    pub packing_gap: f64,
}

impl SceneSpec {
    /// Spec with the default camera, floor depth and packing gap.
    pub fn new(models: Vec<ModelEntry>, scenario: Scenario, bin_extent: [f64; 3], seed: u64) -> Self {
        SceneSpec {
            models,
            scenario,
            bin_extent,
            seed,
            camera: CameraIntrinsics::default(),
            floor_depth: default_floor_depth(),
            packing_gap: default_packing_gap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidSpec("no models".into()));
        }
        if self.bin_extent.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidSpec("bin extent must be positive".into()));
        }
        if !(self.floor_depth > 0.0) || self.floor_depth - self.bin_extent[2] <= 0.0 {
            return Err(Error::InvalidSpec("bin must lie in front of the camera".into()));
        }
        let mut ids: Vec<u32> = self.models.iter().map(|m| m.class_id).collect();
        ids.sort_unstable();
        if ids.iter().enumerate().any(|(k, &id)| id != k as u32 + 1) {
            return Err(Error::InvalidSpec(format!("class ids must be exactly 1..={}, got {ids:?}", ids.len())));
        }
        for m in &self.models {
            if m.count == 0 || m.count_max.is_some_and(|mx| mx < m.count) {
                return Err(Error::InvalidSpec(format!("invalid count for class {}", m.class_id)));
            }
        }
        self.camera.validate()
    }

    pub fn num_classes(&self) -> usize {
        self.models.len()
    }

    /// Models ordered by class id.
    pub fn build_models(&self, base_dir: Option<&Path>) -> Result<Vec<MeshModel>> {
        let mut entries: Vec<&ModelEntry> = self.models.iter().collect();
        entries.sort_by_key(|e| e.class_id);
        entries.iter().map(|e| e.build(base_dir)).collect()
    }

    pub fn with_seed(&self, seed: u64) -> SceneSpec {
        SceneSpec { seed, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub class_id: u32,
    /// 1-based; equals the value in the instance label image.
    pub instance_id: u32,
    pub pose: RigidTransform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthScene {
    pub spec: SceneSpec,
    pub placements: Vec<Placement>,
    pub depth: DepthImage,
    pub class_labels: Image<u32>,
    pub instance_labels: Image<u32>,
    pub boundary: Mask,
}

impl GroundTruthScene {
    pub fn camera(&self) -> &CameraIntrinsics {
        &self.spec.camera
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes()
    }

    /// Number of placed instances per class (the `N_i` upper bounds).
    pub fn counts(&self) -> BTreeMap<u32, usize> {
        let mut out: BTreeMap<u32, usize> = self.spec.models.iter().map(|m| (m.class_id, 0)).collect();
        for p in &self.placements {
            *out.entry(p.class_id).or_default() += 1;
        }
        out
    }

    /// Visible pixel count per instance id.
    pub fn visible_pixels(&self) -> BTreeMap<u32, usize> {
        let mut out: BTreeMap<u32, usize> = self.placements.iter().map(|p| (p.instance_id, 0)).collect();
        for &id in &self.instance_labels.data {
            if id != 0 {
                *out.entry(id).or_default() += 1;
            }
        }
        out
    }
}

/// Joint render of placements over the bin floor.
pub struct RenderedScene {
    pub depth: DepthImage,
    pub class_labels: Image<u32>,
    pub instance_labels: Image<u32>,
    pub boundary: Mask,
}

pub fn render_placements(
    models: &[MeshModel],
    placements: &[Placement],
    cam: &CameraIntrinsics,
    floor_depth: f64,
) -> Result<RenderedScene> {
    let placed: Vec<(&MeshModel, RigidTransform)> = placements
        .iter()
        .map(|p| model_for(models, p.class_id).map(|m| (m, p.pose)))
        .collect::<Result<_>>()?;
    let mut r = render_scene_depth(&placed, cam)?;
    for d in &mut r.depth.data {
        if *d == 0.0 {
            *d = floor_depth;
        }
    }
    // render_scene_depth numbers instances by list position; placements
    // carry explicit ids.
    for id in &mut r.instance_ids.data {
        if *id != 0 {
            *id = placements[*id as usize - 1].instance_id;
        }
    }
    Ok(RenderedScene {
        depth: r.depth,
        class_labels: r.class_ids,
        instance_labels: r.instance_ids,
        boundary: r.boundary,
    })
}

pub fn model_for(models: &[MeshModel], class_id: u32) -> Result<&MeshModel> {
    models
        .iter()
        .find(|m| m.class_id() == class_id)
        .ok_or(Error::UnknownClass(class_id))
}

/// Generates a scene. `models` must contain one model per class in the spec
/// (see [`SceneSpec::build_models`]).
pub fn generate_scene(spec: &SceneSpec, models: &[MeshModel]) -> Result<GroundTruthScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut classes: Vec<u32> = Vec::new();
    let mut entries: Vec<&ModelEntry> = spec.models.iter().collect();
    entries.sort_by_key(|e| e.class_id);
    for e in entries {
        model_for(models, e.class_id)?;
        let n = match e.count_max {
            Some(mx) => rng.random_range(e.count..=mx),
            None => e.count,
        };
        classes.extend(std::iter::repeat_n(e.class_id, n));
    }
    classes.shuffle(&mut rng);
    let poses = match spec.scenario {
        Scenario::Packed => place_packed(spec, models, &classes, &mut rng)?,
        Scenario::Pile => place_pile(spec, models, &classes, &mut rng)?,
    };
    let placements: Vec<Placement> = classes
        .iter()
        .zip(poses)
        .enumerate()
        .map(|(k, (&class_id, pose))| Placement {
            class_id,
            instance_id: k as u32 + 1,
            pose,
        })
        .collect();
    let r = render_placements(models, &placements, &spec.camera, spec.floor_depth)?;
    let scene = GroundTruthScene {
        spec: spec.clone(),
        placements,
        depth: r.depth,
        class_labels: r.class_labels,
        instance_labels: r.instance_labels,
        boundary: r.boundary,
    };
    if spec.scenario == Scenario::Packed {
        if let Some((id, _)) = scene.visible_pixels().into_iter().find(|&(_, n)| n == 0) {
            return Err(Error::InvalidSpec(format!("packed instance {id} is not visible from the camera")));
        }
    }
    Ok(scene)
}

fn random_small_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> UnitQuaternion<f64> {
    let axis = loop {
        let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        if v.norm() > 1e-9 {
            break Unit::new_normalize(v);
        }
    };
    UnitQuaternion::from_axis_angle(&axis, max_angle * rng.random::<f64>())
}

const PILE_MAX_TILT_DEG: f64 = 25.0;

/// Orientation of a dropped object: one of the six model-frame axes points
/// down, followed by a random yaw and a tilt of up to `PILE_MAX_TILT_DEG`
/// about a random horizontal axis. Purely uniform rotations leave most
/// objects balanced on edges and corners since nothing settles after contact.
fn pile_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let axes = [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()];
    let down = axes[rng.random_range(0..axes.len())];
    let face = UnitQuaternion::rotation_between(&down, &Vec3::z()).unwrap_or_else(|| {
        UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI)
    });
    let yaw = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), rng.random_range(0.0..std::f64::consts::TAU));
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let tilt_axis = Unit::new_normalize(Vec3::new(phi.cos(), phi.sin(), 0.0));
    let tilt = UnitQuaternion::from_axis_angle(&tilt_axis, rng.random_range(0.0..PILE_MAX_TILT_DEG.to_radians()));
    tilt * yaw * face
}

/// Pose with rotation `rot` whose world bounds are centered at `(x, y)` in
/// the image plane directions and touch the floor from above.
fn resting_pose(model: &MeshModel, rot: UnitQuaternion<f64>, x: f64, y: f64, floor: f64) -> RigidTransform {
    let probe = RigidTransform::new(rot, Vec3::zeros());
    let (lo, hi) = model.world_bounds(&probe);
    let c = (lo + hi) / 2.0;
    RigidTransform::new(rot, Vec3::new(x - c.x, y - c.y, floor - hi.z))
}

fn place_packed(spec: &SceneSpec, models: &[MeshModel], classes: &[u32], rng: &mut ChaCha8Rng) -> Result<Vec<RigidTransform>> {
    let n = classes.len();
    let mut fx: f64 = 0.0;
    let mut fy: f64 = 0.0;
    for &c in classes {
        let (lo, hi) = model_for(models, c)?.bounds();
        fx = fx.max(hi.x - lo.x);
        fy = fy.max(hi.y - lo.y);
    }
    let [bx, by, bh] = spec.bin_extent;
    let slack = 1e-9;
    let cols_max = ((bx + slack) / fx).floor() as usize;
    let rows_max = ((by + slack) / fy).floor() as usize;
    let too_tall = classes.iter().find(|&&c| {
        let (lo, hi) = model_for(models, c).unwrap().bounds();
        hi.z - lo.z > bh
    });
    if cols_max * rows_max < n || too_tall.is_some() {
        let failing = too_tall.copied().unwrap_or(classes[(cols_max * rows_max).min(n - 1)]);
        return Err(Error::PlacementFailure {
            class_id: failing,
            name: model_for(models, failing)?.name().to_string(),
        });
    }
    let (cols, rows) = (1..=cols_max)
        .filter_map(|c| {
            let r = n.div_ceil(c);
            (r <= rows_max).then_some((c, r))
        })
        .min_by(|a, b| {
            let da = (a.0 as f64 * fx - a.1 as f64 * fy).abs();
            let db = (b.0 as f64 * fx - b.1 as f64 * fy).abs();
            da.total_cmp(&db).then(a.0.cmp(&b.0))
        })
        .expect("at least one arrangement fits");
    let gap = |count: usize, extent: f64, size: f64| {
        if count > 1 {
            spec.packing_gap.min((extent - count as f64 * size) / (count - 1) as f64).max(0.0)
        } else {
            spec.packing_gap
        }
    };
    let (gx, gy) = (gap(cols, bx, fx), gap(rows, by, fy));
    let (cell_x, cell_y) = (fx + gx, fy + gy);
    let mut cells: Vec<(usize, usize)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (c, r))).collect();
    cells.shuffle(rng);
    let max_angle = 2f64.to_radians();
    let max_shift = 0.002;
    let mut poses = Vec::with_capacity(n);
    for (k, &class) in classes.iter().enumerate() {
        let model = model_for(models, class)?;
        let (c, r) = cells[k];
        let cx = (c as f64 - (cols as f64 - 1.0) / 2.0) * cell_x;
        let cy = (r as f64 - (rows as f64 - 1.0) / 2.0) * cell_y;
        let rot = random_small_rotation(rng, max_angle);
        let shift = loop {
            let s = Vec3::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0, 0.0);
            if s.norm() <= 1.0 {
                break s * max_shift;
            }
        };
        // Shrink the jitter until the footprint stays inside its cell.
        let mut scale = 1.0;
        let pose = loop {
            let q = UnitQuaternion::identity().slerp(&rot, scale);
            let pose = resting_pose(model, q, cx + shift.x * scale, cy + shift.y * scale, spec.floor_depth);
            let (lo, hi) = model.world_bounds(&pose);
            let inside = lo.x >= cx - cell_x / 2.0 - 1e-12
                && hi.x <= cx + cell_x / 2.0 + 1e-12
                && lo.y >= cy - cell_y / 2.0 - 1e-12
                && hi.y <= cy + cell_y / 2.0 + 1e-12;
            if inside || scale == 0.0 {
                break pose;
            }
            scale = if scale < 1.0 / 64.0 { 0.0 } else { scale / 2.0 };
        };
        poses.push(pose);
    }
    Ok(poses)
}

const PILE_ATTEMPTS: usize = 200;
const SETTLE_CANDIDATES: usize = 12;

fn place_pile(spec: &SceneSpec, models: &[MeshModel], classes: &[u32], rng: &mut ChaCha8Rng) -> Result<Vec<RigidTransform>> {
    let d_min = classes
        .iter()
        .map(|&c| model_for(models, c).map(|m| m.diameter()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let params = ConflictParams::default();
    let h = d_min * params.voxel_fraction / COLUMN_SUBDIVISION as f64;
    let [bx, by, bh] = spec.bin_extent;
    let floor = spec.floor_depth;
    let bin_top = floor - bh;
    let mut placed: Vec<(u32, RigidTransform, ColumnOccupancy)> = Vec::new();
    for &class in classes {
        let model = model_for(models, class)?;
        let mut accepted = None;
        let mut valid = 0;
        for _ in 0..PILE_ATTEMPTS {
            let rot = pile_rotation(rng);
            let (lo, hi) = model.world_bounds(&RigidTransform::new(rot, Vec3::zeros()));
            let half = (hi - lo) / 2.0;
            if 2.0 * half.x > bx || 2.0 * half.y > by {
                continue;
            }
            let x = (rng.random::<f64>() - 0.5) * (bx - 2.0 * half.x);
            let y = (rng.random::<f64>() - 0.5) * (by - 2.0 * half.y);
            let ceiling = placed.iter().map(|p| p.2.bounds().0.z).fold(bin_top, f64::min);
            let start = resting_pose(model, rot, x, y, ceiling - 1e-3);
            let mut shape = ColumnOccupancy::new(model, &start, h);
            let mut drop = floor - shape.bounds().1.z;
            let start_bounds = shape.bounds();
            for (_, _, other) in &placed {
                let (olo, ohi) = other.bounds();
                let footprint_hit = boxes_intersect(
                    &(Vec3::new(start_bounds.0.x, start_bounds.0.y, 0.0), Vec3::new(start_bounds.1.x, start_bounds.1.y, 0.0)),
                    &(Vec3::new(olo.x, olo.y, 0.0), Vec3::new(ohi.x, ohi.y, 0.0)),
                );
                if footprint_hit {
                    if let Some(gap) = shape.clearance_below(other) {
                        drop = drop.min(gap);
                    }
                }
            }
            shape.translate_z(drop);
            let pose = RigidTransform::new(rot, start.translation + Vec3::new(0.0, 0.0, drop));
            if shape.bounds().0.z < bin_top {
                continue;
            }
            let collides = placed.iter().any(|(c, _, other)| {
                let eps = params.epsilon_v(model, model_for(models, *c).unwrap());
                shape.overlap(other) > eps
            });
            if collides {
                continue;
            }
            // Nothing settles after contact, so keep the lowest of several
            // valid drops to avoid towers balanced on corners.
            let top = shape.bounds().0.z;
            if accepted.as_ref().is_none_or(|(_, s): &(RigidTransform, ColumnOccupancy)| top > s.bounds().0.z) {
                accepted = Some((pose, shape));
            }
            valid += 1;
            if valid == SETTLE_CANDIDATES {
                break;
            }
        }
        let Some((pose, shape)) = accepted else {
            return Err(Error::PlacementFailure {
                class_id: class,
                name: model.name().to_string(),
            });
        };
        placed.push((class, pose, shape));
    }
    Ok(placed.into_iter().map(|p| p.1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::pairwise_overlap_volume;

    fn box_entry(class_id: u32, dims: [f64; 3], count: usize) -> ModelEntry {
        ModelEntry::cuboid(class_id, dims, count)
    }

    fn spec(models: Vec<ModelEntry>, scenario: Scenario, bin: [f64; 3], seed: u64) -> SceneSpec {
        SceneSpec::new(models, scenario, bin, seed)
    }

    #[test]
    fn exact_fit_grid() {
        let s = spec(vec![box_entry(1, [0.05, 0.05, 0.05], 4)], Scenario::Packed, [0.1, 0.1, 0.1], 3);
        let models = s.build_models(None).unwrap();
        let g = generate_scene(&s, &models).unwrap();
        assert_eq!(g.placements.len(), 4);
        let mut centers: Vec<(i64, i64)> = g
            .placements
            .iter()
            .map(|p| {
                assert!(p.pose.rotation.angle() < 1e-12);
                ((p.pose.translation.x * 1e6).round() as i64, (p.pose.translation.y * 1e6).round() as i64)
            })
            .collect();
        centers.sort_unstable();
        assert_eq!(centers, vec![(-25000, -25000), (-25000, 25000), (25000, -25000), (25000, 25000)]);
        let m = &models[0];
        for i in 0..4 {
            for j in i + 1..4 {
                let v = pairwise_overlap_volume(m, &g.placements[i].pose, m, &g.placements[j].pose, m.diameter() / 40.0);
                assert_eq!(v.volume, 0.0);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(
            vec![box_entry(1, [0.08, 0.05, 0.04], 3), box_entry(2, [0.06, 0.06, 0.03], 3)],
            Scenario::Packed,
            [0.3, 0.2, 0.1],
            17,
        );
        let models = s.build_models(None).unwrap();
        let a = generate_scene(&s, &models).unwrap();
        let b = generate_scene(&s, &models).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&s.with_seed(18), &models).unwrap();
        assert_ne!(a.placements, c.placements);
    }

    #[test]
    fn packed_jitter_is_bounded() {
        let s = spec(vec![box_entry(1, [0.08, 0.05, 0.04], 6)], Scenario::Packed, [0.3, 0.2, 0.1], 5);
        let models = s.build_models(None).unwrap();
        let g = generate_scene(&s, &models).unwrap();
        for p in &g.placements {
            assert!(p.pose.rotation.angle() <= 2f64.to_radians() + 1e-12);
            let (_, hi) = models[0].world_bounds(&p.pose);
            assert!((hi.z - 0.5).abs() < 1e-12);
        }
        assert!(g.visible_pixels().values().all(|&n| n > 0));
    }

    #[test]
    fn bin_too_small_names_class() {
        let s = spec(vec![box_entry(1, [0.08, 0.05, 0.04], 9)], Scenario::Packed, [0.2, 0.1, 0.1], 1);
        let models = s.build_models(None).unwrap();
        match generate_scene(&s, &models) {
            Err(Error::PlacementFailure { class_id, name }) => {
                assert_eq!(class_id, 1);
                assert_eq!(name, "box1");
            }
            other => panic!("expected placement failure, got {other:?}"),
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(vec![box_entry(2, [0.05; 3], 1)], Scenario::Packed, [0.1, 0.1, 0.1], 0);
        assert!(s.validate().is_err());
        s.models[0].class_id = 1;
        s.bin_extent[0] = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn pile_is_inside_bin_without_overlap() {
        let s = spec(
            vec![box_entry(1, [0.08, 0.05, 0.04], 3), box_entry(2, [0.06, 0.06, 0.03], 3)],
            Scenario::Pile,
            [0.2, 0.16, 0.15],
            9,
        );
        let models = s.build_models(None).unwrap();
        let g = generate_scene(&s, &models).unwrap();
        assert_eq!(g.placements.len(), 6);
        let params = ConflictParams::default();
        for (i, a) in g.placements.iter().enumerate() {
            let ma = model_for(&models, a.class_id).unwrap();
            let (lo, hi) = ma.world_bounds(&a.pose);
            assert!(lo.x >= -0.1 - 1e-9 && hi.x <= 0.1 + 1e-9);
            assert!(lo.y >= -0.08 - 1e-9 && hi.y <= 0.08 + 1e-9);
            assert!(lo.z >= 0.35 - 1e-9 && hi.z <= 0.5 + 1e-9);
            for b in &g.placements[i + 1..] {
                let mb = model_for(&models, b.class_id).unwrap();
                let v = pairwise_overlap_volume(ma, &a.pose, mb, &b.pose, ma.diameter().min(mb.diameter()) / 40.0);
                assert!(v.volume <= params.epsilon_v(ma, mb), "{v:?}");
            }
        }
    }

    #[test]
    fn rerender_reproduces_images() {
        for scenario in [Scenario::Packed, Scenario::Pile] {
            let s = spec(vec![box_entry(1, [0.08, 0.05, 0.04], 4)], scenario, [0.2, 0.16, 0.15], 2);
            let models = s.build_models(None).unwrap();
            let g = generate_scene(&s, &models).unwrap();
            let r = render_placements(&models, &g.placements, &s.camera, s.floor_depth).unwrap();
            assert_eq!(r.depth, g.depth);
            assert_eq!(r.class_labels, g.class_labels);
            assert_eq!(r.instance_labels, g.instance_labels);
            assert_eq!(r.boundary, g.boundary);
        }
    }

    #[test]
    fn count_ranges_are_respected() {
        let mut e = box_entry(1, [0.05, 0.05, 0.04], 2);
        e.count_max = Some(5);
        let s = spec(vec![e], Scenario::Packed, [0.3, 0.2, 0.1], 0);
        let models = s.build_models(None).unwrap();
        let counts: Vec<usize> = (0..20)
            .map(|k| generate_scene(&s.with_seed(k), &models).unwrap().placements.len())
            .collect();
        assert!(counts.iter().all(|&n| (2..=5).contains(&n)));
        assert!(counts.iter().any(|&n| n != counts[0]));
    }
}
