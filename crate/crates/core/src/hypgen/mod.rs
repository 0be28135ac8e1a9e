//! Pose hypothesis generation: boundary-constrained 4-point base sampling
//! with dispersion decay, congruent-set matching against the model,
//! LCP-ordered deduplication under the symmetry group, and ICP refinement.

mod base;
mod congruent;
mod graph;
mod refine;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use base::{
    apply_dispersion_decay, normalize_class_probability, sample_base, Base, BaseParams, BaseSampler, LabeledCloud,
    SampledBase,
};
pub use congruent::{base_invariants, match_congruent_sets, BaseInvariants, CongruenceTolerances, PairIndex};
pub use graph::{build_pixel_graph, shortest_path_length, Bfs, PixelGraph};
pub use refine::{
    dedup_poses, icp_point_to_plane, lcp_score, lcp_score_indexed, near_duplicate, DedupThresholds, IcpParams,
    IndexedCloud,
};

use crate::geometry::{build_ppf_table, MeshModel, PointGrid, PpfQuantization, PpfTable, RigidTransform};
use crate::render::{normals_from_depth, CameraIntrinsics, DepthImage};
use crate::scenegen::PredictionMaps;
use crate::scoring::AlignmentFeatures;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypgenConfig {
    /// Bases sampled per class (`A_i`).
    pub bases_per_class: usize,
    /// Dispersion decay `γ`.
    pub gamma: f64,
    /// Boundary probability threshold `δ`.
    pub boundary_threshold: f64,
    /// Whether the pixel graph and base pool respect predicted boundaries.
    pub boundary_constraint: bool,
    /// Path-length bound `ε_l` in hops; `None` uses a quarter of the image
    /// diagonal.
    pub max_path: Option<usize>,
    /// Coplanarity tolerance for the fourth base point, times `d_l`.
    pub plane_tolerance: f64,
    /// Minimum spacing between base points, times `d_l`.
    pub min_separation: f64,
    /// Congruence distance tolerance, times `d_l`.
    pub distance_tolerance: f64,
    pub ratio_tolerance: f64,
    pub normal_angle_tolerance_deg: f64,
    pub max_congruent_sets: usize,
    pub retry_budget: usize,
    /// LCP radius, times `d_l`.
    pub lcp_radius: f64,
    pub lcp_stride: usize,
    pub dedup_rotation_deg: f64,
    /// Dedup translation threshold, times `d_l`.
    pub dedup_translation: f64,
    /// Hypotheses kept per class (`H_i`).
    pub max_hypotheses: usize,
    pub icp_iterations: usize,
    /// ICP correspondence radius, times `d_l`.
    pub icp_radius: f64,
    pub icp_stride: usize,
    /// Model samples used for the PPF table and pair index.
    pub model_samples: usize,
}

impl Default for HypgenConfig {
    fn default() -> Self {
        HypgenConfig {
            bases_per_class: 100,
            gamma: 0.9,
            boundary_threshold: 0.5,
            boundary_constraint: true,
            max_path: None,
            plane_tolerance: 1.0 / 50.0,
            min_separation: 0.1,
            distance_tolerance: 1.0 / 30.0,
            ratio_tolerance: 0.05,
            normal_angle_tolerance_deg: 20.0,
            max_congruent_sets: 50,
            retry_budget: 20,
            lcp_radius: 1.0 / 20.0,
            lcp_stride: 1,
            dedup_rotation_deg: 15.0,
            dedup_translation: 0.1,
            max_hypotheses: 130,
            icp_iterations: 30,
            icp_radius: 0.1,
            icp_stride: 1,
            model_samples: 500,
        }
    }
}

impl HypgenConfig {
    pub fn max_path_for(&self, cam: &CameraIntrinsics) -> usize {
        self.max_path.unwrap_or_else(|| (cam.diagonal() / 4.0).round() as usize)
    }

    pub fn base_params(&self, diameter: f64, cam: &CameraIntrinsics) -> BaseParams {
        BaseParams {
            max_path: self.max_path_for(cam),
            plane_tolerance: self.plane_tolerance * diameter,
            min_separation: self.min_separation * diameter,
            retry_budget: self.retry_budget,
            exclude_boundary: self.boundary_constraint,
        }
    }

    pub fn tolerances(&self, diameter: f64) -> CongruenceTolerances {
        CongruenceTolerances {
            distance: self.distance_tolerance * diameter,
            ratio: self.ratio_tolerance,
            normal_angle: self.normal_angle_tolerance_deg.to_radians(),
            max_sets: self.max_congruent_sets,
        }
    }

    pub fn dedup_thresholds(&self, diameter: f64) -> DedupThresholds {
        DedupThresholds {
            rotation: self.dedup_rotation_deg.to_radians(),
            translation: self.dedup_translation * diameter,
        }
    }

    pub fn icp_params(&self, diameter: f64) -> IcpParams {
        IcpParams {
            iterations: self.icp_iterations,
            radius: self.icp_radius * diameter,
            stride: self.icp_stride,
        }
    }

    /// Pixel graph for the configured boundary handling.
    pub fn pixel_graph(&self, maps: &PredictionMaps) -> PixelGraph {
        if self.boundary_constraint {
            build_pixel_graph(maps, self.boundary_threshold)
        } else {
            PixelGraph::full(maps.width, maps.height)
        }
    }
}

/// A model with its matching tables.
#[derive(Clone, Debug)]
pub struct PreparedModel {
    pub model: MeshModel,
    pub table: PpfTable,
    pub pairs: PairIndex,
}

impl PreparedModel {
    pub fn new(model: MeshModel, samples: usize) -> Result<Self> {
        let table = build_ppf_table(&model, samples, PpfQuantization::for_diameter(model.diameter()))?;
        let pairs = PairIndex::new(&model, samples);
        Ok(PreparedModel { model, table, pairs })
    }
}

/// Prepared models keyed by class id.
#[derive(Clone, Debug, Default)]
pub struct ModelLibrary {
    models: BTreeMap<u32, PreparedModel>,
}

impl ModelLibrary {
    pub fn new(models: &[MeshModel], samples: usize) -> Result<Self> {
        let prepared: Vec<PreparedModel> = models
            .par_iter()
            .map(|m| PreparedModel::new(m.clone(), samples))
            .collect::<Result<_>>()?;
        Ok(ModelLibrary {
            models: prepared.into_iter().map(|p| (p.model.class_id(), p)).collect(),
        })
    }

    pub fn get(&self, class_id: u32) -> Result<&PreparedModel> {
        self.models.get(&class_id).ok_or(Error::UnknownClass(class_id))
    }

    pub fn model(&self, class_id: u32) -> Result<&MeshModel> {
        self.get(class_id).map(|p| &p.model)
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.models.keys().copied()
    }

    pub fn models(&self) -> impl Iterator<Item = &MeshModel> + '_ {
        self.models.values().map(|p| &p.model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseHypothesis {
    pub class_id: u32,
    #[serde(flatten)]
    pub pose: RigidTransform,
    pub lcp: f64,
    /// Index of the base whose congruent set produced the pose.
    pub base: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<AlignmentFeatures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_adi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class_id: u32,
    pub labeled_points: usize,
    pub bases: usize,
    pub sampling_failures: usize,
    pub candidates: usize,
    pub hypotheses: usize,
}

/// Hypotheses of all classes, grouped by ascending class id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub hypotheses: Vec<PoseHypothesis>,
    pub stats: Vec<ClassStats>,
}

impl HypothesisSet {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn for_class(&self, class_id: u32) -> impl Iterator<Item = &PoseHypothesis> + '_ {
        self.hypotheses.iter().filter(move |h| h.class_id == class_id)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

/// Independent RNG stream for `(seed, a, b)`.
pub(crate) fn stream_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Sequential base sampling for one class; potentials of every point the
/// base's searches reached are multiplied by `γ` after each draw.
pub fn sample_class_bases(
    cloud: &LabeledCloud,
    graph: &PixelGraph,
    prepared: &PreparedModel,
    config: &HypgenConfig,
    cam: &CameraIntrinsics,
    rng: &mut ChaCha8Rng,
) -> (Vec<SampledBase>, usize) {
    let params = config.base_params(prepared.model.diameter(), cam);
    let mut potentials = cloud.prob.clone();
    let mut sampler = BaseSampler::new(graph.len());
    let mut bases = Vec::new();
    let mut failures = 0;
    for _ in 0..config.bases_per_class {
        match sampler.sample(cloud, &potentials, graph, &prepared.table, &params, rng) {
            Ok(s) => {
                base::decay_pixels(&mut potentials, cloud, s.reached.iter().copied(), config.gamma);
                bases.push(s);
            }
            Err(_) => failures += 1,
        }
    }
    (bases, failures)
}

/// Raw candidates `(pose, lcp, base index)` from congruent matching, each
/// scored against the segment its base was drawn from.
pub fn match_bases(
    bases: &[SampledBase],
    cloud: &LabeledCloud,
    prepared: &PreparedModel,
    config: &HypgenConfig,
    seed: u64,
) -> Vec<(RigidTransform, f64, usize)> {
    let d = prepared.model.diameter();
    let tol = config.tolerances(d);
    let radius = config.lcp_radius * d;
    let per_base: Vec<Vec<(RigidTransform, f64, usize)>> = bases
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, cloud.class_id as u64, k as u64));
            let poses = match_congruent_sets(&s.base, &prepared.pairs, &tol, &mut rng);
            if poses.is_empty() {
                return Vec::new();
            }
            let segment: Vec<_> = cloud.points_at(&s.reached).map(|i| cloud.cloud.points[i]).collect();
            let grid = PointGrid::new(segment, radius.max(1e-6));
            poses
                .into_iter()
                .map(|t| (t, lcp_score_indexed(&t, &prepared.model, &grid, radius, config.lcp_stride), k))
                .collect()
        })
        .collect();
    per_base.into_iter().flatten().collect()
}

/// Sorts candidates by LCP, keeps up to `H_i` representatives that are not
/// near-duplicates under the symmetry group, refines each with ICP against
/// the class cloud, rescores, and deduplicates once more so the output set
/// itself satisfies the separation thresholds.
pub fn dedup_and_refine(
    mut candidates: Vec<(RigidTransform, f64, usize)>,
    prepared: &PreparedModel,
    cloud: &LabeledCloud,
    config: &HypgenConfig,
) -> Vec<PoseHypothesis> {
    let model = &prepared.model;
    let d = model.diameter();
    let th = config.dedup_thresholds(d);
    let sym = model.symmetry_group();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    let poses: Vec<RigidTransform> = candidates.iter().map(|c| c.0).collect();
    let keep = dedup_poses(&poses, sym, &th, config.max_hypotheses);
    if keep.is_empty() {
        return Vec::new();
    }
    let icp = config.icp_params(d);
    let indexed = IndexedCloud::new(&cloud.cloud, icp.radius);
    let lcp_radius = config.lcp_radius * d;
    let lcp_grid = PointGrid::new(cloud.cloud.points.clone(), lcp_radius.max(1e-6));
    let mut refined: Vec<(RigidTransform, f64, usize)> = keep
        .par_iter()
        .map(|&i| {
            let t = icp_point_to_plane(&candidates[i].0, model, &indexed, &icp);
            (t, lcp_score_indexed(&t, model, &lcp_grid, lcp_radius, config.lcp_stride), candidates[i].2)
        })
        .collect();
    refined.sort_by(|a, b| b.1.total_cmp(&a.1));
    let poses: Vec<RigidTransform> = refined.iter().map(|c| c.0).collect();
    dedup_poses(&poses, sym, &th, config.max_hypotheses)
        .into_iter()
        .map(|i| PoseHypothesis {
            class_id: model.class_id(),
            pose: refined[i].0,
            lcp: refined[i].1,
            base: refined[i].2,
            features: None,
            predicted_adi: None,
            score: None,
        })
        .collect()
}

/// Hypotheses for every class in the library. Deterministic for a seed.
pub fn generate_hypotheses(
    maps: &PredictionMaps,
    depth: &DepthImage,
    cam: &CameraIntrinsics,
    library: &ModelLibrary,
    config: &HypgenConfig,
    seed: u64,
) -> Result<HypothesisSet> {
    if (maps.width, maps.height) != (depth.width, depth.height) || (depth.width, depth.height) != (cam.width, cam.height) {
        return Err(Error::InvalidImage("maps, depth and camera sizes differ".into()));
    }
    let normals = normals_from_depth(depth, cam);
    let graph = config.pixel_graph(maps);
    let mut out = HypothesisSet::default();
    for class_id in library.class_ids() {
        if class_id as usize > maps.num_classes {
            continue;
        }
        let prepared = library.get(class_id)?;
        let cloud = LabeledCloud::new(maps, depth, &normals, cam, class_id);
        let mut stats = ClassStats {
            class_id,
            labeled_points: cloud.len(),
            ..Default::default()
        };
        if cloud.len() >= 4 {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, class_id as u64, u64::MAX));
            let (bases, failures) = sample_class_bases(&cloud, &graph, prepared, config, cam, &mut rng);
            stats.bases = bases.len();
            stats.sampling_failures = failures;
            let candidates = match_bases(&bases, &cloud, prepared, config, seed);
            stats.candidates = candidates.len();
            let hyps = dedup_and_refine(candidates, prepared, &cloud, config);
            stats.hypotheses = hyps.len();
            out.hypotheses.extend(hyps);
        }
        out.stats.push(stats);
    }
    Ok(out)
}
