//! Scene-level orchestration: hypotheses with features, their volumetric
//! conflicts, and selection under any scoring.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::eval::ScoreSource;
use crate::geometry::RigidTransform;
use crate::hypgen::{generate_hypotheses, HypothesisSet, ModelLibrary};
use crate::render::{CameraIntrinsics, DepthImage};
use crate::scenegen::PredictionMaps;
use crate::scoring::{annotate_features, annotate_scores, SceneEvidence, TreeEnsemble};
use crate::select::{assemble_scene, build_conflicts, Candidate, PlacedHypothesis, Selection, SelectionProblem, Solver};
use crate::Result;

/// Hypothesis generation followed by feature extraction.
pub fn prepare_scene(
    maps: &PredictionMaps,
    depth: &DepthImage,
    cam: &CameraIntrinsics,
    library: &ModelLibrary,
    config: &PipelineConfig,
    seed: u64,
) -> Result<HypothesisSet> {
    let mut set = generate_hypotheses(maps, depth, cam, library, &config.hypgen, seed)?;
    let evidence = SceneEvidence::new(maps, depth, cam, &config.features);
    annotate_features(&mut set, library, &evidence)?;
    Ok(set)
}

/// Conflicting hypothesis pairs; independent of scores, so computed once
/// per hypothesis set.
pub fn hypothesis_conflicts(set: &HypothesisSet, library: &ModelLibrary, config: &PipelineConfig) -> Result<Vec<(usize, usize)>> {
    let placed = set
        .hypotheses
        .iter()
        .map(|h| {
            Ok(PlacedHypothesis {
                model: library.model(h.class_id)?,
                pose: h.pose,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(build_conflicts(&placed, &config.conflicts))
}

/// Selection problem over `set` with one score per hypothesis. Classes
/// without an entry in `capacities` are unbounded.
pub fn selection_problem(
    set: &HypothesisSet,
    scores: &[f64],
    capacities: &BTreeMap<u32, usize>,
    conflicts: &[(usize, usize)],
) -> Result<SelectionProblem> {
    if scores.len() != set.len() {
        return Err(crate::Error::InvalidProblem(format!("{} scores for {} hypotheses", scores.len(), set.len())));
    }
    let mut next: BTreeMap<u32, usize> = BTreeMap::new();
    let hypotheses = set
        .hypotheses
        .iter()
        .zip(scores)
        .map(|(h, &score)| {
            let k = next.entry(h.class_id).or_default();
            *k += 1;
            Candidate {
                class_id: h.class_id,
                index: *k - 1,
                score,
            }
        })
        .collect();
    let mut caps = capacities.clone();
    for h in &set.hypotheses {
        caps.entry(h.class_id).or_insert(crate::select::UNLIMITED);
    }
    SelectionProblem::new(hypotheses, caps, conflicts.to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedPose {
    pub class_id: u32,
    /// Position in the hypothesis set.
    pub hypothesis: usize,
    #[serde(flatten)]
    pub pose: RigidTransform,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_adi: Option<f64>,
}

/// Outcome of selection on one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub solver: Solver,
    pub scores: ScoreSource,
    pub objective: f64,
    pub nodes: u64,
    pub wall_time_ms: f64,
    pub hypotheses: usize,
    pub conflicts: usize,
    pub poses: Vec<SelectedPose>,
}

impl SelectionReport {
    /// Selected poses grouped per class.
    pub fn estimates(&self) -> BTreeMap<u32, Vec<RigidTransform>> {
        let mut out: BTreeMap<u32, Vec<RigidTransform>> = BTreeMap::new();
        for p in &self.poses {
            out.entry(p.class_id).or_default().push(p.pose);
        }
        out
    }
}

pub fn select_poses(
    set: &HypothesisSet,
    scores: &[f64],
    source: ScoreSource,
    capacities: &BTreeMap<u32, usize>,
    conflicts: &[(usize, usize)],
    solver: Solver,
) -> Result<(Selection, SelectionReport)> {
    let problem = selection_problem(set, scores, capacities, conflicts)?;
    let start = Instant::now();
    let selection = solver.solve(&problem);
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let poses: Vec<RigidTransform> = set.hypotheses.iter().map(|h| h.pose).collect();
    // Validates feasibility.
    assemble_scene(&selection, &problem, &poses)?;
    let report = SelectionReport {
        solver,
        scores: source,
        objective: selection.objective,
        nodes: selection.nodes,
        wall_time_ms,
        hypotheses: set.len(),
        conflicts: problem.conflicts.len(),
        poses: selection
            .chosen_indices()
            .map(|i| {
                let h = &set.hypotheses[i];
                SelectedPose {
                    class_id: h.class_id,
                    hypothesis: i,
                    pose: h.pose,
                    score: scores[i],
                    predicted_adi: h.predicted_adi,
                }
            })
            .collect(),
    };
    Ok((selection, report))
}

/// Full estimate for one scene with learned scores.
#[allow(clippy::too_many_arguments)]
pub fn estimate_scene(
    maps: &PredictionMaps,
    depth: &DepthImage,
    cam: &CameraIntrinsics,
    library: &ModelLibrary,
    ensemble: &TreeEnsemble,
    capacities: &BTreeMap<u32, usize>,
    config: &PipelineConfig,
    seed: u64,
) -> Result<(HypothesisSet, SelectionReport)> {
    let mut set = prepare_scene(maps, depth, cam, library, config, seed)?;
    annotate_scores(&mut set, library, ensemble, config.k)?;
    let conflicts = hypothesis_conflicts(&set, library, config)?;
    let scores: Vec<f64> = set.hypotheses.iter().map(|h| h.score.unwrap_or(0.0)).collect();
    let (_, report) = select_poses(&set, &scores, ScoreSource::Learned, capacities, &conflicts, config.solver)?;
    Ok((set, report))
}
