//! Rendering-based alignment features and the learned quality regressor.

mod features;
mod gbrt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use features::{compute_features, distance_transform, surface_similarity, AlignmentFeatures, FeatureParams, SceneEvidence};
pub use gbrt::{train_gbrt, GbrtParams, TrainingLog, TreeEnsemble, TreeNode, WeightedTree, NUM_FEATURES};

use crate::geometry::adi_distance;
use crate::hypgen::{generate_hypotheses, HypgenConfig, HypothesisSet, ModelLibrary};
use crate::scenegen::{GroundTruthScene, PredictionMaps};
use crate::Result;

/// Recall acceptance fraction `k_l`.
pub const DEFAULT_K: f64 = 0.1;

/// `(predicted ADI, score)` with `score = max(0, 1 − h/(k·d))`.
pub fn predict_quality(ensemble: &TreeEnsemble, features: &AlignmentFeatures, k: f64, diameter: f64) -> (f64, f64) {
    let h = ensemble.predict(&features.to_array());
    (h, quality_score(h, k, diameter))
}

pub fn quality_score(adi: f64, k: f64, diameter: f64) -> f64 {
    let radius = k * diameter;
    if radius <= 0.0 {
        return 0.0;
    }
    (1.0 - adi / radius).max(0.0)
}

/// Fills `features` for every hypothesis in the set.
pub fn annotate_features(set: &mut HypothesisSet, library: &ModelLibrary, evidence: &SceneEvidence) -> Result<()> {
    set.hypotheses.par_iter_mut().try_for_each(|h| {
        let model = library.model(h.class_id)?;
        h.features = Some(compute_features(&h.pose, model, evidence)?);
        Ok(())
    })
}

/// Fills `predicted_adi` and `score` from already computed features.
pub fn annotate_scores(set: &mut HypothesisSet, library: &ModelLibrary, ensemble: &TreeEnsemble, k: f64) -> Result<()> {
    for h in &mut set.hypotheses {
        let d = library.model(h.class_id)?.diameter();
        let f = h.features.unwrap_or_default();
        let (adi, score) = predict_quality(ensemble, &f, k, d);
        h.predicted_adi = Some(adi);
        h.score = Some(score);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub features: AlignmentFeatures,
    /// ADI to the closest same-class ground-truth pose (meters).
    pub target: f64,
    pub scene: String,
    pub class_id: u32,
}

#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub samples: Vec<TrainingSample>,
    /// Classes skipped because the scene holds no instance of them.
    pub warnings: Vec<String>,
}

impl TrainingSet {
    pub fn features(&self) -> Vec<[f64; NUM_FEATURES]> {
        self.samples.iter().map(|s| s.features.to_array()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }
}

/// Hypotheses of one scene paired with their feature vectors and the ADI to
/// the nearest same-class ground-truth instance.
pub fn scene_samples(
    name: &str,
    gt: &GroundTruthScene,
    set: &HypothesisSet,
    library: &ModelLibrary,
    out: &mut TrainingSet,
) -> Result<()> {
    for class_id in library.class_ids() {
        let truths: Vec<_> = gt.placements.iter().filter(|p| p.class_id == class_id).collect();
        let hyps: Vec<_> = set.for_class(class_id).collect();
        if truths.is_empty() {
            if !hyps.is_empty() {
                out.warnings.push(format!("scene {name}: no instance of class {class_id}, {} hypotheses skipped", hyps.len()));
            }
            continue;
        }
        let model = library.model(class_id)?;
        for h in hyps {
            let target = truths
                .iter()
                .map(|p| adi_distance(&h.pose, &p.pose, model))
                .fold(f64::INFINITY, f64::min);
            out.samples.push(TrainingSample {
                features: h.features.unwrap_or_default(),
                target,
                scene: name.to_string(),
                class_id,
            });
        }
    }
    Ok(())
}

/// Runs hypothesis generation and feature extraction on each scene and
/// labels every hypothesis with its ground-truth ADI.
pub fn build_training_set(
    scenes: &[(String, GroundTruthScene, PredictionMaps)],
    library: &ModelLibrary,
    hypgen: &HypgenConfig,
    features: &FeatureParams,
    seed: u64,
) -> Result<TrainingSet> {
    let mut out = TrainingSet::default();
    for (k, (name, gt, maps)) in scenes.iter().enumerate() {
        let cam = gt.camera();
        let mut set = generate_hypotheses(maps, &gt.depth, cam, library, hypgen, seed.wrapping_add(k as u64))?;
        let evidence = SceneEvidence::new(maps, &gt.depth, cam, features);
        annotate_features(&mut set, library, &evidence)?;
        scene_samples(name, gt, &set, library, &mut out)?;
    }
    Ok(out)
}
