//! ADI recall against ground truth, the manual scoring baselines and the
//! ground-truth (oracle) scoring used as a selection upper bound.

use std::collections::BTreeMap;
use std::path::Path;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::geometry::{adi_distance, MeshModel, RigidTransform};
use crate::hypgen::HypothesisSet;
use crate::scenegen::{model_for, GroundTruthScene};
use crate::scoring::{quality_score, AlignmentFeatures};
use crate::{Error, Result};

/// One-to-one assignment of estimates to ground-truth instances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Closest remaining (ground truth, estimate) pair first.
    #[default]
    Greedy,
    /// Maximum number of true positives, then minimum total ADI.
    Hungarian,
}

impl std::str::FromStr for Matching {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Matching::Greedy),
            "hungarian" => Ok(Matching::Hungarian),
            other => Err(format!("unknown matching `{other}` (expected greedy or hungarian)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance_id: u32,
    pub class_id: u32,
    pub visible_pixels: usize,
    /// Index of the matched estimate within its class.
    pub estimate: Option<usize>,
    pub adi: Option<f64>,
    pub true_positive: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassRecall {
    pub class_id: u32,
    pub gt: usize,
    pub tp: usize,
    pub visible_gt: usize,
    pub visible_tp: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub classes: Vec<ClassRecall>,
    pub instances: Vec<InstanceResult>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl RecallReport {
    pub fn gt(&self) -> usize {
        self.classes.iter().map(|c| c.gt).sum()
    }

    pub fn tp(&self) -> usize {
        self.classes.iter().map(|c| c.tp).sum()
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp(), self.gt())
    }

    /// Recall over instances with at least one visible pixel.
    pub fn visible_recall(&self) -> f64 {
        ratio(
            self.classes.iter().map(|c| c.visible_tp).sum(),
            self.classes.iter().map(|c| c.visible_gt).sum(),
        )
    }
}

/// Pairs `(gt, estimate)` by the chosen rule; `adi[g][e]`.
fn assign(adi: &[Vec<f64>], threshold: f64, matching: Matching) -> Vec<Option<usize>> {
    let n_gt = adi.len();
    let n_est = adi.first().map_or(0, Vec::len);
    let mut out = vec![None; n_gt];
    if n_gt == 0 || n_est == 0 {
        return out;
    }
    match matching {
        Matching::Greedy => {
            let mut pairs: Vec<(f64, usize, usize)> =
                (0..n_gt).flat_map(|g| (0..n_est).map(move |e| (adi[g][e], g, e))).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut used = vec![false; n_est];
            for (_, g, e) in pairs {
                if out[g].is_none() && !used[e] {
                    out[g] = Some(e);
                    used[e] = true;
                }
            }
        }
        Matching::Hungarian => {
            // Integer weights: a true positive outweighs any ADI sum.
            const TP: i64 = 1 << 50;
            let weight = |g: usize, e: usize| {
                let d = adi[g][e];
                let nm = (d.min(1e3) * 1e9).round() as i64;
                if d < threshold {
                    TP - nm
                } else {
                    -nm
                }
            };
            if n_gt <= n_est {
                let m = Matrix::from_fn(n_gt, n_est, |(g, e)| weight(g, e));
                let (_, cols) = kuhn_munkres(&m);
                for (g, e) in cols.into_iter().enumerate() {
                    out[g] = Some(e);
                }
            } else {
                let m = Matrix::from_fn(n_est, n_gt, |(e, g)| weight(g, e));
                let (_, cols) = kuhn_munkres(&m);
                for (e, g) in cols.into_iter().enumerate() {
                    out[g] = Some(e);
                }
            }
        }
    }
    out
}

/// Matches estimated poses to ground-truth instances of the same class and
/// counts true positives (`ADI < k·d_l`). Every ground-truth instance is in
/// the denominator; hidden ones are excluded from the visible columns.
pub fn match_and_recall(
    estimates: &BTreeMap<u32, Vec<RigidTransform>>,
    gt: &GroundTruthScene,
    models: &[MeshModel],
    k: f64,
    matching: Matching,
) -> Result<RecallReport> {
    for &class_id in estimates.keys() {
        model_for(models, class_id)?;
    }
    let visible = gt.visible_pixels();
    let mut report = RecallReport::default();
    let empty = Vec::new();
    for &class_id in gt.counts().keys() {
        let model = model_for(models, class_id)?;
        let threshold = k * model.diameter();
        let truths: Vec<_> = gt.placements.iter().filter(|p| p.class_id == class_id).collect();
        let est = estimates.get(&class_id).unwrap_or(&empty);
        let adi: Vec<Vec<f64>> = truths
            .iter()
            .map(|t| est.iter().map(|e| adi_distance(e, &t.pose, model)).collect())
            .collect();
        let assigned = assign(&adi, threshold, matching);
        let mut c = ClassRecall {
            class_id,
            ..Default::default()
        };
        for (g, t) in truths.iter().enumerate() {
            let pixels = visible.get(&t.instance_id).copied().unwrap_or(0);
            let d = assigned[g].map(|e| adi[g][e]);
            let tp = d.is_some_and(|d| d < threshold);
            c.gt += 1;
            c.tp += tp as usize;
            if pixels > 0 {
                c.visible_gt += 1;
                c.visible_tp += tp as usize;
            }
            report.instances.push(InstanceResult {
                instance_id: t.instance_id,
                class_id,
                visible_pixels: pixels,
                estimate: assigned[g],
                adi: d,
                true_positive: tp,
            });
        }
        report.classes.push(c);
    }
    Ok(report)
}

/// `(f3 + f4, f1·f2·f3·(f4 + f5))`.
pub fn manual_objective_baselines(f: &AlignmentFeatures) -> (f64, f64) {
    (f.f3 + f.f4, f.f1 * f.f2 * f.f3 * (f.f4 + f.f5))
}

/// Ground-truth scores `max(0, 1 − ADI/(k·d_l))` against the nearest
/// same-class instance; zero for classes absent from the scene.
pub fn oracle_scores(set: &HypothesisSet, gt: &GroundTruthScene, models: &[MeshModel], k: f64) -> Result<Vec<f64>> {
    set.hypotheses
        .iter()
        .map(|h| {
            let model = model_for(models, h.class_id)?;
            let best = gt
                .placements
                .iter()
                .filter(|p| p.class_id == h.class_id)
                .map(|p| adi_distance(&h.pose, &p.pose, model))
                .fold(f64::INFINITY, f64::min);
            Ok(quality_score(best, k, model.diameter()))
        })
        .collect()
}

/// How hypotheses are scored for selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSource {
    Learned,
    /// `f3 + f4`.
    ManualScene,
    /// `f1·f2·f3·(f4 + f5)`.
    ManualSceneModel,
    Oracle,
}

impl ScoreSource {
    pub const ALL: [ScoreSource; 4] = [
        ScoreSource::Learned,
        ScoreSource::ManualScene,
        ScoreSource::ManualSceneModel,
        ScoreSource::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreSource::Learned => "learned",
            ScoreSource::ManualScene => "manual-scene",
            ScoreSource::ManualSceneModel => "manual-scene-model",
            ScoreSource::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for ScoreSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScoreSource::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown score source `{s}`"))
    }
}

/// Scores for one source; learned scores must already be annotated.
pub fn scores_for(
    source: ScoreSource,
    set: &HypothesisSet,
    gt: Option<&GroundTruthScene>,
    models: &[MeshModel],
    k: f64,
) -> Result<Vec<f64>> {
    let features = |h: &crate::hypgen::PoseHypothesis| {
        h.features
            .ok_or_else(|| Error::Invariant(format!("hypothesis of class {} has no features", h.class_id)))
    };
    match source {
        ScoreSource::Learned => set
            .hypotheses
            .iter()
            .map(|h| h.score.ok_or_else(|| Error::Invariant("hypothesis has no learned score".into())))
            .collect(),
        ScoreSource::ManualScene => set.hypotheses.iter().map(|h| Ok(manual_objective_baselines(&features(h)?).0)).collect(),
        ScoreSource::ManualSceneModel => set.hypotheses.iter().map(|h| Ok(manual_objective_baselines(&features(h)?).1)).collect(),
        ScoreSource::Oracle => {
            let gt = gt.ok_or_else(|| Error::Invariant("oracle scores need ground truth".into()))?;
            oracle_scores(set, gt, models, k)
        }
    }
}

/// One CSV row per (scene, class).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecallRow {
    pub scene: String,
    pub class_id: u32,
    pub gt: usize,
    pub tp: usize,
    pub recall: f64,
    pub visible_gt: usize,
    pub visible_tp: usize,
    pub visible_recall: f64,
}

impl SceneRecallRow {
    pub fn rows(scene: &str, report: &RecallReport) -> Vec<SceneRecallRow> {
        report
            .classes
            .iter()
            .map(|c| SceneRecallRow {
                scene: scene.to_string(),
                class_id: c.class_id,
                gt: c.gt,
                tp: c.tp,
                recall: ratio(c.tp, c.gt),
                visible_gt: c.visible_gt,
                visible_tp: c.visible_tp,
                visible_recall: ratio(c.visible_tp, c.visible_gt),
            })
            .collect()
    }
}

pub fn recall_csv(rows: &[SceneRecallRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Invariant(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invariant(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_recall_csv(path: &Path) -> Result<Vec<SceneRecallRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    r.deserialize().map(|row| row.map_err(|e| Error::parse(path, e.to_string()))).collect()
}

/// Batch totals: recall is ΣTP / ΣGT over all rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecallSummary {
    pub scenes: usize,
    pub gt: usize,
    pub tp: usize,
    pub recall: f64,
    pub visible_gt: usize,
    pub visible_tp: usize,
    pub visible_recall: f64,
    /// Unweighted mean of per-scene recall.
    pub mean_scene_recall: f64,
    pub k: f64,
}

impl RecallSummary {
    pub fn from_rows(rows: &[SceneRecallRow], k: f64) -> Self {
        let mut per_scene: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for r in rows {
            let e = per_scene.entry(&r.scene).or_default();
            e.0 += r.tp;
            e.1 += r.gt;
        }
        let gt = rows.iter().map(|r| r.gt).sum();
        let tp = rows.iter().map(|r| r.tp).sum();
        let visible_gt = rows.iter().map(|r| r.visible_gt).sum();
        let visible_tp = rows.iter().map(|r| r.visible_tp).sum();
        let mean_scene_recall = if per_scene.is_empty() {
            0.0
        } else {
            per_scene.values().map(|&(t, g)| ratio(t, g)).sum::<f64>() / per_scene.len() as f64
        };
        RecallSummary {
            scenes: per_scene.len(),
            gt,
            tp,
            recall: ratio(tp, gt),
            visible_gt,
            visible_tp,
            visible_recall: ratio(visible_tp, visible_gt),
            mean_scene_recall,
            k,
        }
    }
}
