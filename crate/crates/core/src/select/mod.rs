//! Scene-level pose selection: volumetric conflicts between hypotheses and a
//! capacity-constrained maximum-weight independent set, solved exactly by
//! branch and bound or greedily.

mod solver;
mod voxel;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use solver::{solve_brute_force, solve_exact, solve_greedy, Solver};
pub use voxel::{boxes_intersect, pairwise_overlap_volume, ColumnOccupancy, Overlap, COLUMN_SUBDIVISION};

use crate::geometry::{MeshModel, RigidTransform};
use crate::{Error, Result};

/// Capacity value meaning "no limit".
pub const UNLIMITED: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub class_id: u32,
    /// Index of the hypothesis within its class.
    pub index: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionProblem {
    pub hypotheses: Vec<Candidate>,
    /// Maximum number of selected hypotheses per class.
    pub capacities: BTreeMap<u32, usize>,
    /// Unordered conflicting pairs, stored as `(a, b)` with `a < b`.
    pub conflicts: Vec<(usize, usize)>,
}

impl SelectionProblem {
    pub fn new(hypotheses: Vec<Candidate>, capacities: BTreeMap<u32, usize>, conflicts: Vec<(usize, usize)>) -> Result<Self> {
        let mut conflicts: Vec<(usize, usize)> = conflicts.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        conflicts.sort_unstable();
        conflicts.dedup();
        let p = SelectionProblem {
            hypotheses,
            capacities,
            conflicts,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, h) in self.hypotheses.iter().enumerate() {
            if !h.score.is_finite() {
                return Err(Error::InvalidProblem(format!("hypothesis {k} has non-finite score")));
            }
            if !self.capacities.contains_key(&h.class_id) {
                return Err(Error::InvalidProblem(format!("no capacity for class {}", h.class_id)));
            }
        }
        for &(a, b) in &self.conflicts {
            if a == b {
                return Err(Error::InvalidProblem(format!("self-conflict on {a}")));
            }
            if a.max(b) >= self.hypotheses.len() {
                return Err(Error::InvalidProblem(format!("conflict ({a}, {b}) out of range")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// Objective of an indicator vector, summed in index order.
    pub fn objective(&self, chosen: &[bool]) -> f64 {
        self.hypotheses.iter().zip(chosen).filter(|(_, &c)| c).map(|(h, _)| h.score).sum()
    }

    /// Checks capacity and conflict constraints.
    pub fn check_feasible(&self, chosen: &[bool]) -> Result<()> {
        if chosen.len() != self.hypotheses.len() {
            return Err(Error::InfeasibleSelection(format!(
                "{} indicators for {} hypotheses",
                chosen.len(),
                self.hypotheses.len()
            )));
        }
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for (h, _) in self.hypotheses.iter().zip(chosen).filter(|(_, &c)| c) {
            *counts.entry(h.class_id).or_default() += 1;
        }
        for (class, n) in counts {
            let cap = self.capacities.get(&class).copied().unwrap_or(0);
            if n > cap {
                return Err(Error::InfeasibleSelection(format!("class {class}: {n} chosen, capacity {cap}")));
            }
        }
        for &(a, b) in &self.conflicts {
            if chosen[a] && chosen[b] {
                return Err(Error::InfeasibleSelection(format!("conflicting pair ({a}, {b}) both chosen")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: Vec<bool>,
    pub objective: f64,
    /// Search nodes visited (1 for greedy, 2^n for brute force).
    pub nodes: u64,
}

impl Selection {
    pub fn chosen_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.chosen.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i)
    }
}

/// Placed hypothesis used for conflict construction.
#[derive(Clone, Copy, Debug)]
pub struct PlacedHypothesis<'a> {
    pub model: &'a MeshModel,
    pub pose: RigidTransform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConflictParams {
    /// Voxel edge as a fraction of the smallest model diameter involved.
    pub voxel_fraction: f64,
    /// Tolerated overlap as a fraction of the smaller model's volume.
    pub epsilon_fraction: f64,
    /// Skip pairs with disjoint bounding boxes before voxelizing.
    pub broad_phase: bool,
}

impl Default for ConflictParams {
    fn default() -> Self {
        ConflictParams {
            voxel_fraction: 1.0 / 40.0,
            epsilon_fraction: 0.03,
            broad_phase: true,
        }
    }
}

impl ConflictParams {
    pub fn epsilon_v(&self, a: &MeshModel, b: &MeshModel) -> f64 {
        self.epsilon_fraction * a.volume().min(b.volume())
    }
}

/// Pairs whose overlap volume exceeds the tolerance. All shapes share one
/// column lattice derived from the smallest diameter present.
pub fn build_conflicts(placed: &[PlacedHypothesis<'_>], params: &ConflictParams) -> Vec<(usize, usize)> {
    if placed.len() < 2 {
        return Vec::new();
    }
    let d_min = placed.iter().map(|p| p.model.diameter()).fold(f64::INFINITY, f64::min);
    let h = d_min * params.voxel_fraction / COLUMN_SUBDIVISION as f64;
    let bounds: Vec<_> = placed.iter().map(|p| p.model.world_bounds(&p.pose)).collect();
    let shapes: Vec<ColumnOccupancy> = placed.par_iter().map(|p| ColumnOccupancy::new(p.model, &p.pose, h)).collect();
    let n = placed.len();
    let mut out: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|a| {
            let shapes = &shapes;
            let bounds = &bounds;
            ((a + 1)..n).filter_map(move |b| {
                if params.broad_phase && !boxes_intersect(&bounds[a], &bounds[b]) {
                    return None;
                }
                let eps = params.epsilon_v(placed[a].model, placed[b].model);
                (shapes[a].overlap(&shapes[b]) > eps).then_some((a, b))
            })
        })
        .collect();
    out.sort_unstable();
    out
}

/// Final poses grouped per class, in hypothesis order.
pub fn assemble_scene(
    selection: &Selection,
    problem: &SelectionProblem,
    poses: &[RigidTransform],
) -> Result<BTreeMap<u32, Vec<RigidTransform>>> {
    if poses.len() != problem.len() {
        return Err(Error::InvalidProblem(format!(
            "{} poses for {} hypotheses",
            poses.len(),
            problem.len()
        )));
    }
    problem.check_feasible(&selection.chosen)?;
    let mut out: BTreeMap<u32, Vec<RigidTransform>> = BTreeMap::new();
    for i in selection.chosen_indices() {
        out.entry(problem.hypotheses[i].class_id).or_default().push(poses[i]);
    }
    Ok(out)
}
