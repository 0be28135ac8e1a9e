//! Fixtures shared by the benchmarks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scenepose_core::scenegen::{generate_scene, simulate_predictions, ModelEntry, NoiseConfig, Scenario};
use scenepose_core::select::{Candidate, SelectionProblem};
use scenepose_core::{GroundTruthScene, MeshModel, PredictionMaps, SceneSpec};

/// `n` hypotheses in `cliques` groups. Pairs inside a group conflict with
/// probability 0.9, pairs in adjacent groups with probability 0.02.
pub fn clustered_problem(seed: u64, n: usize, cliques: usize) -> SelectionProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group: Vec<usize> = (0..n).map(|i| i * cliques / n).collect();
    let hypotheses = (0..n)
        .map(|index| Candidate {
            class_id: 1 + (group[index] % 3) as u32,
            index,
            score: rng.random::<f64>(),
        })
        .collect();
    let mut conflicts = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = match group[b] - group[a] {
                0 => 0.9,
                1 => 0.02,
                _ => 0.0,
            };
            if rng.random::<f64>() < p {
                conflicts.push((a, b));
            }
        }
    }
    // Each group stands for one object instance, so a class may hold as
    // many poses as it has groups.
    let mut caps: BTreeMap<u32, usize> = BTreeMap::new();
    for g in 0..cliques {
        *caps.entry(1 + (g % 3) as u32).or_default() += 1;
    }
    SelectionProblem::new(hypotheses, caps, conflicts).expect("generated problems are valid")
}

/// Packed bin with 6 to 10 boxes of two classes and default prediction noise.
pub fn packed_scene(seed: u64) -> (GroundTruthScene, PredictionMaps, Vec<MeshModel>) {
    let mut a = ModelEntry::cuboid(1, [0.06, 0.045, 0.03], 3);
    a.count_max = Some(5);
    let mut b = ModelEntry::cuboid(2, [0.05, 0.05, 0.025], 3);
    b.count_max = Some(5);
    let spec = SceneSpec::new(vec![a, b], Scenario::Packed, [0.26, 0.2, 0.1], seed);
    let models = spec.build_models(None).expect("box models build");
    let gt = generate_scene(&spec, &models).expect("packed scene fits");
    let maps = simulate_predictions(&gt, &NoiseConfig::default(), seed);
    (gt, maps, models)
}
