use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scenepose_core::eval::{read_recall_csv, RecallSummary};
use scenepose_core::io::{list_scene_dirs, read_json, read_scene};
use scenepose_core::pipeline::{SelectedPose, SelectionReport};
use scenepose_core::scenegen::render_placements;
use scenepose_core::scoring::TreeEnsemble;
use scenepose_core::select::Solver;
use scenepose_core::eval::ScoreSource;
use tempfile::TempDir;

const SPEC: &str = r#"
scenario = "packed"
bin_extent = [0.09, 0.09, 0.1]

[[models]]
name = "cube"
class_id = 1
kind = "box"
dims = [0.04, 0.04, 0.04]
count = 4
"#;

const CONFIG: &str = r#"
[noise]
semantic_smoothing = 0.0
semantic_logit_sigma = 0.0
boundary_dilation = 0
speckle_rate = 0.0
dropout_rate = 0.0

[hypgen]
bases_per_class = 15
max_hypotheses = 25
model_samples = 200

[gbrt]
n_trees = 12
"#;

fn scenepose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenepose"))
        .args(args)
        .env_remove("SCENEPOSE_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = scenepose(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        std::fs::write(dir.path().join("spec.toml"), SPEC).unwrap();
        std::fs::write(dir.path().join("config.toml"), CONFIG).unwrap();
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Simulated scenes with predictions under `name`.
    fn scenes(&self, name: &str, count: usize, seed: u64) -> PathBuf {
        let out = self.path(name);
        let (spec, config) = (self.path("spec.toml"), self.path("config.toml"));
        let seed = seed.to_string();
        let count = count.to_string();
        ok(&["simulate", "--spec", s(&spec), "--out", s(&out), "--count", &count, "--seed", &seed]);
        ok(&["predict-sim", "--scenes", s(&out), "--seed", &seed, "--config", s(&config)]);
        out
    }

    fn train(&self, scenes: &Path, out: &str) -> PathBuf {
        let model = self.path(out);
        ok(&["train", "--scenes", s(scenes), "--out", s(&model), "--config", s(&self.path("config.toml")), "--seed", "5"]);
        model
    }
}

#[test]
fn simulate_writes_complete_deterministic_scenes() {
    let w = Workspace::new();
    let a = w.scenes("a", 1, 9);
    let b = w.scenes("b", 1, 9);
    let dirs = list_scene_dirs(&a).unwrap();
    assert_eq!(dirs.len(), 1);
    for f in ["scene.json", "depth.pgm", "class_labels.pgm", "instance_labels.pgm", "boundary.pgm", "semantic.bin", "boundary_prob.bin"] {
        assert!(dirs[0].join(f).is_file(), "missing {f}");
    }
    for f in ["scene.json", "depth.pgm", "semantic.bin"] {
        let x = std::fs::read(a.join("scene_0000").join(f)).unwrap();
        let y = std::fs::read(b.join("scene_0000").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between identical runs");
    }
}

#[test]
fn batch_scenes_use_consecutive_seeds_and_are_valid() {
    let w = Workspace::new();
    let root = w.scenes("batch", 4, 100);
    let dirs = list_scene_dirs(&root).unwrap();
    assert_eq!(dirs.len(), 4);
    let mut placements = Vec::new();
    for (i, d) in dirs.iter().enumerate() {
        let gt = read_scene(d).unwrap();
        assert_eq!(gt.spec.seed, 100 + i as u64);
        assert_eq!(gt.placements.len(), 4);
        // Stored images agree with a fresh render of the stored placements.
        let models = gt.spec.build_models(None).unwrap();
        let r = render_placements(&models, &gt.placements, gt.camera(), gt.spec.floor_depth).unwrap();
        assert_eq!(r.instance_labels.data, gt.instance_labels.data);
        assert_eq!(r.boundary.data, gt.boundary.data);
        placements.push(gt.placements);
    }
    placements.dedup();
    assert_eq!(placements.len(), 4);
}

#[test]
fn train_estimate_evaluate_roundtrip() {
    let w = Workspace::new();
    let config = w.path("config.toml");
    let train = w.scenes("train", 2, 1);
    let model = w.train(&train, "model.json");
    let again = w.train(&train, "model2.json");
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());
    let ensemble = TreeEnsemble::from_json(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(ensemble.trees.len(), 12);
    let log = std::fs::read_to_string(model.with_extension("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 12);

    let test = w.scenes("test", 2, 50);
    let mut objectives = Vec::new();
    for solver in ["exact", "greedy"] {
        let out = w.path(&format!("est_{solver}"));
        ok(&[
            "estimate", "--scenes", s(&test), "--model", s(&model), "--out", s(&out), "--solver", solver, "--config", s(&config), "--seed", "50",
        ]);
        let mut per_scene = Vec::new();
        for d in list_scene_dirs(&test).unwrap() {
            let gt = read_scene(&d).unwrap();
            let name = d.file_name().unwrap().to_str().unwrap();
            let rep: SelectionReport = read_json(&out.join(format!("{name}.json"))).unwrap();
            assert_eq!(rep.solver, solver.parse::<Solver>().unwrap());
            assert!(rep.poses.len() <= gt.placements.len());
            let sum: f64 = rep.poses.iter().map(|p| p.score).sum();
            assert!((sum - rep.objective).abs() < 1e-9);
            per_scene.push(rep.objective);
        }
        objectives.push(per_scene);
    }
    for (e, g) in objectives[0].iter().zip(&objectives[1]) {
        assert!(g <= &(e + 1e-12), "greedy {g} above exact {e}");
    }

    let csv = w.path("recall.csv");
    ok(&["evaluate", "--estimates", s(&w.path("est_exact")), "--scenes", s(&test), "--out", s(&csv)]);
    let rows = read_recall_csv(&csv).unwrap();
    let summary: RecallSummary = read_json(&csv.with_extension("summary.json")).unwrap();
    let tp: usize = rows.iter().map(|r| r.tp).sum();
    let gt: usize = rows.iter().map(|r| r.gt).sum();
    assert_eq!(gt, 8);
    assert_eq!(summary.recall, tp as f64 / gt as f64);

    let report = w.path("report.json");
    let out = ok(&["report", s(&csv), "--out", s(&report)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("recall"));
    assert!(report.is_file());
}

/// Estimates equal to the ground-truth placements.
fn write_perfect_estimates(scenes: &Path, out: &Path) {
    std::fs::create_dir_all(out).unwrap();
    for d in list_scene_dirs(scenes).unwrap() {
        let gt = read_scene(&d).unwrap();
        let report = SelectionReport {
            solver: Solver::Exact,
            scores: ScoreSource::Oracle,
            objective: gt.placements.len() as f64,
            nodes: 1,
            wall_time_ms: 0.0,
            hypotheses: gt.placements.len(),
            conflicts: 0,
            poses: gt
                .placements
                .iter()
                .enumerate()
                .map(|(i, p)| SelectedPose {
                    class_id: p.class_id,
                    hypothesis: i,
                    pose: p.pose,
                    score: 1.0,
                    predicted_adi: None,
                })
                .collect(),
        };
        let name = d.file_name().unwrap().to_str().unwrap().to_string();
        std::fs::write(out.join(format!("{name}.json")), serde_json::to_string(&report).unwrap()).unwrap();
    }
}

#[test]
fn perfect_estimates_have_full_recall_and_zero_k_has_none() {
    let w = Workspace::new();
    let scenes = w.scenes("scenes", 2, 3);
    let est = w.path("perfect");
    write_perfect_estimates(&scenes, &est);
    let csv = w.path("r.csv");
    ok(&["evaluate", "--estimates", s(&est), "--scenes", s(&scenes), "--out", s(&csv)]);
    let summary: RecallSummary = read_json(&csv.with_extension("summary.json")).unwrap();
    assert_eq!(summary.recall, 1.0);
    ok(&["evaluate", "--estimates", s(&est), "--scenes", s(&scenes), "--out", s(&csv), "--k", "0"]);
    let summary: RecallSummary = read_json(&csv.with_extension("summary.json")).unwrap();
    assert_eq!(summary.recall, 0.0);
}

#[test]
fn exit_codes_distinguish_usage_and_data_errors() {
    assert_eq!(scenepose(&["estimate", "--bogus"]).status.code(), Some(2));
    assert_eq!(scenepose(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(scenepose(&["estimate", "--scenes", "x", "--out", "y", "--solver", "fast"]).status.code(), Some(2));

    let w = Workspace::new();
    let scenes = w.scenes("scenes", 1, 0);
    let out = w.path("est");
    let missing_model = scenepose(&["estimate", "--scenes", s(&scenes), "--out", s(&out)]);
    assert_eq!(missing_model.status.code(), Some(3));
    let bad_config = w.path("bad.toml");
    std::fs::write(&bad_config, "gama = 1.0\n").unwrap();
    assert_eq!(scenepose(&["predict-sim", "--scenes", s(&scenes), "--config", s(&bad_config)]).status.code(), Some(3));

    // An estimate without a scene is an id mismatch.
    let est = w.path("perfect");
    write_perfect_estimates(&scenes, &est);
    std::fs::write(est.join("scene_9999.json"), std::fs::read(est.join("scene_0000.json")).unwrap()).unwrap();
    let r = scenepose(&["evaluate", "--estimates", s(&est), "--scenes", s(&scenes), "--out", s(&w.path("r.csv"))]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn config_can_come_from_the_environment() {
    let w = Workspace::new();
    let bad = w.path("bad.toml");
    std::fs::write(&bad, "unknown = 1\n").unwrap();
    let scenes = w.scenes("scenes", 1, 0);
    let status = Command::new(env!("CARGO_BIN_EXE_scenepose"))
        .args(["predict-sim", "--scenes", s(&scenes)])
        .env("SCENEPOSE_CONFIG", &bad)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(3));
}
