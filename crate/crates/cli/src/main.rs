//! `scenepose`: simulate bin scenes, train the hypothesis scorer, estimate
//! poses and evaluate recall.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use scenepose_core::eval::{
    match_and_recall, read_recall_csv, recall_csv, scores_for, Matching, RecallSummary, SceneRecallRow, ScoreSource,
};
use scenepose_core::hypgen::{HypothesisSet, ModelLibrary};
use scenepose_core::io::{self, list_scene_dirs, read_maps, read_scene, write_atomic, write_json, write_maps, write_scene};
use scenepose_core::pipeline::{hypothesis_conflicts, prepare_scene, select_poses, SelectionReport};
use scenepose_core::scenegen::{generate_scene, simulate_predictions, ModelSource};
use scenepose_core::scoring::{annotate_scores, build_training_set, train_gbrt, TreeEnsemble};
use scenepose_core::select::Solver;
use scenepose_core::{Error, GroundTruthScene, MeshModel, PipelineConfig, PredictionMaps, SceneSpec};

/// Environment variable naming a config file used when `--config` is absent.
const CONFIG_ENV: &str = "SCENEPOSE_CONFIG";

const EXIT_DATA: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "scenepose", version, about = "Multi-instance 6D pose estimation on synthetic bin scenes")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (TOML). Falls back to $SCENEPOSE_CONFIG, then
    /// built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; scene `i` of a batch uses `seed + i`.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground-truth scenes from a scene specification.
    Simulate {
        /// Scene specification (TOML or JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Add simulated semantic and boundary predictions to scene directories.
    PredictSim {
        #[arg(long)]
        scenes: PathBuf,
    },
    /// Generate pose hypotheses with alignment features for every scene.
    Hypgen {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the hypothesis quality regressor on simulated scenes.
    Train {
        #[arg(long)]
        scenes: PathBuf,
        /// Ensemble JSON to write.
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV (default: next to the ensemble).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Scenes whose samples are held out for the log's second column.
        #[arg(long)]
        holdout: Option<PathBuf>,
    },
    /// Select a consistent set of poses per scene.
    Estimate {
        #[arg(long)]
        scenes: PathBuf,
        /// Trained ensemble; required for learned scores.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Selection solver (overrides the config).
        #[arg(long)]
        solver: Option<Solver>,
        /// Hypothesis scoring.
        #[arg(long, default_value = "learned")]
        scores: ScoreSource,
        /// Reuse hypotheses written by `hypgen` instead of regenerating.
        #[arg(long)]
        hypotheses: Option<PathBuf>,
    },
    /// Match estimates against ground truth and write per-scene recall.
    Evaluate {
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        /// Recall CSV to write; a summary JSON is written beside it.
        #[arg(long)]
        out: PathBuf,
        /// Acceptance fraction of the model diameter (overrides the config).
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        matching: Option<Matching>,
    },
    /// Summarize one or more recall CSVs.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// JSON summary to write; the table is always printed.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        k: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Invariant(_) | Error::InfeasibleSelection(_)) => EXIT_INVARIANT,
        _ => EXIT_DATA,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    let config = load_config(cli.global.config.as_deref())?;
    let seed = cli.global.seed;
    match cli.command {
        Command::Simulate { spec, out, count } => simulate(&spec, &out, count, seed),
        Command::PredictSim { scenes } => predict_sim(&scenes, &config, seed),
        Command::Hypgen { scenes, out } => hypgen(&scenes, &out, &config, seed),
        Command::Train {
            scenes,
            out,
            log,
            holdout,
        } => train(&scenes, &out, log, holdout.as_deref(), &config, seed),
        Command::Estimate {
            scenes,
            model,
            out,
            solver,
            scores,
            hypotheses,
        } => {
            let mut config = config;
            if let Some(s) = solver {
                config.solver = s;
            }
            estimate(&scenes, model.as_deref(), &out, scores, hypotheses.as_deref(), &config, seed)
        }
        Command::Evaluate {
            estimates,
            scenes,
            out,
            k,
            matching,
        } => evaluate(&estimates, &scenes, &out, k.unwrap_or(config.k), matching.unwrap_or(config.matching)),
        Command::Report { inputs, out, k } => report(&inputs, out.as_deref(), k.unwrap_or(config.k)),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    let path = path.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    match path {
        Some(p) => Ok(PipelineConfig::load(&p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn read_spec(path: &Path) -> anyhow::Result<SceneSpec> {
    let mut spec: SceneSpec = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => io::read_json(path)?,
        _ => io::read_toml(path)?,
    };
    // Scene records must stay valid wherever they are read from.
    let base = path.parent().unwrap_or(Path::new("."));
    for m in &mut spec.models {
        if let ModelSource::Ply { path, symmetry } = &mut m.source {
            for p in std::iter::once(path).chain(symmetry.as_mut()) {
                if p.is_relative() {
                    *p = std::path::absolute(base.join(&*p)).with_context(|| format!("resolving {}", p.display()))?;
                }
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn scene_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn scene_dirs(root: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let dirs = list_scene_dirs(root)?;
    if dirs.is_empty() {
        bail!("no scene directories under {}", root.display());
    }
    Ok(dirs)
}

struct LoadedScene {
    name: String,
    gt: GroundTruthScene,
    maps: PredictionMaps,
}

fn load_scene(dir: &Path) -> anyhow::Result<LoadedScene> {
    let gt = read_scene(dir)?;
    let maps = read_maps(dir).with_context(|| format!("{} has no predictions; run predict-sim first", dir.display()))?;
    Ok(LoadedScene {
        name: scene_name(dir),
        gt,
        maps,
    })
}

/// Models of the first scene; every scene in a batch must share them.
fn batch_models(scenes: &[LoadedScene]) -> anyhow::Result<Vec<MeshModel>> {
    let first = &scenes[0].gt.spec;
    for s in &scenes[1..] {
        if s.gt.spec.models != first.models {
            bail!("scene {} uses different models than {}", s.name, scenes[0].name);
        }
    }
    Ok(first.build_models(None)?)
}

fn load_batch(root: &Path) -> anyhow::Result<(Vec<LoadedScene>, Vec<MeshModel>)> {
    let scenes: Vec<LoadedScene> = scene_dirs(root)?.iter().map(|d| load_scene(d)).collect::<anyhow::Result<_>>()?;
    let models = batch_models(&scenes)?;
    Ok((scenes, models))
}

fn simulate(spec_path: &Path, out: &Path, count: usize, seed: u64) -> anyhow::Result<()> {
    let spec = read_spec(spec_path)?;
    let models = spec.build_models(None)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    (0..count).into_par_iter().try_for_each(|i| -> anyhow::Result<()> {
        let gt = generate_scene(&spec.with_seed(seed + i as u64), &models)?;
        write_scene(&out.join(format!("scene_{i:04}")), &gt, None)?;
        Ok(())
    })?;
    eprintln!("wrote {count} scenes to {}", out.display());
    Ok(())
}

fn predict_sim(root: &Path, config: &PipelineConfig, seed: u64) -> anyhow::Result<()> {
    let dirs = scene_dirs(root)?;
    dirs.par_iter().enumerate().try_for_each(|(i, dir)| -> anyhow::Result<()> {
        let gt = read_scene(dir)?;
        write_maps(dir, &simulate_predictions(&gt, &config.noise, seed + i as u64))?;
        Ok(())
    })?;
    eprintln!("simulated predictions for {} scenes", dirs.len());
    Ok(())
}

fn hypothesis_path(dir: &Path, scene: &str) -> PathBuf {
    dir.join(format!("{scene}.hypotheses.json"))
}

fn hypgen(root: &Path, out: &Path, config: &PipelineConfig, seed: u64) -> anyhow::Result<()> {
    let (scenes, models) = load_batch(root)?;
    let library = ModelLibrary::new(&models, config.hypgen.model_samples)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    scenes.par_iter().enumerate().try_for_each(|(i, s)| -> anyhow::Result<()> {
        let set = prepare_scene(&s.maps, &s.gt.depth, s.gt.camera(), &library, config, seed + i as u64)?;
        set.write(&hypothesis_path(out, &s.name))?;
        eprintln!("{}: {} hypotheses", s.name, set.len());
        Ok(())
    })
}

fn train(
    root: &Path,
    out: &Path,
    log: Option<PathBuf>,
    holdout: Option<&Path>,
    config: &PipelineConfig,
    seed: u64,
) -> anyhow::Result<()> {
    let (scenes, models) = load_batch(root)?;
    let library = ModelLibrary::new(&models, config.hypgen.model_samples)?;
    let samples = |scenes: Vec<LoadedScene>| {
        let batch: Vec<_> = scenes.into_iter().map(|s| (s.name, s.gt, s.maps)).collect();
        build_training_set(&batch, &library, &config.hypgen, &config.features, seed)
    };
    let set = samples(scenes)?;
    for w in &set.warnings {
        eprintln!("warning: {w}");
    }
    let held = match holdout {
        Some(h) => {
            let (scenes, hmodels) = load_batch(h)?;
            if hmodels.iter().map(MeshModel::class_id).ne(models.iter().map(MeshModel::class_id)) {
                bail!("holdout scenes use different classes");
            }
            Some(samples(scenes)?)
        }
        None => None,
    };
    let (hx, hy) = held.as_ref().map(|h| (h.features(), h.targets())).unzip();
    let (ensemble, training_log) = train_gbrt(
        &set.features(),
        &set.targets(),
        &config.gbrt,
        hx.as_deref().zip(hy.as_deref()),
    )?;
    write_atomic(out, ensemble.to_json()?.as_bytes())?;
    let log = log.unwrap_or_else(|| out.with_extension("log.csv"));
    write_atomic(&log, training_log.to_csv().as_bytes())?;
    eprintln!(
        "trained {} trees on {} samples; final training MSE {:.3e}",
        ensemble.trees.len(),
        set.samples.len(),
        training_log.train_mse.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn estimate_path(dir: &Path, scene: &str) -> PathBuf {
    dir.join(format!("{scene}.json"))
}

fn estimate(
    root: &Path,
    model: Option<&Path>,
    out: &Path,
    source: ScoreSource,
    hypotheses: Option<&Path>,
    config: &PipelineConfig,
    seed: u64,
) -> anyhow::Result<()> {
    let ensemble = match (source, model) {
        (ScoreSource::Learned, None) => bail!("learned scores need --model"),
        (_, Some(p)) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(TreeEnsemble::from_json(&text).map_err(|e| Error::parse(p, e.to_string()))?)
        }
        (_, None) => None,
    };
    let (scenes, models) = load_batch(root)?;
    let library = ModelLibrary::new(&models, config.hypgen.model_samples)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    scenes.par_iter().enumerate().try_for_each(|(i, s)| -> anyhow::Result<()> {
        let mut set = match hypotheses {
            Some(dir) => HypothesisSet::read(&hypothesis_path(dir, &s.name))?,
            None => prepare_scene(&s.maps, &s.gt.depth, s.gt.camera(), &library, config, seed + i as u64)?,
        };
        if let Some(e) = &ensemble {
            annotate_scores(&mut set, &library, e, config.k)?;
        }
        let conflicts = hypothesis_conflicts(&set, &library, config)?;
        let scores = scores_for(source, &set, Some(&s.gt), &models, config.k)?;
        let (_, report) = select_poses(&set, &scores, source, &s.gt.counts(), &conflicts, config.solver)?;
        write_json(&estimate_path(out, &s.name), &report)?;
        eprintln!("{}: {} poses, objective {:.4}", s.name, report.poses.len(), report.objective);
        Ok(())
    })
}

fn evaluate(estimates: &Path, root: &Path, out: &Path, k: f64, matching: Matching) -> anyhow::Result<()> {
    if !(k >= 0.0) {
        bail!("k must be non-negative");
    }
    let dirs = scene_dirs(root)?;
    let mut rows: Vec<SceneRecallRow> = Vec::new();
    let mut models: Option<(SceneSpec, Vec<MeshModel>)> = None;
    for dir in &dirs {
        let name = scene_name(dir);
        let gt = read_scene(dir)?;
        let path = estimate_path(estimates, &name);
        if !path.is_file() {
            bail!("no estimate for scene {name} (expected {})", path.display());
        }
        let report: SelectionReport = io::read_json(&path)?;
        if models.as_ref().is_none_or(|(spec, _)| spec.models != gt.spec.models) {
            models = Some((gt.spec.clone(), gt.spec.build_models(None)?));
        }
        let (_, m) = models.as_ref().expect("set above");
        let r = match_and_recall(&report.estimates(), &gt, m, k, matching)?;
        rows.extend(SceneRecallRow::rows(&name, &r));
    }
    let known: std::collections::BTreeSet<String> = dirs.iter().map(|d| scene_name(d)).collect();
    for entry in std::fs::read_dir(estimates).map_err(|e| Error::io(estimates, e))? {
        let p = entry.map_err(|e| Error::io(estimates, e))?.path();
        if let Some(stem) = p.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".json")) {
            if !stem.ends_with(".hypotheses") && !known.contains(stem) {
                bail!("estimate {} has no matching scene", p.display());
            }
        }
    }
    write_atomic(out, recall_csv(&rows)?.as_bytes())?;
    let summary = RecallSummary::from_rows(&rows, k);
    write_json(&out.with_extension("summary.json"), &summary)?;
    println!(
        "recall {:.4} ({}/{}), visible-only {:.4}, {} scenes, k = {}",
        summary.recall, summary.tp, summary.gt, summary.visible_recall, summary.scenes, k
    );
    Ok(())
}

#[derive(Serialize)]
struct ReportEntry {
    input: PathBuf,
    summary: RecallSummary,
    per_class: BTreeMap<u32, RecallSummary>,
}

fn report(inputs: &[PathBuf], out: Option<&Path>, k: f64) -> anyhow::Result<()> {
    let mut entries = Vec::new();
    for input in inputs {
        let rows = read_recall_csv(input)?;
        if rows.is_empty() {
            return Err(anyhow!(Error::parse(input, "no rows")));
        }
        let mut by_class: BTreeMap<u32, Vec<SceneRecallRow>> = BTreeMap::new();
        for r in &rows {
            by_class.entry(r.class_id).or_default().push(r.clone());
        }
        entries.push(ReportEntry {
            input: input.clone(),
            summary: RecallSummary::from_rows(&rows, k),
            per_class: by_class.iter().map(|(&c, r)| (c, RecallSummary::from_rows(r, k))).collect(),
        });
    }
    println!("{:<40} {:>7} {:>9} {:>9} {:>11}", "input", "scenes", "recall", "visible", "scene mean");
    for e in &entries {
        let s = &e.summary;
        println!(
            "{:<40} {:>7} {:>9.4} {:>9.4} {:>11.4}",
            e.input.display().to_string(),
            s.scenes,
            s.recall,
            s.visible_recall,
            s.mean_scene_recall
        );
    }
    if let Some(out) = out {
        write_json(out, &entries)?;
    }
    Ok(())
}
