//! Dataset-level stages and the end-to-end run.
//!
//! Every stage is a pure function of its inputs and seeds: parallel work
//! is collected in index order and reduced sequentially, so the files it
//! writes do not depend on the worker count. Timings are never written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::ambiguity::{AmbiguityAccumulator, AmbiguityReport};
use crate::compiler::{compile_scene, CompileError, EconomicSceneLabels, Graspability};
use crate::config::{ConfigError, PipelineConfig};
use crate::dataset::{
    dense_files, economic_file, list_scenes, load_dense, load_scene, object_file, scene_name,
    DatasetError, SceneRecord,
};
use crate::eval::{ap, format_prediction, parse_predictions, EvalError, EvalResult, TopKRule};
use crate::geometry::{GeometryError, GraspPose, GripperModel, ViewSphere};
use crate::head::gradcheck::{self, CheckResult};
use crate::head::{
    predict_grasps, train, FeatureCloud, HeadConfig, HeadError, HeadParams, LossWeights,
    TrainScene, TrainingLog,
};
use crate::label_store::{
    dense_len, economic_len, read_dense, read_economic, size_report, write_dense, write_economic,
    StoreError, DENSE_HEADER_LEN, ECONOMIC_HEADER_LEN,
};
use crate::matching::{
    make_bundle, sample_points, summarize, MatchError, MatchSummary, SampleStrategy,
};
use crate::synth::{label_object, random_scene, SceneConfig, SceneDescription, SynthError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no scenes in {0}")]
    NoScenes(PathBuf),
    #[error("{0} scenes failed to compile")]
    SceneFailures(usize),
    #[error("predictions name unknown scene `{0}`")]
    UnknownScene(String),
    #[error("{0} exists and is not a pipeline output directory")]
    ForeignOutput(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Seed of scene `index` in a dataset generated from `seed`.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthStats {
    pub scenes: usize,
    pub objects: usize,
    pub points: usize,
    pub dense_bytes: u64,
}

impl SynthStats {
    pub fn to_key_values(&self) -> String {
        format!(
            "scenes={}\nobjects={}\npoints={}\ndense_bytes={}\n",
            self.scenes, self.objects, self.points, self.dense_bytes
        )
    }
}

/// Generates and densely labels `scenes` random scenes into `out`.
pub fn synth_dataset(
    scene_cfg: &SceneConfig,
    scenes: usize,
    seed: u64,
    sphere: &ViewSphere,
    gripper: &GripperModel,
    out: &Path,
) -> Result<SynthStats, PipelineError> {
    create_dir(out)?;
    let per_scene = (0..scenes)
        .into_par_iter()
        .map(|i| -> Result<(usize, usize, u64), PipelineError> {
            let scene = random_scene(scene_cfg, scene_seed(seed, i))?;
            let dir = out.join(scene_name(i));
            create_dir(&dir)?;
            write_file(
                &dir.join("scene.txt"),
                SceneRecord::of(&scene, scene_cfg.tolerance).to_text(),
            )?;
            let mut bytes = 0;
            for (o, placed) in scene.objects.iter().enumerate() {
                let labels = label_object(&placed.object, sphere, gripper)?;
                write_dense(&object_file(&dir, o), &labels)?;
                bytes += fs::metadata(object_file(&dir, o))
                    .map_err(io_err(&object_file(&dir, o)))?
                    .len();
            }
            Ok((scene.objects.len(), scene.points.len(), bytes))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SynthStats {
        scenes,
        objects: per_scene.iter().map(|s| s.0).sum(),
        points: per_scene.iter().map(|s| s.1).sum(),
        dense_bytes: per_scene.iter().map(|s| s.2).sum(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileStats {
    /// Scenes compiled without error.
    pub scenes: usize,
    pub points_total: usize,
    pub points_kept: usize,
    pub kept_point_fraction: f64,
    pub dense_bytes: u64,
    pub economic_bytes: u64,
    /// Measured `dense_bytes / economic_bytes`.
    pub size_ratio: f64,
    /// Dense over economic bytes per point divided by the kept fraction;
    /// headers are ignored.
    pub formula_ratio: f64,
    pub threshold_mu: f64,
    /// `(scene, message)` for every scene that failed.
    pub errors: Vec<(String, String)>,
}

/// Dense and economic payload bytes per labeled point.
pub fn bytes_per_point(n_views: usize, n_angles: usize, n_depths: usize) -> (u64, u64) {
    let (v, a, d) = (n_views as u64, n_angles as u64, n_depths as u64);
    (
        dense_len(1, v, a, d).unwrap_or(u64::MAX) - DENSE_HEADER_LEN,
        economic_len(1, v).unwrap_or(u64::MAX) - ECONOMIC_HEADER_LEN,
    )
}

impl CompileStats {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        writeln!(s, "scenes={}", self.scenes).unwrap();
        writeln!(s, "failed_scenes={}", self.errors.len()).unwrap();
        writeln!(s, "threshold_mu={:?}", self.threshold_mu).unwrap();
        writeln!(s, "points_total={}", self.points_total).unwrap();
        writeln!(s, "points_kept={}", self.points_kept).unwrap();
        writeln!(s, "kept_point_fraction={:?}", self.kept_point_fraction).unwrap();
        writeln!(s, "dense_bytes={}", self.dense_bytes).unwrap();
        writeln!(s, "economic_bytes={}", self.economic_bytes).unwrap();
        writeln!(s, "size_ratio={:?}", self.size_ratio).unwrap();
        writeln!(s, "formula_ratio={:?}", self.formula_ratio).unwrap();
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "scenes compiled   {}", self.scenes).unwrap();
        writeln!(
            s,
            "points kept       {} / {} ({:.4})",
            self.points_kept, self.points_total, self.kept_point_fraction
        )
        .unwrap();
        writeln!(s, "dense bytes       {}", self.dense_bytes).unwrap();
        writeln!(s, "economic bytes    {}", self.economic_bytes).unwrap();
        writeln!(s, "size ratio        {:.3}", self.size_ratio).unwrap();
        writeln!(s, "formula ratio     {:.3}", self.formula_ratio).unwrap();
        for (scene, msg) in &self.errors {
            writeln!(s, "error {scene}: {msg}").unwrap();
        }
        s
    }
}

struct CompiledScene {
    total: usize,
    kept: usize,
    dense: Vec<PathBuf>,
    economic: PathBuf,
    shape: (usize, usize),
}

fn compile_one(
    dir: &Path,
    name: &str,
    output: &Path,
    sphere: &ViewSphere,
    gripper: &GripperModel,
    rule: &Graspability,
) -> Result<CompiledScene, PipelineError> {
    let scene = load_scene(dir)?;
    let dense = load_dense(dir, scene.objects.len())?;
    let labels = compile_scene(&scene, &dense, sphere, gripper, rule)?;
    let economic = economic_file(output, name);
    write_economic(&economic, &labels)?;
    let shape = dense
        .first()
        .map_or((gripper.angle_count, gripper.depth_grid.len()), |d| {
            (d.n_angles, d.n_depths)
        });
    Ok(CompiledScene {
        total: scene.points.len(),
        kept: labels.len(),
        dense: dense_files(dir)?,
        economic,
        shape,
    })
}

/// Compiles every scene of a dense dataset into `output`. A failing scene
/// is recorded in [`CompileStats::errors`] and the others continue.
pub fn compile_dataset(
    input: &Path,
    output: &Path,
    sphere: &ViewSphere,
    gripper: &GripperModel,
    rule: &Graspability,
) -> Result<CompileStats, PipelineError> {
    let scenes = list_scenes(input)?;
    if scenes.is_empty() {
        return Err(PipelineError::NoScenes(input.to_path_buf()));
    }
    create_dir(output)?;
    let results: Vec<_> = scenes
        .par_iter()
        .map(|(name, dir)| compile_one(dir, name, output, sphere, gripper, rule))
        .collect();
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for ((name, _), r) in scenes.iter().zip(results) {
        match r {
            Ok(c) => ok.push(c),
            Err(e) => errors.push((name.clone(), e.to_string())),
        }
    }
    let dense: Vec<PathBuf> = ok.iter().flat_map(|c| c.dense.iter().cloned()).collect();
    let economic: Vec<PathBuf> = ok.iter().map(|c| c.economic.clone()).collect();
    let sizes = size_report(&dense, &economic)?;
    let points_total: usize = ok.iter().map(|c| c.total).sum();
    let points_kept: usize = ok.iter().map(|c| c.kept).sum();
    let kept_point_fraction = if points_total == 0 {
        0.0
    } else {
        points_kept as f64 / points_total as f64
    };
    let (a, d) = ok.first().map_or((0, 0), |c| c.shape);
    let (dense_pp, economic_pp) = bytes_per_point(sphere.n_views(), a, d);
    Ok(CompileStats {
        scenes: ok.len(),
        points_total,
        points_kept,
        kept_point_fraction,
        dense_bytes: sizes.dense_bytes,
        economic_bytes: sizes.economic_bytes,
        size_ratio: sizes.ratio,
        formula_ratio: dense_pp as f64 / economic_pp as f64 / kept_point_fraction,
        threshold_mu: rule.threshold_mu,
        errors,
    })
}

/// Ambiguity statistics over every dense label file of a dataset.
pub fn analyze_dataset(
    input: &Path,
    gripper: &GripperModel,
    rule: &Graspability,
) -> Result<AmbiguityReport, PipelineError> {
    let scenes = list_scenes(input)?;
    if scenes.is_empty() {
        return Err(PipelineError::NoScenes(input.to_path_buf()));
    }
    let mut acc = AmbiguityAccumulator::default();
    for (_, dir) in &scenes {
        for f in dense_files(dir)? {
            acc.add_dense(&read_dense(&f)?, gripper, rule);
        }
    }
    Ok(acc.finish(rule.threshold_mu))
}

/// Economic label files of a directory, sorted by name.
pub fn economic_files(dir: &Path) -> Result<Vec<(String, PathBuf)>, PipelineError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|x| x == "egl") {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            out.push((stem, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Ambiguity statistics of a compiled dataset.
pub fn analyze_economic(
    dir: &Path,
    gripper: &GripperModel,
    rule: &Graspability,
) -> Result<AmbiguityReport, PipelineError> {
    let mut acc = AmbiguityAccumulator::default();
    for (_, f) in economic_files(dir)? {
        acc.add_economic(&read_economic(&f)?, gripper, rule);
    }
    Ok(acc.finish(rule.threshold_mu))
}

/// How input points are drawn from each scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub count: usize,
    pub strategy: SampleStrategy,
    pub seed: u64,
}

impl Sampling {
    fn rows(&self, scene: &SceneDescription, index: usize) -> Result<Vec<usize>, MatchError> {
        sample_points(
            &scene.points,
            self.count,
            scene_seed(self.seed, index),
            self.strategy,
        )
    }
}

/// One dense-dataset scene with its compiled labels.
pub struct LabeledScene {
    pub name: String,
    pub scene: SceneDescription,
    pub labels: EconomicSceneLabels,
}

pub fn load_labeled(
    dense_dir: &Path,
    economic_dir: &Path,
) -> Result<Vec<LabeledScene>, PipelineError> {
    let scenes = list_scenes(dense_dir)?;
    if scenes.is_empty() {
        return Err(PipelineError::NoScenes(dense_dir.to_path_buf()));
    }
    scenes
        .into_iter()
        .map(|(name, dir)| {
            Ok(LabeledScene {
                scene: load_scene(&dir)?,
                labels: read_economic(&economic_file(economic_dir, &name))?,
                name,
            })
        })
        .collect()
}

fn train_scene(
    s: &LabeledScene,
    index: usize,
    sampling: &Sampling,
    radius: f64,
) -> Result<TrainScene, PipelineError> {
    let rows = sampling.rows(&s.scene, index)?;
    let sampled: Vec<_> = rows.iter().map(|&i| s.scene.points[i]).collect();
    Ok(TrainScene {
        points: s.scene.points.clone(),
        normals: s.scene.normals.clone(),
        bundle: make_bundle(&sampled, &s.labels, radius)?,
        rows,
    })
}

/// Match summaries of every scene, in order.
pub fn match_dataset(
    scenes: &[LabeledScene],
    sampling: &Sampling,
    radius: f64,
    bins: usize,
) -> Result<Vec<MatchSummary>, PipelineError> {
    scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = train_scene(s, i, sampling, radius)?;
            Ok(summarize(&t.bundle, &s.labels, radius, bins))
        })
        .collect()
}

pub fn match_report(names: &[String], summaries: &[MatchSummary]) -> String {
    let mut s = String::new();
    let (mut sampled, mut supervised) = (0, 0);
    for (name, m) in names.iter().zip(summaries) {
        let hist: Vec<String> = m.histogram.iter().map(|h| h.to_string()).collect();
        writeln!(
            s,
            "{name} sampled={} supervised={} masked_fraction={:?} histogram={}",
            m.sampled,
            m.supervised,
            m.masked_fraction,
            hist.join(",")
        )
        .unwrap();
        sampled += m.sampled;
        supervised += m.supervised;
    }
    let masked = if sampled == 0 {
        0.0
    } else {
        1.0 - supervised as f64 / sampled as f64
    };
    writeln!(
        s,
        "total sampled={sampled} supervised={supervised} masked_fraction={masked:?}"
    )
    .unwrap();
    s
}

/// Head size used by the gradient checks: small enough that finite
/// differences over every parameter stay fast.
pub fn gradcheck_config(n_angles: usize, n_depths: usize) -> HeadConfig {
    HeadConfig {
        feature_dim: 8,
        n_views: 60,
        n_angles,
        n_depths,
        ..HeadConfig::default()
    }
}

/// The gradient-check suite over seeds `seed..seed + count`.
pub fn gradient_checks(
    cfg: &HeadConfig,
    seed: u64,
    count: usize,
) -> Result<Vec<CheckResult>, PipelineError> {
    let sphere = ViewSphere::generate(cfg.n_views)?;
    let seeds: Vec<u64> = (0..count as u64).map(|k| seed.wrapping_add(k)).collect();
    Ok(gradcheck::suite(cfg, &sphere, &seeds)?)
}

/// Worst relative error per checked operation, in first-seen order.
pub fn worst_by_op(checks: &[CheckResult]) -> Vec<(&'static str, f64, usize)> {
    let mut out: Vec<(&'static str, f64, usize)> = Vec::new();
    for c in checks {
        match out.iter_mut().find(|(op, _, _)| *op == c.op) {
            Some(e) => {
                e.1 = e.1.max(c.worst());
                e.2 += 1;
            }
            None => out.push((c.op, c.worst(), 1)),
        }
    }
    out
}

pub fn gradcheck_report(checks: &[CheckResult]) -> String {
    let mut s = String::new();
    for (op, worst, seeds) in worst_by_op(checks) {
        let verdict = if worst <= gradcheck::TOLERANCE {
            "PASS"
        } else {
            "FAIL"
        };
        writeln!(
            s,
            "gradcheck {op:<16} seeds={seeds} worst_rel_error={worst:.3e} {verdict}"
        )
        .unwrap();
    }
    s
}

/// Trains a fresh head on `scenes`.
#[allow(clippy::too_many_arguments)]
pub fn train_head(
    scenes: &[LabeledScene],
    sampling: &Sampling,
    radius: f64,
    head: &HeadConfig,
    sphere: &ViewSphere,
    steps: usize,
    rate: f64,
    seed: u64,
) -> Result<(TrainingLog, HeadParams), PipelineError> {
    let batch = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| train_scene(s, i, sampling, radius))
        .collect::<Result<Vec<_>, _>>()?;
    let mut params = HeadParams::init(head, seed);
    let log = train(
        &batch,
        &mut params,
        sphere,
        head,
        &LossWeights::default(),
        steps,
        rate,
    )?;
    Ok((log, params))
}

/// Predicted grasps at the sampled points of one scene.
pub fn predict_scene(
    scene: &SceneDescription,
    rows: &[usize],
    params: &HeadParams,
    sphere: &ViewSphere,
    head: &HeadConfig,
    gripper: &GripperModel,
) -> Result<Vec<GraspPose>, PipelineError> {
    let fc = FeatureCloud::lift(&scene.points, &scene.normals, params);
    Ok(predict_grasps(&fc, rows, params, sphere, head, gripper)?)
}

/// Evaluates per-scene predictions; scenes without predictions score 0.
pub fn eval_scenes(
    scenes: &[(String, SceneDescription)],
    mut predictions: BTreeMap<String, Vec<GraspPose>>,
    sphere: &ViewSphere,
    gripper: &GripperModel,
    rule: TopKRule,
) -> Result<EvalResult, PipelineError> {
    let lists: Vec<Vec<GraspPose>> = scenes
        .iter()
        .map(|(name, _)| predictions.remove(name).unwrap_or_default())
        .collect();
    if let Some(name) = predictions.keys().next() {
        return Err(PipelineError::UnknownScene(name.clone()));
    }
    let descs: Vec<SceneDescription> = scenes.iter().map(|(_, s)| s.clone()).collect();
    Ok(ap(&lists, &descs, sphere, gripper, rule)?)
}

/// Evaluates a predictions file against every scene of a dense dataset.
pub fn eval_dataset(
    scenes_dir: &Path,
    predictions: &str,
    sphere: &ViewSphere,
    gripper: &GripperModel,
    rule: TopKRule,
) -> Result<EvalResult, PipelineError> {
    let scenes = list_scenes(scenes_dir)?
        .into_iter()
        .map(|(name, dir)| Ok((name, load_scene(&dir)?)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    if scenes.is_empty() {
        return Err(PipelineError::NoScenes(scenes_dir.to_path_buf()));
    }
    eval_scenes(
        &scenes,
        parse_predictions(predictions)?,
        sphere,
        gripper,
        rule,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validate,
    Synth,
    Compile,
    Analyze,
    Match,
    HeadCheck,
    Eval,
    Summary,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Validate => "validate",
            Self::Synth => "synth",
            Self::Compile => "compile",
            Self::Analyze => "analyze",
            Self::Match => "match",
            Self::HeadCheck => "head-check",
            Self::Eval => "eval",
            Self::Summary => "summary",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {cause}")]
pub struct StageError {
    pub stage: Stage,
    pub cause: PipelineError,
}

trait Tag<T> {
    fn tag(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: Into<PipelineError>> Tag<T> for Result<T, E> {
    fn tag(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError {
            stage,
            cause: e.into(),
        })
    }
}

/// Name of the marker file present while a run is unfinished or failed.
pub const INCOMPLETE: &str = "INCOMPLETE";

/// Files a run writes directly into its output directory.
pub const ARTIFACTS: &[&str] = &[
    "config.txt",
    "compile.txt",
    "analysis.txt",
    "match.txt",
    "head_check.txt",
    "predictions.txt",
    "eval.txt",
    "summary.txt",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub synth: SynthStats,
    pub compile: CompileStats,
    pub dense_ambiguity: AmbiguityReport,
    pub economic_ambiguity: AmbiguityReport,
    pub masked_fraction: f64,
    pub gradient_checks: Vec<CheckResult>,
    pub training: TrainingLog,
    pub eval: EvalResult,
    /// Scenes evaluated, after the training split.
    pub eval_scenes: Vec<String>,
}

impl RunSummary {
    pub fn gradients_pass(&self) -> bool {
        self.gradient_checks.iter().all(CheckResult::passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[synth]\n");
        s.push_str(&self.synth.to_key_values());
        s.push_str("[compile]\n");
        s.push_str(&self.compile.to_key_values());
        s.push_str("[ambiguity.dense]\n");
        s.push_str(&self.dense_ambiguity.to_key_values());
        s.push_str("[ambiguity.economic]\n");
        s.push_str(&self.economic_ambiguity.to_key_values());
        s.push_str("[match]\n");
        writeln!(s, "masked_fraction={:?}", self.masked_fraction).unwrap();
        s.push_str("[head-check]\n");
        for (op, worst, seeds) in worst_by_op(&self.gradient_checks) {
            writeln!(s, "{op}.seeds={seeds}").unwrap();
            writeln!(s, "{op}.worst_rel_error={worst:?}").unwrap();
        }
        writeln!(s, "gradients_pass={}", self.gradients_pass()).unwrap();
        writeln!(s, "initial_loss={:?}", self.training.initial_loss.total).unwrap();
        writeln!(s, "final_loss={:?}", self.training.final_loss.total).unwrap();
        s.push_str("[eval]\n");
        s.push_str(&self.eval.to_key_values());
        s
    }
}

/// Clears a previous run's outputs, or refuses a directory that holds
/// anything else.
fn prepare_output(out: &Path) -> Result<(), PipelineError> {
    if out.exists() {
        let ours = out.join("config.txt").is_file();
        let empty = fs::read_dir(out).map_err(io_err(out))?.next().is_none();
        if !ours && !empty {
            return Err(PipelineError::ForeignOutput(out.to_path_buf()));
        }
        for dir in ["dense", "economic"] {
            let p = out.join(dir);
            if p.exists() {
                fs::remove_dir_all(&p).map_err(io_err(&p))?;
            }
        }
        for f in ARTIFACTS {
            let p = out.join(f);
            if p.exists() {
                fs::remove_file(&p).map_err(io_err(&p))?;
            }
        }
    }
    create_dir(out)
}

fn mark(out: &Path, stage: Stage) -> Result<(), StageError> {
    write_file(&out.join(INCOMPLETE), format!("stage={stage}\n")).tag(stage)
}

/// Runs synth, compile, analyze, match, head-check and eval in order into
/// `config.output`. While a stage runs, `INCOMPLETE` names it; the marker
/// is removed only after the summary is written.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, StageError> {
    cfg.validate().tag(Stage::Validate)?;
    let out = &cfg.output;
    prepare_output(out).tag(Stage::Validate)?;
    mark(out, Stage::Validate)?;
    let echo = cfg.echo();
    let report = |name: &str, body: &str, stage: Stage| {
        write_file(&out.join(name), format!("{echo}{body}")).tag(stage)
    };
    write_file(&out.join("config.txt"), cfg.to_text()).tag(Stage::Validate)?;

    let gripper = cfg.gripper();
    let sphere = ViewSphere::generate(cfg.n_views).tag(Stage::Validate)?;
    let rule = Graspability::new(cfg.threshold_mu);
    let dense_dir = out.join("dense");
    let economic_dir = out.join("economic");

    mark(out, Stage::Synth)?;
    let synth = synth_dataset(
        &cfg.scene_config(),
        cfg.scenes,
        cfg.seed,
        &sphere,
        &gripper,
        &dense_dir,
    )
    .tag(Stage::Synth)?;

    mark(out, Stage::Compile)?;
    let compile =
        compile_dataset(&dense_dir, &economic_dir, &sphere, &gripper, &rule).tag(Stage::Compile)?;
    report(
        "compile.txt",
        &format!("{}{}", compile.to_table(), compile.to_key_values()),
        Stage::Compile,
    )?;
    if !compile.errors.is_empty() {
        return Err(PipelineError::SceneFailures(compile.errors.len())).tag(Stage::Compile);
    }

    mark(out, Stage::Analyze)?;
    let dense_ambiguity = analyze_dataset(&dense_dir, &gripper, &rule).tag(Stage::Analyze)?;
    let economic_ambiguity =
        analyze_economic(&economic_dir, &gripper, &rule).tag(Stage::Analyze)?;
    report(
        "analysis.txt",
        &format!(
            "dense labels\n{}\neconomic labels\n{}",
            dense_ambiguity.to_table(),
            economic_ambiguity.to_table()
        ),
        Stage::Analyze,
    )?;

    mark(out, Stage::Match)?;
    let labeled = load_labeled(&dense_dir, &economic_dir).tag(Stage::Match)?;
    let names: Vec<String> = labeled.iter().map(|s| s.name.clone()).collect();
    let sampling = Sampling {
        count: cfg.samples,
        strategy: cfg.sample_strategy,
        seed: cfg.seed,
    };
    let summaries = match_dataset(&labeled, &sampling, cfg.match_radius, 10).tag(Stage::Match)?;
    let sampled: usize = summaries.iter().map(|m| m.sampled).sum();
    let supervised: usize = summaries.iter().map(|m| m.supervised).sum();
    let masked_fraction = 1.0 - supervised as f64 / sampled as f64;
    report("match.txt", &match_report(&names, &summaries), Stage::Match)?;

    mark(out, Stage::HeadCheck)?;
    let gradient_checks = gradient_checks(
        &gradcheck_config(cfg.n_angles, cfg.n_depths),
        cfg.seed,
        cfg.gradcheck_seeds,
    )
    .tag(Stage::HeadCheck)?;
    let head = cfg.head_config();
    let split = cfg.train_scenes.min(labeled.len());
    let (training, params) = train_head(
        &labeled[..split],
        &sampling,
        cfg.match_radius,
        &head,
        &sphere,
        cfg.steps,
        cfg.rate,
        cfg.seed,
    )
    .tag(Stage::HeadCheck)?;
    let held_out: Vec<(usize, &LabeledScene)> = if split < labeled.len() {
        labeled.iter().enumerate().skip(split).collect()
    } else {
        labeled.iter().enumerate().collect()
    };
    let mut predictions = String::new();
    for &(i, s) in &held_out {
        let rows = sampling.rows(&s.scene, i).tag(Stage::HeadCheck)?;
        for g in predict_scene(&s.scene, &rows, &params, &sphere, &head, &gripper)
            .tag(Stage::HeadCheck)?
        {
            writeln!(predictions, "{}", format_prediction(&s.name, &g)).unwrap();
        }
    }
    let mut head_text = gradcheck_report(&gradient_checks);
    writeln!(
        head_text,
        "training steps={} initial_loss={:?} final_loss={:?}",
        cfg.steps, training.initial_loss.total, training.final_loss.total
    )
    .unwrap();
    report("head_check.txt", &head_text, Stage::HeadCheck)?;
    report("predictions.txt", &predictions, Stage::HeadCheck)?;

    mark(out, Stage::Eval)?;
    let eval_set: Vec<(String, SceneDescription)> = held_out
        .iter()
        .map(|(_, s)| (s.name.clone(), s.scene.clone()))
        .collect();
    let eval = eval_scenes(
        &eval_set,
        parse_predictions(&predictions).tag(Stage::Eval)?,
        &sphere,
        &gripper,
        cfg.topk_rule,
    )
    .tag(Stage::Eval)?;
    report("eval.txt", &eval.to_table(), Stage::Eval)?;

    mark(out, Stage::Summary)?;
    let summary = RunSummary {
        synth,
        compile,
        dense_ambiguity,
        economic_ambiguity,
        masked_fraction,
        gradient_checks,
        training,
        eval,
        eval_scenes: eval_set.into_iter().map(|(n, _)| n).collect(),
    };
    report("summary.txt", &summary.to_text(), Stage::Summary)?;
    let marker = out.join(INCOMPLETE);
    fs::remove_file(&marker)
        .map_err(io_err(&marker))
        .tag(Stage::Summary)?;
    Ok(summary)
}
