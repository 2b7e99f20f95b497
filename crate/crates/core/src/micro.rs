//! The plate micro-dataset: a few labeled plate scenes to train the head
//! on, and held-out plate scenes to test its top-ranked grasp.

use rayon::prelude::*;
use thiserror::Error;

use crate::compiler::{compile_scene, CompileError, Graspability};
use crate::eval::{grasp_success, rank};
use crate::geometry::{GeometryError, GripperModel, ViewSphere};
use crate::head::{
    predict_grasps, train, FeatureCloud, HeadConfig, HeadError, HeadParams, LossWeights,
    TrainScene, TrainingLog,
};
use crate::matching::{
    make_bundle, sample_points, MatchError, SampleStrategy, DEFAULT_MATCH_RADIUS,
};
use crate::synth::{label_object, random_scene, SceneConfig, SceneDescription, SynthError};

#[derive(Debug, Error)]
pub enum MicroError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Head(#[from] HeadError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroConfig {
    pub n_views: usize,
    pub train_scenes: usize,
    pub held_out_scenes: usize,
    /// Sampled points per scene.
    pub samples: usize,
    pub match_radius: f64,
    pub feature_dim: usize,
    pub steps: usize,
    pub rate: f64,
    pub threshold_mu: f64,
    /// Friction at which held-out grasps are tested.
    pub eval_mu: f64,
    pub seed: u64,
}

impl Default for MicroConfig {
    fn default() -> Self {
        Self {
            n_views: 60,
            train_scenes: 8,
            held_out_scenes: 10,
            samples: 64,
            match_radius: DEFAULT_MATCH_RADIUS,
            feature_dim: 16,
            steps: 200,
            rate: 1e-2,
            threshold_mu: 0.8,
            eval_mu: 0.8,
            seed: 0,
        }
    }
}

impl MicroConfig {
    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            feature_dim: self.feature_dim,
            n_views: self.n_views,
            ..HeadConfig::default()
        }
    }

    fn scene_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroReport {
    pub log: TrainingLog,
    /// `1 - final / initial` total loss.
    pub loss_reduction: f64,
    /// Whether each held-out scene's top-1 grasp succeeds; `false` when the
    /// head produced no valid grasp.
    pub held_out: Vec<bool>,
}

impl MicroReport {
    pub fn success_rate(&self) -> f64 {
        if self.held_out.is_empty() {
            return 0.0;
        }
        self.held_out.iter().filter(|&&s| s).count() as f64 / self.held_out.len() as f64
    }
}

/// One labeled training scene with sampled, matched points.
pub fn training_scene(
    scene: &SceneDescription,
    sphere: &ViewSphere,
    gripper: &GripperModel,
    cfg: &MicroConfig,
    seed: u64,
) -> Result<TrainScene, MicroError> {
    let dense = scene
        .objects
        .iter()
        .map(|o| label_object(&o.object, sphere, gripper))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = compile_scene(
        scene,
        &dense,
        sphere,
        gripper,
        &Graspability::new(cfg.threshold_mu),
    )?;
    let rows = sample_points(
        &scene.points,
        cfg.samples,
        seed,
        SampleStrategy::FarthestPoint,
    )?;
    let sampled: Vec<_> = rows.iter().map(|&i| scene.points[i]).collect();
    let bundle = make_bundle(&sampled, &labels, cfg.match_radius)?;
    Ok(TrainScene {
        points: scene.points.clone(),
        normals: scene.normals.clone(),
        rows,
        bundle,
    })
}

/// Whether the highest-scoring predicted grasp on `scene` succeeds.
pub fn top1_success(
    scene: &SceneDescription,
    params: &HeadParams,
    sphere: &ViewSphere,
    gripper: &GripperModel,
    cfg: &MicroConfig,
    seed: u64,
) -> Result<bool, MicroError> {
    let head = cfg.head_config();
    let fc = FeatureCloud::lift(&scene.points, &scene.normals, params);
    let rows = sample_points(
        &scene.points,
        cfg.samples,
        seed,
        SampleStrategy::FarthestPoint,
    )?;
    let ranked = rank(&predict_grasps(&fc, &rows, params, sphere, &head, gripper)?);
    match ranked.first() {
        Some(g) => Ok(grasp_success(g, scene, sphere, gripper, cfg.eval_mu)?),
        None => Ok(false),
    }
}

/// Labels the training scenes, trains a fresh head and tests it on the
/// held-out scenes.
pub fn run_micro(
    cfg: &MicroConfig,
    gripper: &GripperModel,
) -> Result<(MicroReport, HeadParams), MicroError> {
    let sphere = ViewSphere::generate(cfg.n_views)?;
    let head = cfg.head_config();
    head.validate()?;
    let plates = SceneConfig::plates();
    let scenes = (0..cfg.train_scenes)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.scene_seed(i);
            let scene = random_scene(&plates, seed)?;
            training_scene(&scene, &sphere, gripper, cfg, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut params = HeadParams::init(&head, cfg.seed);
    let log = train(
        &scenes,
        &mut params,
        &sphere,
        &head,
        &LossWeights::default(),
        cfg.steps,
        cfg.rate,
    )?;
    let held_out = (0..cfg.held_out_scenes)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.scene_seed(cfg.train_scenes + i);
            let scene = random_scene(&plates, seed)?;
            top1_success(&scene, &params, &sphere, gripper, cfg, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let loss_reduction = if log.initial_loss.total > 0.0 {
        1.0 - log.final_loss.total / log.initial_loss.total
    } else {
        0.0
    };
    Ok((
        MicroReport {
            log,
            loss_reduction,
            held_out,
        },
        params,
    ))
}
