//! Top-k friction-sweep average precision and the failure-scene counter.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    closure_angle, compose_rotation, find_contacts, gripper_collision, within_cone, Frame,
    GeometryError, GraspPose, GripperModel, Vec3, ViewSphere,
};
use crate::synth::SceneDescription;

/// Friction coefficients of the sweep.
pub const MU_SWEEP: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
pub const TOP_K: usize = 50;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no scenes to evaluate")]
    NoScenes,
    #[error("{scenes} scenes but {predictions} prediction lists")]
    Misaligned { scenes: usize, predictions: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How `AP_mu` treats a ranking shorter than 50.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopKRule {
    /// Average over `k = 1..=min(50, n)`.
    #[default]
    Available,
    /// Average over `k = 1..=50`; missing slots count as failures.
    Fixed50,
}

impl std::str::FromStr for TopKRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "available" => Ok(Self::Available),
            "fixed50" => Ok(Self::Fixed50),
            _ => Err(format!("unknown top-k rule `{s}`")),
        }
    }
}

impl std::fmt::Display for TopKRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Available => "available",
            Self::Fixed50 => "fixed50",
        })
    }
}

/// Worst closure angle of a grasp in its scene, or `None` when the gripper
/// collides or a finger side has no contact. The grasp closes at `mu` iff
/// the angle is at most `atan(mu)`.
pub fn grasp_closure(
    g: &GraspPose,
    scene: &SceneDescription,
    sphere: &ViewSphere,
    gripper: &GripperModel,
) -> Result<Option<f64>, GeometryError> {
    g.validate(sphere, gripper)?;
    if gripper_collision(g, &scene.points, sphere, gripper)?.colliding {
        return Ok(None);
    }
    let Some(pair) = find_contacts(g, &scene.points, &scene.normals, sphere, gripper)? else {
        return Ok(None);
    };
    let axis: Vec3 = compose_rotation(sphere, g.view, g.angle, gripper.angle_count)?
        .column(0)
        .into_owned();
    Ok(Some(closure_angle(&pair, &axis)?))
}

/// Collision-free, with contacts on both fingers, and in force closure at `mu`.
pub fn grasp_success(
    g: &GraspPose,
    scene: &SceneDescription,
    sphere: &ViewSphere,
    gripper: &GripperModel,
    mu: f64,
) -> Result<bool, GeometryError> {
    if !(mu > 0.0) {
        return Err(GeometryError::NonPositiveFriction(mu));
    }
    Ok(grasp_closure(g, scene, sphere, gripper)?.is_some_and(|a| within_cone(a, mu)))
}

/// Stable sort by descending score; equal scores keep emission order.
pub fn rank(predictions: &[GraspPose]) -> Vec<GraspPose> {
    let mut out = predictions.to_vec();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

/// `AP_mu` of a ranked success list.
pub fn ap_from_successes(successes: &[bool], rule: TopKRule) -> f64 {
    let n = successes.len().min(TOP_K);
    let slots = match rule {
        TopKRule::Available => n,
        TopKRule::Fixed50 => TOP_K,
    };
    if slots == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for k in 1..=slots {
        if k <= n && successes[k - 1] {
            hits += 1;
        }
        total += hits as f64 / k as f64;
    }
    total / slots as f64
}

/// `AP_mu` of one scene. `predictions` must already be ranked.
pub fn ap_mu(
    predictions: &[GraspPose],
    scene: &SceneDescription,
    sphere: &ViewSphere,
    gripper: &GripperModel,
    mu: f64,
    rule: TopKRule,
) -> Result<f64, GeometryError> {
    let successes = predictions
        .iter()
        .take(TOP_K)
        .map(|g| grasp_success(g, scene, sphere, gripper, mu))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ap_from_successes(&successes, rule))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub ap: f64,
    /// `(mu, AP_mu)` over [`MU_SWEEP`].
    pub ap_by_mu: Vec<(f64, f64)>,
    pub per_scene_success_at_02: Vec<bool>,
    pub failure_count: usize,
}

impl EvalResult {
    /// Aggregates per-scene ranked closure angles (`None` = failed at every mu).
    pub fn from_closures(
        per_scene: &[Vec<Option<f64>>],
        rule: TopKRule,
    ) -> Result<Self, EvalError> {
        if per_scene.is_empty() {
            return Err(EvalError::NoScenes);
        }
        let n = per_scene.len() as f64;
        let successes = |closures: &[Option<f64>], mu: f64| -> Vec<bool> {
            closures
                .iter()
                .take(TOP_K)
                .map(|c| c.is_some_and(|a| within_cone(a, mu)))
                .collect()
        };
        let ap_by_mu: Vec<(f64, f64)> = MU_SWEEP
            .iter()
            .map(|&mu| {
                let sum: f64 = per_scene
                    .iter()
                    .map(|c| ap_from_successes(&successes(c, mu), rule))
                    .sum();
                (mu, sum / n)
            })
            .collect();
        let per_scene_success_at_02: Vec<bool> = per_scene
            .iter()
            .map(|c| successes(c, 0.2).into_iter().any(|s| s))
            .collect();
        Ok(Self {
            ap: ap_by_mu.iter().map(|(_, v)| v).sum::<f64>() / ap_by_mu.len() as f64,
            failure_count: per_scene_success_at_02.iter().filter(|s| !**s).count(),
            ap_by_mu,
            per_scene_success_at_02,
        })
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<8} {:>8}", "mu", "AP_mu").unwrap();
        for (mu, v) in &self.ap_by_mu {
            writeln!(s, "{mu:<8.1} {:>8.4}", v).unwrap();
        }
        writeln!(s, "{:<8} {:>8.4}", "AP", self.ap).unwrap();
        writeln!(
            s,
            "failure scenes at mu=0.2: {} / {}",
            self.failure_count,
            self.per_scene_success_at_02.len()
        )
        .unwrap();
        s
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        writeln!(s, "ap={:?}", self.ap).unwrap();
        for (mu, v) in &self.ap_by_mu {
            writeln!(s, "ap_mu_{mu:.1}={v:?}").unwrap();
        }
        writeln!(s, "failure_count={}", self.failure_count).unwrap();
        writeln!(s, "scenes={}", self.per_scene_success_at_02.len()).unwrap();
        s
    }
}

/// AP over scenes. Each prediction list is ranked here.
pub fn ap(
    predictions: &[Vec<GraspPose>],
    scenes: &[SceneDescription],
    sphere: &ViewSphere,
    gripper: &GripperModel,
    rule: TopKRule,
) -> Result<EvalResult, EvalError> {
    if scenes.is_empty() {
        return Err(EvalError::NoScenes);
    }
    if predictions.len() != scenes.len() {
        return Err(EvalError::Misaligned {
            scenes: scenes.len(),
            predictions: predictions.len(),
        });
    }
    let closures = predictions
        .par_iter()
        .zip(scenes)
        .map(|(preds, scene)| {
            rank(preds)
                .iter()
                .take(TOP_K)
                .map(|g| grasp_closure(g, scene, sphere, gripper))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    EvalResult::from_closures(&closures, rule)
}

/// Parses `scene_id x y z v a d w s` lines into per-scene lists in
/// emission order. Blank lines and `#` comments are skipped.
pub fn parse_predictions(text: &str) -> Result<BTreeMap<String, Vec<GraspPose>>, EvalError> {
    let mut out: BTreeMap<String, Vec<GraspPose>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| EvalError::Parse { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let t: Vec<&str> = content.split_whitespace().collect();
        if t.len() != 9 {
            return Err(err(format!("expected 9 fields, found {}", t.len())));
        }
        let real = |k: usize| -> Result<f64, EvalError> {
            t[k].parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("field {} `{}` is not a finite number", k + 1, t[k])))
        };
        let index = |k: usize| -> Result<usize, EvalError> {
            t[k].parse::<usize>()
                .map_err(|e| err(format!("field {} `{}`: {e}", k + 1, t[k])))
        };
        let g = GraspPose {
            frame: Frame::Scene,
            center: Vec3::new(real(1)?, real(2)?, real(3)?),
            view: index(4)?,
            angle: index(5)?,
            depth: index(6)?,
            width: real(7)?,
            score: real(8)?,
        };
        out.entry(t[0].to_string()).or_default().push(g);
    }
    Ok(out)
}

pub fn format_prediction(scene: &str, g: &GraspPose) -> String {
    format!(
        "{scene} {:?} {:?} {:?} {} {} {} {:?} {:?}",
        g.center.x, g.center.y, g.center.z, g.view, g.angle, g.depth, g.width, g.score
    )
}
