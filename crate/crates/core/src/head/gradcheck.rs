//! Central finite-difference checks of the hand-written gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    decode, decode_backward, global_attention, global_attention_backward, local_attention,
    local_attention_backward, split_heads, split_heads_backward, DecodedGrad,
};
use super::loss::{losses, LossWeights};
use super::model::{batch_loss, GraspPrediction, TrainScene};
use super::params::random_matrix;
use super::{HeadConfig, HeadError, HeadParams, Mat, SCORE_GRID};
use crate::compiler::BestGrasp;
use crate::geometry::{Vec3, ViewSphere};
use crate::matching::{PointTargets, SupervisionBundle};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub op: &'static str,
    pub seed: u64,
    pub tensors: Vec<TensorCheck>,
}

impl CheckResult {
    pub fn worst(&self) -> f64 {
        self.tensors.iter().map(|t| t.rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() <= TOLERANCE
    }
}

/// Below this norm a gradient is zero to finite-difference resolution.
pub const ZERO_FLOOR: f64 = 1e-7;

/// `‖a − n‖ / max(‖a‖, ‖n‖)`. When both norms are below [`ZERO_FLOOR`]
/// (the key biases, which cancel inside the softmax) the absolute
/// difference is returned instead.
pub fn relative_error(analytic: &Mat, numeric: &Mat) -> f64 {
    let diff = (analytic - numeric).norm();
    let scale = analytic.norm().max(numeric.norm());
    if scale < ZERO_FLOOR {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to every entry of `m`.
pub fn numeric_matrix(m: &Mat, mut f: impl FnMut(&Mat) -> f64) -> Mat {
    let mut x = m.clone();
    let mut g = Mat::zeros(m.nrows(), m.ncols());
    for i in 0..m.len() {
        let orig = x[i];
        x[i] = orig + STEP;
        let up = f(&x);
        x[i] = orig - STEP;
        let down = f(&x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * STEP);
    }
    g
}

/// Central differences of `f` with respect to every parameter.
pub fn numeric_params(p: &HeadParams, mut f: impl FnMut(&HeadParams) -> f64) -> HeadParams {
    let mut x = p.clone();
    let mut g = p.zeros_like();
    for t in 0..p.tensors().len() {
        for i in 0..p.tensors()[t].len() {
            let orig = p.tensors()[t][i];
            x.tensors_mut()[t][i] = orig + STEP;
            let up = f(&x);
            x.tensors_mut()[t][i] = orig - STEP;
            let down = f(&x);
            x.tensors_mut()[t][i] = orig;
            g.tensors_mut()[t][i] = (up - down) / (2.0 * STEP);
        }
    }
    g
}

fn compare_params(analytic: &HeadParams, numeric: &HeadParams) -> Vec<TensorCheck> {
    HeadParams::names()
        .iter()
        .zip(analytic.tensors().into_iter().zip(numeric.tensors()))
        .map(|(name, (a, n))| TensorCheck {
            name: name.to_string(),
            rel_error: relative_error(a, n),
        })
        .collect()
}

fn dot(a: &Mat, b: &Mat) -> f64 {
    a.component_mul(b).sum()
}

/// Parameters with random weights and biases.
pub fn random_params(cfg: &HeadConfig, seed: u64) -> HeadParams {
    let mut p = HeadParams::init(cfg, seed);
    p.randomize_biases(0.1, seed ^ 0x5eed);
    p
}

pub fn check_global_attention(cfg: &HeadConfig, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_params(cfg, seed);
    let f = cfg.feature_dim;
    let tokens = random_matrix(6, f, 1.0, &mut rng);
    let c = random_matrix(f, 1, 1.0, &mut rng);
    let objective =
        |t: &Mat, p: &HeadParams| dot(&global_attention(t, p).expect("non-empty").0, &c);
    let (_, cache) = global_attention(&tokens, &p).expect("non-empty");
    let mut g = p.zeros_like();
    let d_tokens = global_attention_backward(&cache, &c, &p, &mut g);
    let mut tensors = compare_params(&g, &numeric_params(&p, |q| objective(&tokens, q)));
    tensors.push(TensorCheck {
        name: "input".into(),
        rel_error: relative_error(&d_tokens, &numeric_matrix(&tokens, |t| objective(t, &p))),
    });
    CheckResult {
        op: "global_attention",
        seed,
        tensors,
    }
}

pub fn check_split_heads(cfg: &HeadConfig, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_params(cfg, seed);
    let f = cfg.feature_dim;
    let fused = random_matrix(f, 1, 1.0, &mut rng);
    let c = random_matrix(4, f, 1.0, &mut rng);
    let objective = |x: &Mat, p: &HeadParams| dot(&split_heads(x, p).0, &c);
    let (_, cache) = split_heads(&fused, &p);
    let mut g = p.zeros_like();
    let d_fused = split_heads_backward(&cache, &c, &p, &mut g);
    let mut tensors = compare_params(&g, &numeric_params(&p, |q| objective(&fused, q)));
    tensors.push(TensorCheck {
        name: "input".into(),
        rel_error: relative_error(&d_fused, &numeric_matrix(&fused, |x| objective(x, &p))),
    });
    CheckResult {
        op: "split_heads",
        seed,
        tensors,
    }
}

pub fn check_local_attention(cfg: &HeadConfig, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_params(cfg, seed);
    let h = random_matrix(4, cfg.feature_dim, 1.0, &mut rng);
    let c = random_matrix(4, cfg.feature_dim, 1.0, &mut rng);
    let objective = |x: &Mat, p: &HeadParams| dot(&local_attention(x, p).0, &c);
    let (_, cache) = local_attention(&h, &p);
    let mut g = p.zeros_like();
    let dh = local_attention_backward(&cache, &c, &p, &mut g);
    let mut tensors = compare_params(&g, &numeric_params(&p, |q| objective(&h, q)));
    tensors.push(TensorCheck {
        name: "input".into(),
        rel_error: relative_error(&dh, &numeric_matrix(&h, |x| objective(x, &p))),
    });
    CheckResult {
        op: "local_attention",
        seed,
        tensors,
    }
}

pub fn check_decode(cfg: &HeadConfig, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_params(cfg, seed);
    let r = random_matrix(4, cfg.feature_dim, 1.0, &mut rng);
    let d = DecodedGrad {
        angle_logits: random_matrix(cfg.n_angles, 1, 1.0, &mut rng),
        depth_logits: random_matrix(cfg.n_depths, 1, 1.0, &mut rng),
        width: rng.random_range(-1.0..1.0),
        score_logits: random_matrix(SCORE_GRID.len(), 1, 1.0, &mut rng),
    };
    let objective = |x: &Mat, p: &HeadParams| {
        let o = decode(x, p);
        dot(&o.angle_logits, &d.angle_logits)
            + dot(&o.depth_logits, &d.depth_logits)
            + o.width * d.width
            + dot(&o.score_logits, &d.score_logits)
    };
    let mut g = p.zeros_like();
    let dr = decode_backward(&r, &d, &p, &mut g);
    let mut tensors = compare_params(&g, &numeric_params(&p, |q| objective(&r, q)));
    tensors.push(TensorCheck {
        name: "input".into(),
        rel_error: relative_error(&dr, &numeric_matrix(&r, |x| objective(x, &p))),
    });
    CheckResult {
        op: "decode",
        seed,
        tensors,
    }
}

fn random_targets(cfg: &HeadConfig, rng: &mut ChaCha8Rng) -> PointTargets {
    let records = (0..cfg.n_views)
        .map(|_| {
            if rng.random_bool(0.2) {
                BestGrasp::INFEASIBLE
            } else {
                BestGrasp {
                    angle: rng.random_range(1..=cfg.n_angles) as u8,
                    depth: rng.random_range(1..=cfg.n_depths) as u8,
                    score_class: rng.random_range(0..SCORE_GRID.len()) as u8,
                    width: rng.random_range(0.0..0.1),
                }
            }
        })
        .collect();
    PointTargets {
        view_graspness: (0..cfg.n_views)
            .map(|_| rng.random_range(0.0..1.0))
            .collect(),
        records,
    }
}

fn random_prediction(cfg: &HeadConfig, rng: &mut ChaCha8Rng) -> GraspPrediction {
    let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let view_scores = v(cfg.n_views);
    let angle_logits = v(cfg.n_angles);
    let depth_logits = v(cfg.n_depths);
    let score_logits = v(SCORE_GRID.len());
    let selected_view = rng.random_range(1..=cfg.n_views);
    GraspPrediction {
        view_scores,
        selected_view,
        angle_logits,
        depth_logits,
        width: rng.random_range(0.0..0.1),
        score_logits,
        score_probs: vec![1.0 / 6.0; 6],
        composite_score: 0.5,
        valid: true,
    }
}

/// Loss gradients with respect to the prediction outputs.
pub fn check_losses(cfg: &HeadConfig, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = 6;
    let preds: Vec<Option<GraspPrediction>> = (0..rows)
        .map(|_| Some(random_prediction(cfg, &mut rng)))
        .collect();
    let mask: Vec<bool> = (0..rows).map(|i| i % 3 != 2).collect();
    let bundle = SupervisionBundle {
        sampled_points: vec![Vec3::zeros(); rows],
        match_index: mask
            .iter()
            .enumerate()
            .map(|(i, &m)| m.then_some(i))
            .collect(),
        targets: mask
            .iter()
            .map(|&m| m.then(|| random_targets(cfg, &mut rng)))
            .collect(),
        mask,
    };
    let weights = LossWeights::default();
    let (_, grads) = losses(&preds, &bundle, &weights).expect("aligned");
    let total =
        |ps: &[Option<GraspPrediction>]| losses(ps, &bundle, &weights).expect("aligned").0.total;
    let mut tensors = Vec::new();
    type Field = fn(&mut GraspPrediction) -> &mut Vec<f64>;
    let fields: [(&str, Field); 4] = [
        ("view_scores", |p| &mut p.view_scores),
        ("angle_logits", |p| &mut p.angle_logits),
        ("depth_logits", |p| &mut p.depth_logits),
        ("score_logits", |p| &mut p.score_logits),
    ];
    for (name, field) in fields {
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for r in 0..rows {
            let n = field(&mut preds[r].clone().expect("present")).len();
            for i in 0..n {
                let mut ps = preds.clone();
                let orig = field(ps[r].as_mut().expect("present"))[i];
                field(ps[r].as_mut().expect("present"))[i] = orig + STEP;
                let up = total(&ps);
                field(ps[r].as_mut().expect("present"))[i] = orig - STEP;
                let down = total(&ps);
                numeric.push((up - down) / (2.0 * STEP));
                analytic.push(match &grads[r] {
                    None => 0.0,
                    Some(g) => match name {
                        "view_scores" => g.view_scores[i],
                        "angle_logits" => g.decoded.angle_logits[i],
                        "depth_logits" => g.decoded.depth_logits[i],
                        _ => g.decoded.score_logits[i],
                    },
                });
            }
        }
        tensors.push(TensorCheck {
            name: name.into(),
            rel_error: relative_error(
                &Mat::from_column_slice(analytic.len(), 1, &analytic),
                &Mat::from_column_slice(numeric.len(), 1, &numeric),
            ),
        });
    }
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for r in 0..rows {
        let mut ps = preds.clone();
        let orig = ps[r].as_ref().expect("present").width;
        ps[r].as_mut().expect("present").width = orig + STEP;
        let up = total(&ps);
        ps[r].as_mut().expect("present").width = orig - STEP;
        let down = total(&ps);
        numeric.push((up - down) / (2.0 * STEP));
        analytic.push(grads[r].as_ref().map_or(0.0, |g| g.decoded.width));
    }
    tensors.push(TensorCheck {
        name: "width".into(),
        rel_error: relative_error(
            &Mat::from_column_slice(rows, 1, &analytic),
            &Mat::from_column_slice(rows, 1, &numeric),
        ),
    });
    CheckResult {
        op: "losses",
        seed,
        tensors,
    }
}

/// A 16-point scene packed into a 3 cm ball, random targets, every third
/// row masked.
pub fn micro_scene(cfg: &HeadConfig, seed: u64) -> TrainScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 16;
    let unit = |rng: &mut ChaCha8Rng| loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let norm = v.norm();
        if norm > 1e-3 && norm <= 1.0 {
            break v;
        }
    };
    let points: Vec<Vec3> = (0..n).map(|_| unit(&mut rng) * 0.015).collect();
    let normals: Vec<Vec3> = (0..n).map(|_| unit(&mut rng).normalize()).collect();
    let rows: Vec<usize> = (0..n).collect();
    let mask: Vec<bool> = rows.iter().map(|i| i % 3 != 2).collect();
    let bundle = SupervisionBundle {
        sampled_points: points.clone(),
        match_index: mask
            .iter()
            .enumerate()
            .map(|(i, &m)| m.then_some(i))
            .collect(),
        targets: mask
            .iter()
            .map(|&m| m.then(|| random_targets(cfg, &mut rng)))
            .collect(),
        mask,
    };
    TrainScene {
        points,
        normals,
        rows,
        bundle,
    }
}

/// Total loss of [`micro_scene`] through the whole head.
pub fn check_end_to_end(
    cfg: &HeadConfig,
    sphere: &ViewSphere,
    seed: u64,
) -> Result<CheckResult, HeadError> {
    let p = random_params(cfg, seed);
    let scenes = [micro_scene(cfg, seed)];
    let w = LossWeights::default();
    let (_, g) = batch_loss(&scenes, &p, sphere, cfg, &w, true)?;
    let mut failure = None;
    let numeric = numeric_params(&p, |q| {
        match batch_loss(&scenes, q, sphere, cfg, &w, false) {
            Ok((r, _)) => r.total,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(CheckResult {
        op: "end_to_end",
        seed,
        tensors: compare_params(&g.expect("requested"), &numeric),
    })
}

/// Every check for each seed.
pub fn suite(
    cfg: &HeadConfig,
    sphere: &ViewSphere,
    seeds: &[u64],
) -> Result<Vec<CheckResult>, HeadError> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &seed in seeds {
        out.push(check_global_attention(cfg, seed));
        out.push(check_split_heads(cfg, seed));
        out.push(check_local_attention(cfg, seed));
        out.push(check_decode(cfg, seed));
        out.push(check_losses(cfg, seed));
        out.push(check_end_to_end(cfg, sphere, seed)?);
    }
    Ok(out)
}
