use rayon::prelude::*;

use super::layers::{
    cylinder_group, decode, decode_backward, global_attention, global_attention_backward,
    local_attention, local_attention_backward, split_heads, split_heads_backward, AttentionCache,
    GlobalCache, SplitCache,
};
use super::loss::{losses, LossReport, LossWeights, PredictionGrad};
use super::{HeadConfig, HeadError, HeadParams, Mat};
use crate::geometry::{Frame, GraspPose, GripperModel, Vec3, ViewSphere};
use crate::matching::SupervisionBundle;

/// Points and unit normals with one feature row each.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// `M×F`.
    pub features: Mat,
}

fn lift_input(_p: &Vec3, n: &Vec3) -> Mat {
    Mat::from_column_slice(3, 1, &[n.x, n.y, n.z])
}

impl FeatureCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Features `W·normal + b`.
    pub fn lift(points: &[Vec3], normals: &[Vec3], p: &HeadParams) -> Self {
        let f = p.lift_w.nrows();
        let mut features = Mat::zeros(points.len(), f);
        for (i, (q, n)) in points.iter().zip(normals).enumerate() {
            let row = &p.lift_w * lift_input(q, n) + &p.lift_b;
            features.set_row(i, &row.transpose().row(0));
        }
        Self {
            points: points.to_vec(),
            normals: normals.to_vec(),
            features,
        }
    }

    /// Accumulates lift gradients from per-row feature gradients.
    pub fn lift_backward(
        points: &[Vec3],
        normals: &[Vec3],
        d_features: &[(usize, Mat)],
        g: &mut HeadParams,
    ) {
        for (i, d) in d_features {
            let dt = d.transpose();
            g.lift_w += &dt * lift_input(&points[*i], &normals[*i]).transpose();
            g.lift_b += dt;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspPrediction {
    pub view_scores: Vec<f64>,
    /// 1-based.
    pub selected_view: usize,
    pub angle_logits: Vec<f64>,
    pub depth_logits: Vec<f64>,
    pub width: f64,
    pub score_logits: Vec<f64>,
    pub score_probs: Vec<f64>,
    pub composite_score: f64,
    /// `false` when the grouping cylinder was empty; only the view scores
    /// are meaningful then.
    pub valid: bool,
}

impl GraspPrediction {
    /// 1-based argmax of the angle logits (lowest on ties).
    pub fn angle(&self) -> usize {
        argmax(&self.angle_logits) + 1
    }

    pub fn depth(&self) -> usize {
        argmax(&self.depth_logits) + 1
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
struct RegionCache {
    indices: Vec<usize>,
    locals: Mat,
    global: GlobalCache,
    split: SplitCache,
    local: AttentionCache,
    refined: Mat,
}

/// Intermediates of [`head_forward`] needed by [`head_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    point: usize,
    feature: Mat,
    region: Option<RegionCache>,
}

impl ForwardCache {
    /// Attention weights of the local block, when the region was non-empty.
    pub fn local_weights(&self) -> Option<&Mat> {
        self.region.as_ref().map(|r| &r.local.weights)
    }
}

/// Full head on cloud row `index`.
pub fn head_forward(
    fc: &FeatureCloud,
    index: usize,
    p: &HeadParams,
    sphere: &ViewSphere,
    cfg: &HeadConfig,
) -> Result<(GraspPrediction, ForwardCache), HeadError> {
    if index >= fc.len() {
        return Err(HeadError::PointOutOfRange {
            index,
            len: fc.len(),
        });
    }
    let feature = Mat::from_iterator(
        fc.features.ncols(),
        1,
        fc.features.row(index).iter().copied(),
    );
    let view_scores: Vec<f64> = (&p.view_w * &feature + &p.view_b).iter().copied().collect();
    let selected_view = argmax(&view_scores) + 1;
    let axis = -sphere.directions()[selected_view - 1];
    let region = cylinder_group(
        fc,
        &fc.points[index],
        &axis,
        cfg.group_radius,
        cfg.depth_lo,
        cfg.depth_hi,
        cfg.max_group,
    );
    let mut pred = GraspPrediction {
        view_scores,
        selected_view,
        angle_logits: vec![0.0; cfg.n_angles],
        depth_logits: vec![0.0; cfg.n_depths],
        width: 0.0,
        score_logits: vec![0.0; super::SCORE_GRID.len()],
        score_probs: vec![0.0; super::SCORE_GRID.len()],
        composite_score: 0.0,
        valid: false,
    };
    if region.is_empty() {
        return Ok((
            pred,
            ForwardCache {
                point: index,
                feature,
                region: None,
            },
        ));
    }
    // grasp-frame coordinates in units of the cylinder radius, then normals
    let locals = Mat::from_fn(region.indices.len(), 6, |r, c| {
        if c < 3 {
            region.cloud.points[r][c] / cfg.group_radius
        } else {
            region.cloud.normals[r][c - 3]
        }
    });
    let tokens = &region.cloud.features + &locals * p.pos_w.transpose();
    let (fused, global) = global_attention(&tokens, p)?;
    let (h, split) = split_heads(&fused, p);
    let (refined, local) = local_attention(&h, p);
    let d = decode(&refined, p);
    pred.angle_logits = d.angle_logits.iter().copied().collect();
    pred.depth_logits = d.depth_logits.iter().copied().collect();
    pred.width = d.width;
    pred.score_logits = d.score_logits.iter().copied().collect();
    pred.score_probs = d.score_probs;
    pred.composite_score = d.composite_score;
    pred.valid = true;
    Ok((
        pred,
        ForwardCache {
            point: index,
            feature,
            region: Some(RegionCache {
                indices: region.indices,
                locals,
                global,
                split,
                local,
                refined,
            }),
        },
    ))
}

/// Accumulates parameter gradients into `g` and returns `1×F` gradients for
/// the feature rows the prediction read.
pub fn head_backward(
    c: &ForwardCache,
    d: &PredictionGrad,
    p: &HeadParams,
    g: &mut HeadParams,
) -> Vec<(usize, Mat)> {
    g.view_w += &d.view_scores * c.feature.transpose();
    g.view_b += &d.view_scores;
    let mut out = vec![(c.point, (p.view_w.transpose() * &d.view_scores).transpose())];
    if let Some(r) = &c.region {
        let dr = decode_backward(&r.refined, &d.decoded, p, g);
        let dh = local_attention_backward(&r.local, &dr, p, g);
        let d_fused = split_heads_backward(&r.split, &dh, p, g);
        let d_tokens = global_attention_backward(&r.global, &d_fused, p, g);
        g.pos_w += d_tokens.transpose() * &r.locals;
        for (row, &i) in r.indices.iter().enumerate() {
            out.push((
                i,
                Mat::from_iterator(1, d_tokens.ncols(), d_tokens.row(row).iter().copied()),
            ));
        }
    }
    out
}

/// One training scene: a cloud with normals and a bundle whose rows are
/// the cloud rows in `rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainScene {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub rows: Vec<usize>,
    pub bundle: SupervisionBundle,
}

/// Predictions of one scene (masked rows skipped) and their caches.
fn scene_forward(
    s: &TrainScene,
    p: &HeadParams,
    sphere: &ViewSphere,
    cfg: &HeadConfig,
) -> Result<Vec<Option<(GraspPrediction, ForwardCache)>>, HeadError> {
    let fc = FeatureCloud::lift(&s.points, &s.normals, p);
    s.rows
        .iter()
        .zip(&s.bundle.mask)
        .map(|(&i, &m)| m.then(|| head_forward(&fc, i, p, sphere, cfg)).transpose())
        .collect()
}

/// Total loss over all scenes and, if requested, its gradient.
pub(crate) fn batch_loss(
    scenes: &[TrainScene],
    p: &HeadParams,
    sphere: &ViewSphere,
    cfg: &HeadConfig,
    weights: &LossWeights,
    with_grad: bool,
) -> Result<(LossReport, Option<HeadParams>), HeadError> {
    let forwards = scenes
        .par_iter()
        .map(|s| scene_forward(s, p, sphere, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let bundle = SupervisionBundle::concat(scenes.iter().map(|s| &s.bundle));
    let preds: Vec<Option<GraspPrediction>> = forwards
        .iter()
        .flatten()
        .map(|f| f.as_ref().map(|(pred, _)| pred.clone()))
        .collect();
    let (report, grads) = losses(&preds, &bundle, weights)?;
    if !with_grad {
        return Ok((report, None));
    }
    let mut offset = 0;
    let mut work = Vec::with_capacity(scenes.len());
    for (s, f) in scenes.iter().zip(&forwards) {
        work.push((s, f, &grads[offset..offset + f.len()]));
        offset += f.len();
    }
    let partial: Vec<HeadParams> = work
        .into_par_iter()
        .map(|(s, f, gs)| {
            let mut g = p.zeros_like();
            let mut d_features = Vec::new();
            for (fwd, grad) in f.iter().zip(gs) {
                if let (Some((_, cache)), Some(grad)) = (fwd, grad) {
                    d_features.extend(head_backward(cache, grad, p, &mut g));
                }
            }
            FeatureCloud::lift_backward(&s.points, &s.normals, &d_features, &mut g);
            g
        })
        .collect();
    let mut total = p.zeros_like();
    for g in &partial {
        total.add_assign(g);
    }
    Ok((report, Some(total)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    /// Total loss before each step.
    pub losses: Vec<f64>,
    pub final_loss: LossReport,
    pub initial_loss: LossReport,
}

/// Plain full-batch gradient descent.
#[allow(clippy::too_many_arguments)]
pub fn train(
    scenes: &[TrainScene],
    p: &mut HeadParams,
    sphere: &ViewSphere,
    cfg: &HeadConfig,
    weights: &LossWeights,
    steps: usize,
    rate: f64,
) -> Result<TrainingLog, HeadError> {
    let mut log = Vec::with_capacity(steps);
    let mut initial = None;
    for _ in 0..steps {
        let (report, grad) = batch_loss(scenes, p, sphere, cfg, weights, true)?;
        initial.get_or_insert(report);
        log.push(report.total);
        p.descend(&grad.expect("requested"), rate);
    }
    let (final_loss, _) = batch_loss(scenes, p, sphere, cfg, weights, false)?;
    Ok(TrainingLog {
        losses: log,
        initial_loss: initial.unwrap_or(final_loss),
        final_loss,
    })
}

/// Predicted point graspness of a cloud row: the mean of its view scores.
pub fn point_graspness(fc: &FeatureCloud, index: usize, p: &HeadParams) -> f64 {
    let feature = Mat::from_iterator(
        fc.features.ncols(),
        1,
        fc.features.row(index).iter().copied(),
    );
    (&p.view_w * feature + &p.view_b).mean()
}

/// The `ceil(keep · n)` rows of `rows` with the highest predicted point
/// graspness, in their original order (ties keep the earlier row).
pub fn graspable_rows(fc: &FeatureCloud, rows: &[usize], p: &HeadParams, keep: f64) -> Vec<usize> {
    let count = ((keep.clamp(0.0, 1.0) * rows.len() as f64).ceil() as usize).min(rows.len());
    let g: Vec<f64> = rows.iter().map(|&i| point_graspness(fc, i, p)).collect();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| g[b].total_cmp(&g[a]).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    order.into_iter().map(|k| rows[k]).collect()
}

/// Scene-frame grasps for cloud rows `candidates`, in candidate order.
/// Invalid predictions are skipped; widths are scaled by
/// `cfg.width_scale` and clamped to the gripper.
pub fn predict_grasps(
    fc: &FeatureCloud,
    candidates: &[usize],
    p: &HeadParams,
    sphere: &ViewSphere,
    cfg: &HeadConfig,
    gripper: &GripperModel,
) -> Result<Vec<GraspPose>, HeadError> {
    let preds = candidates
        .par_iter()
        .map(|&i| head_forward(fc, i, p, sphere, cfg).map(|(pred, _)| (i, pred)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(preds
        .into_iter()
        .filter(|(_, pred)| pred.valid)
        .map(|(i, pred)| GraspPose {
            frame: Frame::Scene,
            center: fc.points[i],
            view: pred.selected_view,
            angle: pred.angle(),
            depth: pred.depth(),
            width: (pred.width * cfg.width_scale).clamp(0.0, gripper.max_width),
            score: pred.composite_score,
        })
        .collect())
}
