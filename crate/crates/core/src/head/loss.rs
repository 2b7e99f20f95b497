use super::layers::{softmax, DecodedGrad};
use super::model::GraspPrediction;
use super::{HeadError, Mat, WIDTH_UNIT};
use crate::matching::SupervisionBundle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub view: f64,
    pub angle: f64,
    pub depth: f64,
    pub width: f64,
    pub score: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            view: 1.0,
            angle: 1.0,
            depth: 1.0,
            width: 1.0,
            score: 1.0,
        }
    }
}

/// Mean losses over the supervised rows with a valid prediction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub view: f64,
    pub angle: f64,
    pub depth: f64,
    pub width: f64,
    pub score: f64,
    pub total: f64,
    pub rows: usize,
}

/// Gradient of the total loss with respect to one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrad {
    pub view_scores: Mat,
    pub decoded: DecodedGrad,
}

fn smooth_l1(x: f64) -> (f64, f64) {
    if x.abs() < 1.0 {
        (0.5 * x * x, x)
    } else {
        (x.abs() - 0.5, x.signum())
    }
}

/// Cross-entropy of `logits` against class `y`, and its gradient.
fn cross_entropy(logits: &[f64], y: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    let mut grad = softmax(&Mat::from_column_slice(logits.len(), 1, logits));
    grad[y] -= 1.0;
    (lse - logits[y], grad)
}

fn class_target(class: u8, n: usize, row: usize) -> Result<usize, HeadError> {
    let c = class as usize;
    if c == 0 || c > n {
        return Err(HeadError::BadTarget(row));
    }
    Ok(c - 1)
}

/// Smooth-L1 view and width losses (width in [`WIDTH_UNIT`]s),
/// cross-entropy angle, depth and score losses. The angle, depth, width
/// and score targets come from the matched label's record for the
/// predicted view; an infeasible record supervises only the score, as
/// class 0. Rows with `mask == false` are never read.
pub fn losses(
    predictions: &[Option<GraspPrediction>],
    bundle: &SupervisionBundle,
    weights: &LossWeights,
) -> Result<(LossReport, Vec<Option<PredictionGrad>>), HeadError> {
    if predictions.len() != bundle.len() {
        return Err(HeadError::MisalignedBatch {
            predictions: predictions.len(),
            rows: bundle.len(),
        });
    }
    let rows: Vec<usize> = (0..bundle.len())
        .filter(|&i| bundle.mask[i] && predictions[i].as_ref().is_some_and(|p| p.valid))
        .collect();
    let mut report = LossReport {
        rows: rows.len(),
        ..LossReport::default()
    };
    let mut grads: Vec<Option<PredictionGrad>> = vec![None; bundle.len()];
    if rows.is_empty() {
        return Ok((report, grads));
    }
    let n = rows.len() as f64;
    for &i in &rows {
        let pred = predictions[i].as_ref().expect("filtered");
        let t = bundle.targets[i]
            .as_ref()
            .ok_or(HeadError::MissingTargets(i))?;
        let n_views = pred.view_scores.len();
        if t.view_graspness.len() != n_views || t.records.len() != n_views {
            return Err(HeadError::BadTarget(i));
        }
        let mut view_grad = Mat::zeros(n_views, 1);
        for v in 0..n_views {
            let (l, d) = smooth_l1(pred.view_scores[v] - t.view_graspness[v]);
            report.view += l / n;
            view_grad[v] = weights.view * d / n;
        }
        let rec = t.records[pred.selected_view - 1];
        let mut g = DecodedGrad {
            angle_logits: Mat::zeros(pred.angle_logits.len(), 1),
            depth_logits: Mat::zeros(pred.depth_logits.len(), 1),
            width: 0.0,
            score_logits: Mat::zeros(pred.score_logits.len(), 1),
        };
        let score_class = if rec.is_feasible() {
            let (l, d) = cross_entropy(
                &pred.angle_logits,
                class_target(rec.angle, pred.angle_logits.len(), i)?,
            );
            report.angle += l / n;
            g.angle_logits =
                Mat::from_iterator(d.len(), 1, d.into_iter().map(|x| weights.angle * x / n));
            let (l, d) = cross_entropy(
                &pred.depth_logits,
                class_target(rec.depth, pred.depth_logits.len(), i)?,
            );
            report.depth += l / n;
            g.depth_logits =
                Mat::from_iterator(d.len(), 1, d.into_iter().map(|x| weights.depth * x / n));
            let (l, d) = smooth_l1((pred.width - rec.width as f64) / WIDTH_UNIT);
            report.width += l / n;
            g.width = weights.width * d / WIDTH_UNIT / n;
            rec.score_class as usize
        } else {
            0
        };
        if score_class >= pred.score_logits.len() {
            return Err(HeadError::BadTarget(i));
        }
        let (l, d) = cross_entropy(&pred.score_logits, score_class);
        report.score += l / n;
        g.score_logits =
            Mat::from_iterator(d.len(), 1, d.into_iter().map(|x| weights.score * x / n));
        grads[i] = Some(PredictionGrad {
            view_scores: view_grad,
            decoded: g,
        });
    }
    report.total = weights.view * report.view
        + weights.angle * report.angle
        + weights.depth * report.depth
        + weights.width * report.width
        + weights.score * report.score;
    Ok((report, grads))
}
