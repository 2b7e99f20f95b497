//! A small focal grasp head with hand-written gradients.
//!
//! Per grasp point: a linear view decoder on the point feature picks the
//! view; the cloud is grouped in a cylinder along that view; region tokens
//! go through single-head self-attention and max pooling; the fused
//! feature is split into four part features (angle, depth, width, score)
//! that attend to each other; linear decoders produce angle and depth
//! logits, a width and a six-class score distribution whose expectation is
//! the grasp score.
//!
//! Point features come from a learned affine lift of the normals; the
//! region path sees positions. All tensors are `f64` [`DMatrix`]es; column
//! vectors are `n×1` matrices.

pub mod gradcheck;
mod layers;
mod loss;
mod model;
mod params;

use nalgebra::DMatrix;
use thiserror::Error;

pub use layers::{
    cylinder_group, decode, decode_backward, global_attention, global_attention_backward,
    local_attention, local_attention_backward, split_heads, split_heads_backward, AttentionCache,
    Decoded, DecodedGrad, GlobalCache, Region, SplitCache,
};
pub use loss::{losses, LossReport, LossWeights, PredictionGrad};
pub use model::{
    graspable_rows, head_backward, head_forward, point_graspness, predict_grasps, train,
    FeatureCloud, ForwardCache, GraspPrediction, TrainScene, TrainingLog,
};
pub use params::{HeadConfig, HeadParams};

pub type Mat = DMatrix<f64>;

/// Score value of each of the six classes.
pub const SCORE_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

/// Widths are decoded and penalised in units of this many meters, which
/// puts width errors on the same scale as the other losses.
pub const WIDTH_UNIT: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeadError {
    #[error("empty region")]
    EmptyRegion,
    #[error("score probabilities must be {n} non-negative values summing to 1 (sum {sum})", n = SCORE_GRID.len())]
    BadProbabilities { sum: f64 },
    #[error("{predictions} predictions for a bundle of {rows}")]
    MisalignedBatch { predictions: usize, rows: usize },
    #[error("supervised row {0} has no targets")]
    MissingTargets(usize),
    #[error("row {0} has targets of the wrong shape or out of range")]
    BadTarget(usize),
    #[error("invalid head config: {0}")]
    InvalidConfig(String),
    #[error("point index {index} outside a cloud of {len}")]
    PointOutOfRange { index: usize, len: usize },
}

/// Expectation of the score grid under `probs`.
pub fn composite_score(probs: &[f64]) -> Result<f64, HeadError> {
    let sum: f64 = probs.iter().sum();
    if probs.len() != SCORE_GRID.len()
        || probs.iter().any(|p| !(*p >= 0.0))
        || !((sum - 1.0).abs() <= 1e-6)
    {
        return Err(HeadError::BadProbabilities { sum });
    }
    let s: f64 = SCORE_GRID.iter().zip(probs).map(|(g, p)| g * p).sum();
    Ok(s.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_examples() {
        assert_eq!(
            composite_score(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
            1.0
        );
        assert!((composite_score(&[1.0 / 6.0; 6]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            composite_score(&[0.0, 0.0, 0.5, 0.5, 0.0, 0.0]).unwrap(),
            0.5
        );
        assert!(composite_score(&[0.5; 6]).is_err());
        assert!(composite_score(&[1.0, 0.0]).is_err());
    }
}
