use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HeadError, Mat, SCORE_GRID};

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub feature_dim: usize,
    pub n_views: usize,
    pub n_angles: usize,
    pub n_depths: usize,
    /// Cylinder radius around the approach axis.
    pub group_radius: f64,
    /// Axial range along the approach axis, relative to the grasp point.
    pub depth_lo: f64,
    pub depth_hi: f64,
    /// Points kept per region, nearest to the axis first.
    pub max_group: usize,
    /// Predicted widths are multiplied by this at inference.
    pub width_scale: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            feature_dim: 32,
            n_views: 300,
            n_angles: 12,
            n_depths: 4,
            group_radius: 0.05,
            depth_lo: -0.01,
            depth_hi: 0.04,
            max_group: 16,
            width_scale: 1.2,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<(), HeadError> {
        let bad = |m: &str| Err(HeadError::InvalidConfig(m.to_string()));
        if self.feature_dim == 0 || self.n_views == 0 || self.n_angles == 0 || self.n_depths == 0 {
            return bad("dimensions must be positive");
        }
        if self.max_group == 0 {
            return bad("max_group must be positive");
        }
        if !(self.group_radius > 0.0) || !(self.depth_lo < self.depth_hi) {
            return bad("group radius must be positive and depth_lo < depth_hi");
        }
        if !(self.width_scale > 0.0) {
            return bad("width scale must be positive");
        }
        Ok(())
    }
}

/// All learnable tensors. Biases are `n×1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `F×3` lift of the normal.
    pub lift_w: Mat,
    pub lift_b: Mat,
    /// `V×F` view decoder.
    pub view_w: Mat,
    pub view_b: Mat,
    /// `F×6` embedding of grasp-frame coordinates and normals added to
    /// region tokens.
    pub pos_w: Mat,
    pub global_q: Mat,
    pub global_bq: Mat,
    pub global_k: Mat,
    pub global_bk: Mat,
    pub global_v: Mat,
    pub global_bv: Mat,
    pub global_o: Mat,
    pub global_bo: Mat,
    pub split_w: [Mat; 4],
    pub split_b: [Mat; 4],
    pub local_q: Mat,
    pub local_bq: Mat,
    pub local_k: Mat,
    pub local_bk: Mat,
    pub local_v: Mat,
    pub local_bv: Mat,
    pub angle_w: Mat,
    pub angle_b: Mat,
    pub depth_w: Mat,
    pub depth_b: Mat,
    pub width_w: Mat,
    pub width_b: Mat,
    pub score_w: Mat,
    pub score_b: Mat,
}

const NAMES: [&str; 35] = [
    "lift_w",
    "lift_b",
    "view_w",
    "view_b",
    "pos_w",
    "global_q",
    "global_bq",
    "global_k",
    "global_bk",
    "global_v",
    "global_bv",
    "global_o",
    "global_bo",
    "split_w0",
    "split_w1",
    "split_w2",
    "split_w3",
    "split_b0",
    "split_b1",
    "split_b2",
    "split_b3",
    "local_q",
    "local_bq",
    "local_k",
    "local_bk",
    "local_v",
    "local_bv",
    "angle_w",
    "angle_b",
    "depth_w",
    "depth_b",
    "width_w",
    "width_b",
    "score_w",
    "score_b",
];

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

pub(crate) fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| gaussian(rng) * scale)
}

impl HeadParams {
    /// Weights drawn from `N(0, 1/fan_in)`, biases zero.
    pub fn init(cfg: &HeadConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = cfg.feature_dim;
        let mut w = |rows: usize, cols: usize| {
            random_matrix(rows, cols, 1.0 / (cols as f64).sqrt(), &mut rng)
        };
        let lift_w = w(f, 3);
        let view_w = w(cfg.n_views, f);
        let pos_w = w(f, 6);
        let (global_q, global_k, global_v, global_o) = (w(f, f), w(f, f), w(f, f), w(f, f));
        let split_w = [w(f, f), w(f, f), w(f, f), w(f, f)];
        let (local_q, local_k, local_v) = (w(f, f), w(f, f), w(f, f));
        let angle_w = w(cfg.n_angles, f);
        let depth_w = w(cfg.n_depths, f);
        let width_w = w(1, f);
        let score_w = w(SCORE_GRID.len(), f);
        let z = |rows: usize| Mat::zeros(rows, 1);
        Self {
            lift_w,
            lift_b: z(f),
            view_w,
            view_b: z(cfg.n_views),
            pos_w,
            global_q,
            global_bq: z(f),
            global_k,
            global_bk: z(f),
            global_v,
            global_bv: z(f),
            global_o,
            global_bo: z(f),
            split_w,
            split_b: [z(f), z(f), z(f), z(f)],
            local_q,
            local_bq: z(f),
            local_k,
            local_bk: z(f),
            local_v,
            local_bv: z(f),
            angle_w,
            angle_b: z(cfg.n_angles),
            depth_w,
            depth_b: z(cfg.n_depths),
            width_w,
            width_b: z(1),
            score_w,
            score_b: z(SCORE_GRID.len()),
        }
    }

    /// Same shapes, all zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Mat> {
        let [s0, s1, s2, s3] = &self.split_w;
        let [b0, b1, b2, b3] = &self.split_b;
        vec![
            &self.lift_w,
            &self.lift_b,
            &self.view_w,
            &self.view_b,
            &self.pos_w,
            &self.global_q,
            &self.global_bq,
            &self.global_k,
            &self.global_bk,
            &self.global_v,
            &self.global_bv,
            &self.global_o,
            &self.global_bo,
            s0,
            s1,
            s2,
            s3,
            b0,
            b1,
            b2,
            b3,
            &self.local_q,
            &self.local_bq,
            &self.local_k,
            &self.local_bk,
            &self.local_v,
            &self.local_bv,
            &self.angle_w,
            &self.angle_b,
            &self.depth_w,
            &self.depth_b,
            &self.width_w,
            &self.width_b,
            &self.score_w,
            &self.score_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let [s0, s1, s2, s3] = &mut self.split_w;
        let [b0, b1, b2, b3] = &mut self.split_b;
        vec![
            &mut self.lift_w,
            &mut self.lift_b,
            &mut self.view_w,
            &mut self.view_b,
            &mut self.pos_w,
            &mut self.global_q,
            &mut self.global_bq,
            &mut self.global_k,
            &mut self.global_bk,
            &mut self.global_v,
            &mut self.global_bv,
            &mut self.global_o,
            &mut self.global_bo,
            s0,
            s1,
            s2,
            s3,
            b0,
            b1,
            b2,
            b3,
            &mut self.local_q,
            &mut self.local_bq,
            &mut self.local_k,
            &mut self.local_bk,
            &mut self.local_v,
            &mut self.local_bv,
            &mut self.angle_w,
            &mut self.angle_b,
            &mut self.depth_w,
            &mut self.depth_b,
            &mut self.width_w,
            &mut self.width_b,
            &mut self.score_w,
            &mut self.score_b,
        ]
    }

    /// Tensor names in [`tensors`](Self::tensors) order.
    pub fn names() -> &'static [&'static str] {
        &NAMES
    }

    /// Fills every bias with small random values (weights untouched).
    pub fn randomize_biases(&mut self, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, t) in Self::names().iter().zip(self.tensors_mut()) {
            if name.contains("_b") {
                let r = random_matrix(t.nrows(), t.ncols(), scale, &mut rng);
                t.copy_from(&r);
            }
        }
    }

    /// `self -= rate · grad`.
    pub fn descend(&mut self, grad: &HeadParams, rate: f64) {
        for (t, g) in self.tensors_mut().into_iter().zip(grad.tensors()) {
            *t -= g * rate;
        }
    }

    pub fn add_assign(&mut self, other: &HeadParams) {
        for (t, g) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *t += g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}
