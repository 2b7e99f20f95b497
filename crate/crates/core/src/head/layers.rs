use super::model::FeatureCloud;
use super::{composite_score, HeadError, HeadParams, Mat, WIDTH_UNIT};
use crate::geometry::{frame_from_axis, Vec3};

/// Points of a cylinder around a grasp axis, with points and normals in
/// grasp-frame coordinates (origin at the grasp point, `z` along the axis).
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// Source rows in the grouped cloud.
    pub indices: Vec<usize>,
    pub cloud: FeatureCloud,
}

impl Region {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Points with axial coordinate in `[depth_lo, depth_hi]` and radial
/// distance at most `radius`; when more than `k` qualify, the `k` nearest
/// to the axis (lowest row on ties).
pub fn cylinder_group(
    fc: &FeatureCloud,
    center: &Vec3,
    axis: &Vec3,
    radius: f64,
    depth_lo: f64,
    depth_hi: f64,
    k: usize,
) -> Region {
    let rt = frame_from_axis(axis).transpose();
    let mut members: Vec<(f64, usize, Vec3)> = fc
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let local = rt * (p - center);
            let radial2 = local.x * local.x + local.y * local.y;
            (local.z >= depth_lo && local.z <= depth_hi && radial2 <= radius * radius)
                .then_some((radial2, i, local))
        })
        .collect();
    members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    members.truncate(k);
    let indices: Vec<usize> = members.iter().map(|m| m.1).collect();
    let features = Mat::from_fn(indices.len(), fc.features.ncols(), |r, c| {
        fc.features[(indices[r], c)]
    });
    Region {
        cloud: FeatureCloud {
            points: members.iter().map(|m| m.2).collect(),
            normals: indices.iter().map(|&i| rt * fc.normals[i]).collect(),
            features,
        },
        indices,
    }
}

/// `x·Wᵀ + 1·bᵀ`, one row per token.
fn affine_rows(x: &Mat, w: &Mat, b: &Mat) -> Mat {
    let mut y = x * w.transpose();
    for mut row in y.row_iter_mut() {
        row += b.transpose();
    }
    y
}

fn affine_rows_backward(x: &Mat, w: &Mat, dy: &Mat, dw: &mut Mat, db: &mut Mat) -> Mat {
    *dw += dy.transpose() * x;
    for row in dy.row_iter() {
        *db += row.transpose();
    }
    dy * w
}

fn softmax_rows(z: &Mat) -> Mat {
    let mut a = z.clone();
    for mut row in a.row_iter_mut() {
        let m = row.max();
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
    }
    a
}

fn softmax_rows_backward(a: &Mat, da: &Mat) -> Mat {
    let mut dz = Mat::zeros(a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        let dot = a.row(i).dot(&da.row(i));
        for j in 0..a.ncols() {
            dz[(i, j)] = a[(i, j)] * (da[(i, j)] - dot);
        }
    }
    dz
}

pub(crate) fn softmax(z: &Mat) -> Vec<f64> {
    let m = z.max();
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

struct AttnWeights<'a> {
    q: &'a Mat,
    bq: &'a Mat,
    k: &'a Mat,
    bk: &'a Mat,
    v: &'a Mat,
    bv: &'a Mat,
}

struct AttnGrads<'a> {
    q: &'a mut Mat,
    bq: &'a mut Mat,
    k: &'a mut Mat,
    bk: &'a mut Mat,
    v: &'a mut Mat,
    bv: &'a mut Mat,
}

/// Intermediates of one single-head self-attention.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCache {
    x: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Row-stochastic attention weights.
    pub weights: Mat,
}

/// `softmax(Q·Kᵀ/√F)·V` with affine `Q`, `K`, `V` of the rows of `x`.
fn attention(x: &Mat, w: &AttnWeights) -> (Mat, AttentionCache) {
    let q = affine_rows(x, w.q, w.bq);
    let k = affine_rows(x, w.k, w.bk);
    let v = affine_rows(x, w.v, w.bv);
    let scale = 1.0 / (x.ncols() as f64).sqrt();
    let a = softmax_rows(&((&q * k.transpose()) * scale));
    let o = &a * &v;
    (
        o,
        AttentionCache {
            x: x.clone(),
            q,
            k,
            v,
            weights: a,
        },
    )
}

fn attention_backward(c: &AttentionCache, d_o: &Mat, w: &AttnWeights, g: AttnGrads) -> Mat {
    let scale = 1.0 / (c.x.ncols() as f64).sqrt();
    let da = d_o * c.v.transpose();
    let dv = c.weights.transpose() * d_o;
    let dz = softmax_rows_backward(&c.weights, &da) * scale;
    let dq = &dz * &c.k;
    let dk = dz.transpose() * &c.q;
    affine_rows_backward(&c.x, w.q, &dq, g.q, g.bq)
        + affine_rows_backward(&c.x, w.k, &dk, g.k, g.bk)
        + affine_rows_backward(&c.x, w.v, &dv, g.v, g.bv)
}

fn global_weights(p: &HeadParams) -> AttnWeights<'_> {
    AttnWeights {
        q: &p.global_q,
        bq: &p.global_bq,
        k: &p.global_k,
        bk: &p.global_bk,
        v: &p.global_v,
        bv: &p.global_bv,
    }
}

fn local_weights(p: &HeadParams) -> AttnWeights<'_> {
    AttnWeights {
        q: &p.local_q,
        bq: &p.local_bq,
        k: &p.local_k,
        bk: &p.local_bk,
        v: &p.local_v,
        bv: &p.local_bv,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalCache {
    /// `order[i]` is the input row placed at canonical position `i`.
    order: Vec<usize>,
    attn: AttentionCache,
    o: Mat,
    /// Canonical row holding each column's maximum.
    argmax: Vec<usize>,
}

/// Rows sorted lexicographically by value, so that the computation does
/// not depend on the order tokens arrive in.
fn canonical_order(x: &Mat) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b).iter())
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Self-attention over region tokens (`M×F`), output projection, then
/// max pooling over tokens. Returns the `F×1` fused feature.
pub fn global_attention(tokens: &Mat, p: &HeadParams) -> Result<(Mat, GlobalCache), HeadError> {
    if tokens.nrows() == 0 {
        return Err(HeadError::EmptyRegion);
    }
    let order = canonical_order(tokens);
    let x = tokens.select_rows(order.iter());
    let (o, attn) = attention(&x, &global_weights(p));
    let y = affine_rows(&o, &p.global_o, &p.global_bo);
    let mut fused = Mat::zeros(y.ncols(), 1);
    let mut argmax = Vec::with_capacity(y.ncols());
    for c in 0..y.ncols() {
        let mut best = 0;
        for r in 1..y.nrows() {
            if y[(r, c)] > y[(best, c)] {
                best = r;
            }
        }
        fused[(c, 0)] = y[(best, c)];
        argmax.push(best);
    }
    Ok((
        fused,
        GlobalCache {
            order,
            attn,
            o,
            argmax,
        },
    ))
}

/// Accumulates parameter gradients into `g`; returns `∂/∂tokens` in the
/// caller's row order.
pub fn global_attention_backward(
    c: &GlobalCache,
    d_fused: &Mat,
    p: &HeadParams,
    g: &mut HeadParams,
) -> Mat {
    let mut dy = Mat::zeros(c.o.nrows(), c.o.ncols());
    for (col, &row) in c.argmax.iter().enumerate() {
        dy[(row, col)] = d_fused[(col, 0)];
    }
    let d_o = affine_rows_backward(&c.o, &p.global_o, &dy, &mut g.global_o, &mut g.global_bo);
    let grads = AttnGrads {
        q: &mut g.global_q,
        bq: &mut g.global_bq,
        k: &mut g.global_k,
        bk: &mut g.global_bk,
        v: &mut g.global_v,
        bv: &mut g.global_bv,
    };
    let dx = attention_backward(&c.attn, &d_o, &global_weights(p), grads);
    let mut out = Mat::zeros(dx.nrows(), dx.ncols());
    for (pos, &row) in c.order.iter().enumerate() {
        out.set_row(row, &dx.row(pos));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCache {
    fused: Mat,
    h: Mat,
}

/// Four part features `tanh(W_k·f + b_k)`, one per row of the `4×F` result.
pub fn split_heads(fused: &Mat, p: &HeadParams) -> (Mat, SplitCache) {
    let f = fused.nrows();
    let mut h = Mat::zeros(4, f);
    for k in 0..4 {
        let pre = &p.split_w[k] * fused + &p.split_b[k];
        h.set_row(k, &pre.map(f64::tanh).transpose().row(0));
    }
    (
        h.clone(),
        SplitCache {
            fused: fused.clone(),
            h,
        },
    )
}

pub fn split_heads_backward(c: &SplitCache, dh: &Mat, p: &HeadParams, g: &mut HeadParams) -> Mat {
    let mut d_fused = Mat::zeros(c.fused.nrows(), 1);
    for k in 0..4 {
        let dpre = dh
            .row(k)
            .transpose()
            .component_mul(&c.h.row(k).transpose().map(|v| 1.0 - v * v));
        g.split_w[k] += &dpre * c.fused.transpose();
        g.split_b[k] += &dpre;
        d_fused += p.split_w[k].transpose() * &dpre;
    }
    d_fused
}

/// Self-attention among the four part features with a residual connection.
pub fn local_attention(h: &Mat, p: &HeadParams) -> (Mat, AttentionCache) {
    let (o, cache) = attention(h, &local_weights(p));
    (h + o, cache)
}

pub fn local_attention_backward(
    c: &AttentionCache,
    dr: &Mat,
    p: &HeadParams,
    g: &mut HeadParams,
) -> Mat {
    let grads = AttnGrads {
        q: &mut g.local_q,
        bq: &mut g.local_bq,
        k: &mut g.local_k,
        bk: &mut g.local_bk,
        v: &mut g.local_v,
        bv: &mut g.local_bv,
    };
    dr + attention_backward(c, dr, &local_weights(p), grads)
}

/// Decoder outputs for one grasp point.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub angle_logits: Mat,
    pub depth_logits: Mat,
    pub width: f64,
    pub score_logits: Mat,
    pub score_probs: Vec<f64>,
    pub composite_score: f64,
}

/// Gradient of a scalar objective with respect to the decoder outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedGrad {
    pub angle_logits: Mat,
    pub depth_logits: Mat,
    pub width: f64,
    pub score_logits: Mat,
}

/// Linear decoders on rows 0..4 of the refined features (angle, depth,
/// width, score). The width is in meters.
pub fn decode(r: &Mat, p: &HeadParams) -> Decoded {
    let row = |k: usize| Mat::from_iterator(r.ncols(), 1, r.row(k).iter().copied());
    let angle_logits = &p.angle_w * row(0) + &p.angle_b;
    let depth_logits = &p.depth_w * row(1) + &p.depth_b;
    let width = WIDTH_UNIT * ((&p.width_w * row(2))[(0, 0)] + p.width_b[(0, 0)]);
    let score_logits = &p.score_w * row(3) + &p.score_b;
    let score_probs = softmax(&score_logits);
    let composite = composite_score(&score_probs).expect("softmax output is normalised");
    Decoded {
        angle_logits,
        depth_logits,
        width,
        score_logits,
        score_probs,
        composite_score: composite,
    }
}

pub fn decode_backward(r: &Mat, d: &DecodedGrad, p: &HeadParams, g: &mut HeadParams) -> Mat {
    let mut dr = Mat::zeros(r.nrows(), r.ncols());
    let heads: [(&Mat, &Mat, &mut Mat, &mut Mat); 4] = [
        (&p.angle_w, &d.angle_logits, &mut g.angle_w, &mut g.angle_b),
        (&p.depth_w, &d.depth_logits, &mut g.depth_w, &mut g.depth_b),
        (
            &p.width_w,
            &Mat::from_element(1, 1, WIDTH_UNIT * d.width),
            &mut g.width_w,
            &mut g.width_b,
        ),
        (&p.score_w, &d.score_logits, &mut g.score_w, &mut g.score_b),
    ];
    for (k, (w, dl, gw, gb)) in heads.into_iter().enumerate() {
        *gw += dl * r.row(k);
        *gb += dl;
        dr.set_row(k, &(dl.transpose() * w).row(0));
    }
    dr
}
