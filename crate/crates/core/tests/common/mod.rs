//! Brute-force reference implementations shared by the integration tests.
//! They are written from the definitions, not from the library code.

#![allow(dead_code)]

use econgrasp::compiler::EconomicSceneLabels;
use econgrasp::geometry::{
    compose_rotation, Frame, GraspPose, GripperModel, RigidPose, Vec3, ViewSphere, CONE_TOLERANCE,
};
use econgrasp::synth::{
    make_object, make_scene, DenseObjectLabels, LabelEntry, SceneDescription, Shape,
    SyntheticObject, INFEASIBLE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const GRID: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 1.1];

/// A random label entry; roughly a third infeasible and a sixth colliding.
pub fn random_entry(r: &mut ChaCha8Rng) -> LabelEntry {
    let mu = if r.random_bool(0.35) {
        INFEASIBLE
    } else {
        r.random_range(0..GRID.len() as u8)
    };
    LabelEntry {
        mu,
        collide: r.random_bool(0.15),
        width: r.random_range(0.0..0.1f32),
    }
}

/// Score class of a grid friction: `round(clamp(1.1 - mu, 0, 1) * 5)`.
pub fn class_oracle(mu: f64) -> u8 {
    let s = (1.1 - mu).clamp(0.0, 1.0);
    (s * 5.0).round() as u8
}

/// `(angle, depth, mu index)`, 1-based, of the exhaustive argmin over a
/// view slice: lowest friction, then lowest depth, then lowest angle.
pub fn best_per_view(
    slice: &[LabelEntry],
    n_angles: usize,
    n_depths: usize,
) -> Option<(usize, usize, u8)> {
    let mut cands = Vec::new();
    for a in 0..n_angles {
        for d in 0..n_depths {
            let e = slice[a * n_depths + d];
            if e.collide || e.mu == INFEASIBLE || e.mu as usize >= GRID.len() {
                continue;
            }
            cands.push((e.mu, d, a));
        }
    }
    cands.sort();
    cands.first().map(|&(mu, d, a)| (a + 1, d + 1, mu))
}

pub fn graspable(e: &LabelEntry, threshold: f64) -> bool {
    !e.collide
        && e.mu != INFEASIBLE
        && (e.mu as usize) < GRID.len()
        && GRID[e.mu as usize] < threshold
}

pub fn view_graspness(slice: &[LabelEntry], threshold: f64) -> f64 {
    let hits = slice.iter().filter(|e| graspable(e, threshold)).count();
    hits as f64 / slice.len() as f64
}

/// Good grasps of one point as `(view, angle, depth)` by nested loops.
pub fn good_grasps(
    point: &[LabelEntry],
    n_views: usize,
    n_angles: usize,
    n_depths: usize,
    threshold: f64,
) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for v in 0..n_views {
        for a in 0..n_angles {
            for d in 0..n_depths {
                if graspable(&point[(v * n_angles + a) * n_depths + d], threshold) {
                    out.push([v + 1, a + 1, d + 1]);
                }
            }
        }
    }
    out
}

/// Population standard deviation via `sqrt(E[x²] - E[x]²)`.
pub fn pop_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m1: f64 = values.iter().sum::<f64>() / n;
    let m2: f64 = values.iter().map(|v| v * v).sum::<f64>() / n;
    (m2 - m1 * m1).max(0.0).sqrt()
}

pub fn column(set: &[[usize; 3]], k: usize) -> Vec<f64> {
    set.iter().map(|t| t[k] as f64).collect()
}

/// Nearest label row within `radius`, lowest row on ties.
pub fn nearest_label(q: &Vec3, labels: &EconomicSceneLabels, radius: f64) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for k in 0..labels.len() {
        let p = labels.points[k];
        let d2 = (0..3).map(|i| (p[i] as f64 - q[i]).powi(2)).sum::<f64>();
        if d2 <= radius * radius && best.is_none_or(|(b, _)| d2 < b) {
            best = Some((d2, k));
        }
    }
    best.map(|(_, k)| k)
}

/// Mean of precision at `k` over the ranked list, recounted for every `k`.
pub fn ap_oracle(successes: &[bool], fixed50: bool) -> f64 {
    let n = successes.len().min(50);
    let slots = if fixed50 { 50 } else { n };
    if slots == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for k in 1..=slots {
        let hits = (0..k).filter(|&i| i < n && successes[i]).count();
        sum += hits as f64 / k as f64;
    }
    sum / slots as f64
}

/// Farthest-point sampling from index 0, ties to the lowest index, with
/// distances recomputed against every chosen point.
pub fn fps_oracle(cloud: &[Vec3], count: usize) -> Vec<usize> {
    let mut chosen = vec![0];
    while chosen.len() < count {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, p) in cloud.iter().enumerate() {
            let d = chosen
                .iter()
                .map(|&c| (p - cloud[c]).norm_squared())
                .fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, i);
            }
        }
        chosen.push(best.1);
    }
    chosen
}

pub fn random_labels(
    r: &mut ChaCha8Rng,
    k: usize,
    n_views: usize,
    extent: f32,
) -> EconomicSceneLabels {
    let mut l = EconomicSceneLabels::empty(n_views);
    for _ in 0..k {
        l.points.push([
            r.random_range(-extent..extent),
            r.random_range(-extent..extent),
            r.random_range(-extent..extent),
        ]);
        l.point_graspness.push(0.0);
        for _ in 0..n_views {
            l.view_graspness.push(0.0);
            l.best.push(econgrasp::compiler::BestGrasp::INFEASIBLE);
        }
    }
    l
}

/// Gripper-frame coordinates of `p` for a scene grasp.
pub fn local(g: &GraspPose, p: &Vec3, sphere: &ViewSphere, gr: &GripperModel) -> Vec3 {
    let rot = compose_rotation(sphere, g.view, g.angle, gr.angle_count).unwrap();
    rot.transpose() * (p - g.center)
}

/// Strict box membership written out from the gripper dimensions.
pub fn collides_oracle(g: &GraspPose, q: &Vec3, gr: &GripperModel) -> bool {
    let hw = g.width / 2.0;
    let (t, hh) = (gr.finger_thickness, gr.finger_height / 2.0);
    let tip = gr.depth_grid[g.depth - 1];
    let root = tip - gr.finger_length;
    let inside = |lo: [f64; 3], hi: [f64; 3]| (0..3).all(|k| q[k] > lo[k] && q[k] < hi[k]);
    inside([-hw - t, -hh, root], [-hw, hh, tip])
        || inside([hw, -hh, root], [hw + t, hh, tip])
        || inside([-hw - t, -hh, root - gr.base_depth], [hw + t, hh, root])
}

fn angle(a: &Vec3, b: &Vec3) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos()
}

/// Grasp success by direct enumeration: no gripper box holds a point,
/// each side of the closing region has a contact (the point nearest the
/// closing line among those within 1 mm of the side's extreme, ties to the
/// lexicographically smaller local point), and both normals and the
/// contact line lie within `atan(mu)` of the closing axis, up to the
/// cone tolerance.
pub fn success_oracle(
    g: &GraspPose,
    scene: &SceneDescription,
    sphere: &ViewSphere,
    gr: &GripperModel,
    mu: f64,
) -> bool {
    let locals: Vec<Vec3> = scene
        .points
        .iter()
        .map(|p| local(g, p, sphere, gr))
        .collect();
    if locals.iter().any(|q| collides_oracle(g, q, gr)) {
        return false;
    }
    let hw = g.width / 2.0;
    let tip = gr.depth_grid[g.depth - 1];
    let inner: Vec<usize> = (0..locals.len())
        .filter(|&i| {
            let q = locals[i];
            q.x > -hw
                && q.x < hw
                && q.y.abs() <= gr.finger_height / 2.0
                && q.z >= tip - gr.finger_length
                && q.z <= tip
        })
        .collect();
    let pick = |left: bool| -> Option<usize> {
        let side: Vec<usize> = inner
            .iter()
            .copied()
            .filter(|&i| {
                if left {
                    locals[i].x < 0.0
                } else {
                    locals[i].x > 0.0
                }
            })
            .collect();
        let extreme = side
            .iter()
            .map(|&i| locals[i].x.abs())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut band: Vec<usize> = side
            .into_iter()
            .filter(|&i| locals[i].x.abs() >= extreme - 1e-3)
            .collect();
        band.sort_by(|&a, &b| {
            let (p, q) = (locals[a], locals[b]);
            (p.y * p.y + p.z * p.z)
                .total_cmp(&(q.y * q.y + q.z * q.z))
                .then(p.x.total_cmp(&q.x))
                .then(p.y.total_cmp(&q.y))
                .then(p.z.total_cmp(&q.z))
        });
        band.first().copied()
    };
    let (Some(l), Some(r)) = (pick(true), pick(false)) else {
        return false;
    };
    let axis: Vec3 = compose_rotation(sphere, g.view, g.angle, gr.angle_count)
        .unwrap()
        .column(0)
        .into_owned();
    let line = scene.points[r] - scene.points[l];
    let worst = angle(&scene.normals[l], &(-axis))
        .max(angle(&scene.normals[r], &axis))
        .max(if line.norm() > 0.0 {
            angle(&line, &axis)
        } else {
            f64::INFINITY
        });
    worst <= mu.atan() + CONE_TOLERANCE
}

/// Descending score, equal scores in input order.
pub fn rank_oracle(preds: &[GraspPose]) -> Vec<GraspPose> {
    let mut out: Vec<GraspPose> = Vec::new();
    for p in preds {
        let at = out
            .iter()
            .position(|q| q.score < p.score)
            .unwrap_or(out.len());
        out.insert(at, p.clone());
    }
    out
}

/// A 5 × 5 × 1 cm plate resting on the origin.
pub fn plate_scene() -> SceneDescription {
    let plate = make_object(
        Shape::Box {
            x: 0.05,
            y: 0.05,
            z: 0.01,
        },
        30_000.0,
        3,
    )
    .unwrap();
    make_scene(
        vec![plate],
        vec![RigidPose::from_yaw(0.0, Vec3::new(0.0, 0.0, 0.005))],
        0,
        1e-3,
    )
    .unwrap()
}

/// Grasps drawn half from the plate's feasible dense labels and half at
/// random, with random scores.
pub fn mixed_grasps(
    r: &mut ChaCha8Rng,
    scene: &SceneDescription,
    labels: &DenseObjectLabels,
    count: usize,
) -> Vec<GraspPose> {
    let feasible: Vec<usize> = (0..labels.entries.len())
        .filter(|&i| labels.entries[i].is_feasible() && !labels.entries[i].collide)
        .collect();
    let (na, nd) = (labels.n_angles, labels.n_depths);
    (0..count)
        .map(|_| {
            if r.random_bool(0.5) && !feasible.is_empty() {
                let i = feasible[r.random_range(0..feasible.len())];
                let per_point = labels.n_views * na * nd;
                GraspPose {
                    frame: Frame::Scene,
                    center: scene.points[i / per_point],
                    view: (i % per_point) / (na * nd) + 1,
                    angle: (i / nd) % na + 1,
                    depth: i % nd + 1,
                    width: (labels.entries[i].width as f64).min(0.1),
                    score: r.random_range(0.0..1.0),
                }
            } else {
                GraspPose {
                    frame: Frame::Scene,
                    center: scene.points[r.random_range(0..scene.len())],
                    view: r.random_range(1..=labels.n_views),
                    angle: r.random_range(1..=na),
                    depth: r.random_range(1..=nd),
                    width: r.random_range(0.005..0.1),
                    score: r.random_range(0.0..1.0),
                }
            }
        })
        .collect()
}

pub fn subsample(mut obj: SyntheticObject, count: usize) -> SyntheticObject {
    assert!(obj.len() >= count, "only {} points", obj.len());
    obj.points.truncate(count);
    obj.normals.truncate(count);
    obj
}

/// A thin plate every point of which is graspable, and a sphere too wide
/// for the gripper placed out of its reach.
pub fn plate_and_ball(
    plate_points: usize,
    ball_points: usize,
) -> (Vec<SyntheticObject>, Vec<RigidPose>) {
    let plate = make_object(
        Shape::Box {
            x: 0.05,
            y: 0.05,
            z: 0.01,
        },
        40_000.0,
        1,
    )
    .unwrap();
    let ball = make_object(Shape::Sphere { radius: 0.08 }, 40_000.0, 2).unwrap();
    (
        vec![subsample(plate, plate_points), subsample(ball, ball_points)],
        vec![
            RigidPose::from_yaw(0.0, Vec3::new(0.0, 0.0, 0.005)),
            RigidPose::from_yaw(0.0, Vec3::new(0.5, 0.0, 0.08)),
        ],
    )
}
