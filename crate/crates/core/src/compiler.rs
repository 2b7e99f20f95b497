//! Economic supervision: per-view best grasps, view and point graspness,
//! scene-level assembly with scene collision and point pruning.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    class_of, compose_rotation, local_axis, quantize_rotation, GeometryError, GripperModel,
    GripperVolumes, Mat3, Vec3, ViewSphere,
};
use crate::synth::{
    neighborhoods, transposed_rotations, DenseObjectLabels, LabelEntry, SceneDescription,
    INFEASIBLE,
};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("scene has {expected} objects but {found} label sets were given")]
    MissingLabels { expected: usize, found: usize },
    #[error("labels for object {object} have shape {found}, expected {expected}")]
    ShapeMismatch {
        object: usize,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which friction values count as graspable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Graspability {
    pub threshold_mu: f64,
    /// Accept `mu == threshold_mu` as well.
    pub inclusive: bool,
}

impl Default for Graspability {
    fn default() -> Self {
        Self {
            threshold_mu: 0.8,
            inclusive: false,
        }
    }
}

impl Graspability {
    pub fn new(threshold_mu: f64) -> Self {
        Self {
            threshold_mu,
            ..Self::default()
        }
    }

    pub fn admits(&self, mu: f64) -> bool {
        if self.inclusive {
            mu <= self.threshold_mu
        } else {
            mu < self.threshold_mu
        }
    }

    /// Collision-free, feasible and within the threshold.
    pub fn entry(&self, e: &LabelEntry, gripper: &GripperModel) -> bool {
        e.is_feasible()
            && gripper
                .friction_grid
                .get(e.mu as usize)
                .is_some_and(|&mu| self.admits(mu))
    }

    pub fn record(&self, r: &BestGrasp, gripper: &GripperModel) -> bool {
        r.is_feasible()
            && gripper
                .friction_for_class(r.score_class)
                .is_some_and(|mu| self.admits(mu))
    }
}

/// Best grasp of one view. Indices are 1-based; infeasible records carry
/// `score_class == INFEASIBLE` and zeros elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestGrasp {
    pub angle: u8,
    pub depth: u8,
    pub score_class: u8,
    pub width: f32,
}

impl BestGrasp {
    pub const INFEASIBLE: BestGrasp = BestGrasp {
        angle: 0,
        depth: 0,
        score_class: INFEASIBLE,
        width: 0.0,
    };

    pub fn is_feasible(&self) -> bool {
        self.score_class != INFEASIBLE
    }

    pub fn score(&self) -> Option<f64> {
        self.is_feasible().then_some(self.score_class as f64 * 0.2)
    }
}

/// Compiled labels of one scene, row-major over `(point, view)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EconomicSceneLabels {
    pub n_views: usize,
    pub points: Vec<[f32; 3]>,
    pub point_graspness: Vec<f32>,
    pub view_graspness: Vec<f32>,
    pub best: Vec<BestGrasp>,
}

impl EconomicSceneLabels {
    pub fn empty(n_views: usize) -> Self {
        Self {
            n_views,
            points: Vec::new(),
            point_graspness: Vec::new(),
            view_graspness: Vec::new(),
            best: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> Vec3 {
        let p = self.points[k];
        Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }

    pub fn views(&self, k: usize) -> &[f32] {
        &self.view_graspness[k * self.n_views..(k + 1) * self.n_views]
    }

    pub fn records(&self, k: usize) -> &[BestGrasp] {
        &self.best[k * self.n_views..(k + 1) * self.n_views]
    }

    /// Appends row `k` of `other`.
    fn push_row(&mut self, other: &EconomicSceneLabels, k: usize) {
        self.points.push(other.points[k]);
        self.point_graspness.push(other.point_graspness[k]);
        self.view_graspness.extend_from_slice(other.views(k));
        self.best.extend_from_slice(other.records(k));
    }

    /// Checks array shapes and the graspness invariants. Point graspness is
    /// compared to the view mean at `f32` precision.
    pub fn check(&self) -> Result<(), String> {
        let k = self.points.len();
        if self.point_graspness.len() != k
            || self.view_graspness.len() != k * self.n_views
            || self.best.len() != k * self.n_views
        {
            return Err("array lengths disagree".into());
        }
        for i in 0..k {
            for (g, r) in self.views(i).iter().zip(self.records(i)) {
                if !(0.0..=1.0).contains(g) {
                    return Err(format!("view graspness {g} of point {i} outside [0, 1]"));
                }
                if !r.is_feasible() && *g != 0.0 {
                    return Err(format!("point {i} has graspness on an infeasible view"));
                }
            }
            let mean = mean_f32(self.views(i));
            if (mean - self.point_graspness[i] as f64).abs() > f32::EPSILON as f64 * mean.max(1e-30)
            {
                return Err(format!("point graspness of point {i} is not the view mean"));
            }
        }
        Ok(())
    }
}

fn mean_f32(values: &[f32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
}

/// Lowest-friction collision-free feasible entry of one view's
/// `n_angles × n_depths` slice (angle-major). Ties go to the smaller depth,
/// then the smaller angle.
pub fn best_per_view(entries: &[LabelEntry], n_depths: usize, gripper: &GripperModel) -> BestGrasp {
    let n_angles = entries.len() / n_depths.max(1);
    let mut best: Option<(u8, usize, usize)> = None;
    for d in 0..n_depths {
        for a in 0..n_angles {
            let e = &entries[a * n_depths + d];
            if !e.is_feasible() || e.mu as usize >= gripper.friction_grid.len() {
                continue;
            }
            if best.is_none_or(|(mu, _, _)| e.mu < mu) {
                best = Some((e.mu, a, d));
            }
        }
    }
    match best {
        None => BestGrasp::INFEASIBLE,
        Some((mu, a, d)) => BestGrasp {
            angle: (a + 1) as u8,
            depth: (d + 1) as u8,
            score_class: class_of(gripper.friction_grid[mu as usize]),
            width: entries[a * n_depths + d].width,
        },
    }
}

/// Fraction of the slice that is graspable under `rule`.
pub fn view_graspness(entries: &[LabelEntry], gripper: &GripperModel, rule: &Graspability) -> f64 {
    if entries.is_empty() {
        return 0.0;
    }
    entries.iter().filter(|e| rule.entry(e, gripper)).count() as f64 / entries.len() as f64
}

/// Per scene `(view, angle)` slot, the object-frame slots that quantise to
/// it under `rotation`, ascending.
fn lift_table(
    rotation: &Mat3,
    sphere: &ViewSphere,
    n_angles: usize,
) -> Result<Vec<Vec<usize>>, GeometryError> {
    let mut table = vec![Vec::new(); sphere.n_views() * n_angles];
    for v in 1..=sphere.n_views() {
        for a in 1..=n_angles {
            let rot = rotation * compose_rotation(sphere, v, a, n_angles)?;
            let (sv, sa) = quantize_rotation(&rot, sphere, n_angles);
            table[(sv - 1) * n_angles + sa - 1].push((v - 1) * n_angles + a - 1);
        }
    }
    Ok(table)
}

fn check_shapes(
    scene: &SceneDescription,
    dense: &[DenseObjectLabels],
    sphere: &ViewSphere,
    gripper: &GripperModel,
) -> Result<(), CompileError> {
    if dense.len() != scene.objects.len() {
        return Err(CompileError::MissingLabels {
            expected: scene.objects.len(),
            found: dense.len(),
        });
    }
    for (i, (o, l)) in scene.objects.iter().zip(dense).enumerate() {
        let expected = (
            o.object.len(),
            sphere.n_views(),
            gripper.angle_count,
            gripper.n_depths(),
        );
        let found = (l.n_points, l.n_views, l.n_angles, l.n_depths);
        if expected != found || l.entries.len() != l.n_points * l.per_point() {
            return Err(CompileError::ShapeMismatch {
                object: i,
                expected: format!("{expected:?}"),
                found: format!("{found:?}"),
            });
        }
    }
    Ok(())
}

/// Lifts every object's dense labels into the scene, re-tests each
/// feasible entry against the merged cloud at its stored width, and
/// reduces each scene view to its graspness and best grasp. Keeps every
/// scene point.
pub fn assemble_scene(
    scene: &SceneDescription,
    dense: &[DenseObjectLabels],
    sphere: &ViewSphere,
    gripper: &GripperModel,
    rule: &Graspability,
) -> Result<EconomicSceneLabels, CompileError> {
    gripper.validate()?;
    check_shapes(scene, dense, sphere, gripper)?;
    let (n_views, n_angles) = (sphere.n_views(), gripper.angle_count);
    let tables = scene
        .objects
        .iter()
        .map(|o| lift_table(&o.pose.rotation, sphere, n_angles))
        .collect::<Result<Vec<_>, _>>()?;
    let rotations_t = transposed_rotations(sphere, n_angles)?;
    let neighbors = neighborhoods(&scene.points, &scene.points, gripper.reach());
    let offsets = scene.object_offsets();
    let rows: Vec<(Vec<f32>, Vec<BestGrasp>)> = (0..scene.len())
        .into_par_iter()
        .map(|p| {
            let o = scene.object_ids[p] as usize;
            let labels = dense[o].point(p - offsets[o]);
            scene_point(
                &scene.points[p],
                &neighbors[p],
                &scene.points,
                labels,
                &tables[o],
                &rotations_t,
                gripper,
                rule,
            )
        })
        .collect();
    let mut out = EconomicSceneLabels::empty(n_views);
    for (p, (vg, best)) in rows.into_iter().enumerate() {
        let q = scene.points[p];
        out.points.push([q.x as f32, q.y as f32, q.z as f32]);
        out.point_graspness.push(mean_f32(&vg) as f32);
        out.view_graspness.extend(vg);
        out.best.extend(best);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn scene_point(
    center: &Vec3,
    neighbors: &[usize],
    points: &[Vec3],
    labels: &[LabelEntry],
    table: &[Vec<usize>],
    rotations_t: &[Mat3],
    gripper: &GripperModel,
    rule: &Graspability,
) -> (Vec<f32>, Vec<BestGrasp>) {
    let n_angles = gripper.angle_count;
    let n_depths = gripper.n_depths();
    let n_views = table.len() / n_angles;
    let per_view = n_angles * n_depths;
    let offsets: Vec<Vec3> = neighbors.iter().map(|&j| points[j] - center).collect();
    let half_height = gripper.finger_height / 2.0;
    let mut scratch = vec![LabelEntry::EMPTY; per_view];
    let mut slab: Vec<Vec3> = Vec::new();
    let mut vg = Vec::with_capacity(n_views);
    let mut best = Vec::with_capacity(n_views);
    for v in 0..n_views {
        for a in 0..n_angles {
            let slot = v * n_angles + a;
            let mut any = false;
            for d in 0..n_depths {
                let mut chosen = LabelEntry::EMPTY;
                for &src in &table[slot] {
                    let e = labels[src * n_depths + d];
                    if e.is_feasible() && (!chosen.is_feasible() || e.mu < chosen.mu) {
                        chosen = e;
                    }
                }
                any |= chosen.is_feasible();
                scratch[a * n_depths + d] = chosen;
            }
            if !any {
                continue;
            }
            let rt = &rotations_t[slot];
            slab.clear();
            for q in &offsets {
                let y = local_axis(rt, 1, q);
                if y.abs() < half_height {
                    slab.push(Vec3::new(local_axis(rt, 0, q), y, local_axis(rt, 2, q)));
                }
            }
            for d in 0..n_depths {
                let e = &mut scratch[a * n_depths + d];
                if !e.is_feasible() {
                    continue;
                }
                let vol = GripperVolumes::new(gripper, e.width as f64, gripper.depth_grid[d]);
                if slab.iter().any(|l| vol.collides(l)) {
                    *e = LabelEntry {
                        mu: INFEASIBLE,
                        collide: true,
                        width: 0.0,
                    };
                }
            }
        }
        vg.push(view_graspness(&scratch, gripper, rule) as f32);
        best.push(best_per_view(&scratch, n_depths, gripper));
    }
    (vg, best)
}

/// Keeps the points with at least one graspable best record, in order.
pub fn prune_points(
    labels: &EconomicSceneLabels,
    gripper: &GripperModel,
    rule: &Graspability,
) -> EconomicSceneLabels {
    let mut out = EconomicSceneLabels::empty(labels.n_views);
    for k in 0..labels.len() {
        if labels.records(k).iter().any(|r| rule.record(r, gripper)) {
            out.push_row(labels, k);
        }
    }
    out
}

/// Assembled and pruned labels of one scene, with the point counts.
pub fn compile_scene(
    scene: &SceneDescription,
    dense: &[DenseObjectLabels],
    sphere: &ViewSphere,
    gripper: &GripperModel,
    rule: &Graspability,
) -> Result<EconomicSceneLabels, CompileError> {
    let assembled = assemble_scene(scene, dense, sphere, gripper, rule)?;
    Ok(prune_points(&assembled, gripper, rule))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(mu: u8) -> LabelEntry {
        LabelEntry {
            mu,
            collide: false,
            width: 0.03,
        }
    }

    #[test]
    fn single_feasible_entry_wins() {
        let g = GripperModel::default();
        let mut s = vec![LabelEntry::EMPTY; 48];
        s[5 * 4 + 2] = entry(3);
        let b = best_per_view(&s, 4, &g);
        assert_eq!((b.angle, b.depth, b.score_class), (6, 3, 2));
    }

    #[test]
    fn equal_friction_prefers_shallower_depth() {
        let g = GripperModel::default();
        let mut s = vec![LabelEntry::EMPTY; 48];
        s[4 + 2] = entry(1);
        s[9 * 4 + 1] = entry(1);
        assert_eq!(best_per_view(&s, 4, &g).depth, 2);
        assert_eq!(best_per_view(&s, 4, &g).angle, 10);
    }

    #[test]
    fn colliding_entries_are_ignored() {
        let g = GripperModel::default();
        let mut s = vec![LabelEntry::EMPTY; 48];
        s[0] = LabelEntry {
            mu: 0,
            collide: true,
            width: 0.02,
        };
        assert_eq!(best_per_view(&s, 4, &g), BestGrasp::INFEASIBLE);
        assert_eq!(view_graspness(&s, &g, &Graspability::default()), 0.0);
    }

    #[test]
    fn graspness_counts_fraction() {
        let g = GripperModel::default();
        let mut s = vec![entry(4); 48];
        for e in s.iter_mut().take(12) {
            *e = entry(2);
        }
        assert_eq!(view_graspness(&s, &g, &Graspability::default()), 0.25);
        let all = vec![entry(0); 48];
        assert_eq!(view_graspness(&all, &g, &Graspability::default()), 1.0);
        // 0.7 < 0.8 but 0.9 is not
        assert_eq!(
            view_graspness(&[entry(3), entry(4)], &g, &Graspability::default()),
            0.5
        );
    }

    #[test]
    fn inclusive_threshold() {
        let rule = Graspability {
            threshold_mu: 0.7,
            inclusive: true,
        };
        assert!(rule.admits(0.7));
        assert!(!Graspability::new(0.7).admits(0.7));
    }
}
