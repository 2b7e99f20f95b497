use rayon::prelude::*;

use super::SyntheticObject;
use crate::geometry::{
    closure_angle, compose_rotation, contact_pair, local_axis, within_cone, Contact, ContactPair,
    GeometryError, GripperModel, GripperVolumes, Mat3, Vec3, ViewSphere,
};

/// Friction code for entries without a force-closure grasp.
pub const INFEASIBLE: u8 = 255;

/// Stored width is the symmetric contact opening times this factor.
pub const WIDTH_CLEARANCE: f64 = 1.1;

/// One `(point, view, angle, depth)` label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelEntry {
    /// Index into the friction grid, or [`INFEASIBLE`].
    pub mu: u8,
    pub collide: bool,
    pub width: f32,
}

impl LabelEntry {
    pub const EMPTY: LabelEntry = LabelEntry {
        mu: INFEASIBLE,
        collide: false,
        width: 0.0,
    };

    pub fn is_feasible(&self) -> bool {
        !self.collide && self.mu != INFEASIBLE
    }
}

/// Full per-point label grid, row-major over `(point, view, angle, depth)`.
///
/// Indices into this structure are 0-based; grasp poses built from it add 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseObjectLabels {
    pub n_points: usize,
    pub n_views: usize,
    pub n_angles: usize,
    pub n_depths: usize,
    pub entries: Vec<LabelEntry>,
}

impl DenseObjectLabels {
    pub fn empty(n_points: usize, n_views: usize, n_angles: usize, n_depths: usize) -> Self {
        Self {
            n_points,
            n_views,
            n_angles,
            n_depths,
            entries: vec![LabelEntry::EMPTY; n_points * n_views * n_angles * n_depths],
        }
    }

    pub fn per_point(&self) -> usize {
        self.n_views * self.n_angles * self.n_depths
    }

    pub fn per_view(&self) -> usize {
        self.n_angles * self.n_depths
    }

    pub fn index(&self, p: usize, v: usize, a: usize, d: usize) -> usize {
        ((p * self.n_views + v) * self.n_angles + a) * self.n_depths + d
    }

    pub fn entry(&self, p: usize, v: usize, a: usize, d: usize) -> &LabelEntry {
        &self.entries[self.index(p, v, a, d)]
    }

    /// All `n_views · n_angles · n_depths` entries of point `p`.
    pub fn point(&self, p: usize) -> &[LabelEntry] {
        let n = self.per_point();
        &self.entries[p * n..(p + 1) * n]
    }

    /// The `n_angles · n_depths` entries of point `p`, view `v`.
    pub fn view(&self, p: usize, v: usize) -> &[LabelEntry] {
        let n = self.per_view();
        let start = (p * self.n_views + v) * n;
        &self.entries[start..start + n]
    }
}

/// Gripper orientations for every `(view, angle)`, stored transposed.
pub(crate) fn transposed_rotations(
    sphere: &ViewSphere,
    n_angles: usize,
) -> Result<Vec<Mat3>, GeometryError> {
    let mut out = Vec::with_capacity(sphere.n_views() * n_angles);
    for v in 1..=sphere.n_views() {
        for a in 1..=n_angles {
            out.push(compose_rotation(sphere, v, a, n_angles)?.transpose());
        }
    }
    Ok(out)
}

/// Indices within `radius` of each point, ascending.
pub(crate) fn neighborhoods(points: &[Vec3], targets: &[Vec3], radius: f64) -> Vec<Vec<usize>> {
    let r2 = radius * radius;
    targets
        .par_iter()
        .map(|c| {
            points
                .iter()
                .enumerate()
                .filter(|(_, p)| (*p - c).norm_squared() <= r2)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// Lowest friction-grid index at which the pair closes.
pub(crate) fn minimal_friction(
    pair: &ContactPair,
    closing_axis: &Vec3,
    gripper: &GripperModel,
) -> Result<u8, GeometryError> {
    let angle = closure_angle(pair, closing_axis)?;
    Ok(gripper
        .friction_grid
        .iter()
        .position(|mu| within_cone(angle, *mu))
        .map_or(INFEASIBLE, |i| i as u8))
}

/// Labels for one grasp center against a neighbor set. Writes
/// `n_views · n_angles · n_depths` entries into `out`.
///
/// Equivalent to testing every neighbor against [`GripperVolumes`] at the
/// maximum width for each depth, with the closing-axis classification
/// hoisted out of the depth loop.
pub(crate) fn label_center(
    center: &Vec3,
    neighbors: &[usize],
    points: &[Vec3],
    normals: &[Vec3],
    rotations_t: &[Mat3],
    gripper: &GripperModel,
    out: &mut [LabelEntry],
) -> Result<(), GeometryError> {
    let n_depths = gripper.n_depths();
    let volumes: Vec<GripperVolumes> = gripper
        .depth_grid
        .iter()
        .map(|&d| GripperVolumes::new(gripper, gripper.max_width, d))
        .collect();
    let tip: Vec<f64> = volumes.iter().map(|v| v.left.max.z).collect();
    let root: Vec<f64> = volumes.iter().map(|v| v.left.min.z).collect();
    let base_lo: Vec<f64> = volumes.iter().map(|v| v.base.min.z).collect();
    let half_height = volumes[0].left.max.y;
    let half_width = volumes[0].right.min.x;
    let x_limit = volumes[0].right.max.x;
    let mut collide = vec![false; n_depths];
    let mut inner: Vec<(usize, Vec3)> = Vec::new();
    let (mut ox, mut oy, mut oz) = (Vec::new(), Vec::new(), Vec::new());
    for &j in neighbors {
        let q = points[j] - center;
        ox.push(q.x);
        oy.push(q.y);
        oz.push(q.z);
    }
    let mut ys = vec![0.0; neighbors.len()];
    for (va, rt) in rotations_t.iter().enumerate() {
        collide.iter_mut().for_each(|c| *c = false);
        inner.clear();
        let (r0, r1, r2) = (rt[(1, 0)], rt[(1, 1)], rt[(1, 2)]);
        for (((y, a), b), c) in ys.iter_mut().zip(&ox).zip(&oy).zip(&oz) {
            *y = r0 * a + r1 * b + r2 * c;
        }
        for (k, &y) in ys.iter().enumerate() {
            if y.abs() > half_height {
                continue;
            }
            let q = Vec3::new(ox[k], oy[k], oz[k]);
            let x = local_axis(rt, 0, &q);
            if x.abs() >= x_limit {
                continue;
            }
            let z = local_axis(rt, 2, &q);
            let y_open = y.abs() < half_height;
            let finger_x = x.abs() > half_width;
            let mid_x = x.abs() < half_width;
            let mut in_region = false;
            for d in 0..n_depths {
                if y_open
                    && ((finger_x && z > root[d] && z < tip[d]) || (z > base_lo[d] && z < root[d]))
                {
                    collide[d] = true;
                } else if mid_x && z >= root[d] && z <= tip[d] {
                    in_region = true;
                }
            }
            if in_region {
                inner.push((neighbors[k], Vec3::new(x, y, z)));
            }
        }
        let closing_axis = Vec3::new(rt[(0, 0)], rt[(0, 1)], rt[(0, 2)]);
        for d in 0..n_depths {
            let slot = &mut out[va * n_depths + d];
            if collide[d] {
                *slot = LabelEntry {
                    mu: INFEASIBLE,
                    collide: true,
                    width: 0.0,
                };
                continue;
            }
            let (lo, hi) = (root[d], tip[d]);
            let candidates = inner
                .iter()
                .filter(|(_, p)| p.z >= lo && p.z <= hi)
                .map(|(i, p)| (*i, p));
            let Some(choice) = contact_pair(candidates) else {
                *slot = LabelEntry::EMPTY;
                continue;
            };
            let pair = ContactPair {
                left: Contact {
                    point: points[choice.left],
                    normal: normals[choice.left],
                },
                right: Contact {
                    point: points[choice.right],
                    normal: normals[choice.right],
                },
            };
            let opening = 2.0 * choice.x_min.abs().max(choice.x_max) * WIDTH_CLEARANCE;
            *slot = LabelEntry {
                mu: minimal_friction(&pair, &closing_axis, gripper)?,
                collide: false,
                width: opening.min(gripper.max_width) as f32,
            };
        }
    }
    Ok(())
}

/// Brute-force dense labels: every point, view, angle and depth.
///
/// The gripper is opened to its maximum width for the collision test; a
/// collision-free entry with contacts on both sides gets the smallest grid
/// friction at which it closes.
pub fn label_object(
    obj: &SyntheticObject,
    sphere: &ViewSphere,
    gripper: &GripperModel,
) -> Result<DenseObjectLabels, GeometryError> {
    gripper.validate()?;
    let rotations_t = transposed_rotations(sphere, gripper.angle_count)?;
    let neighbors = neighborhoods(&obj.points, &obj.points, gripper.reach());
    let mut labels = DenseObjectLabels::empty(
        obj.len(),
        sphere.n_views(),
        gripper.angle_count,
        gripper.n_depths(),
    );
    let per_point = labels.per_point();
    if per_point == 0 {
        return Ok(labels);
    }
    labels
        .entries
        .par_chunks_mut(per_point)
        .enumerate()
        .try_for_each(|(p, out)| {
            label_center(
                &obj.points[p],
                &neighbors[p],
                &obj.points,
                &obj.normals,
                &rotations_t,
                gripper,
                out,
            )
        })?;
    Ok(labels)
}
