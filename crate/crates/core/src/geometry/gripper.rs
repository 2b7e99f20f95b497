use super::{compose_rotation, Frame, GeometryError, GraspPose, Mat3, Vec3, ViewSphere};

/// Parallel-jaw gripper dimensions and label grids.
#[derive(Debug, Clone, PartialEq)]
pub struct GripperModel {
    pub max_width: f64,
    /// Finger extent along the approach axis.
    pub finger_length: f64,
    /// Finger extent along the closing axis.
    pub finger_thickness: f64,
    /// Finger extent along the gripper `y` axis.
    pub finger_height: f64,
    pub base_depth: f64,
    /// Fingertip offset past the grasp center, one entry per depth index.
    pub depth_grid: Vec<f64>,
    pub angle_count: usize,
    /// Ascending friction coefficients tried by the labeler.
    pub friction_grid: Vec<f64>,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            max_width: 0.1,
            finger_length: 0.06,
            finger_thickness: 0.01,
            finger_height: 0.02,
            base_depth: 0.02,
            depth_grid: vec![0.01, 0.02, 0.03, 0.04],
            angle_count: 12,
            friction_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.1],
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: &str| Err(GeometryError::InvalidGripper(msg.to_string()));
        let lengths = [
            self.max_width,
            self.finger_length,
            self.finger_thickness,
            self.finger_height,
            self.base_depth,
        ];
        if !lengths.iter().all(|l| l.is_finite() && *l > 0.0) {
            return bad("all lengths must be positive");
        }
        if self.angle_count == 0 {
            return bad("angle_count must be positive");
        }
        if self.depth_grid.is_empty() || self.depth_grid.len() > 255 {
            return bad("depth grid needs 1..=255 entries");
        }
        if self.depth_grid.windows(2).any(|w| !(w[0] < w[1])) || !(self.depth_grid[0] > 0.0) {
            return bad("depth grid must be positive and strictly increasing");
        }
        if self.depth_grid[self.depth_grid.len() - 1] > self.finger_length {
            return bad("deepest depth exceeds the finger length");
        }
        if self.friction_grid.is_empty() || self.friction_grid.len() > 254 {
            return bad("friction grid needs 1..=254 entries");
        }
        if self.friction_grid.windows(2).any(|w| !(w[0] < w[1])) || !(self.friction_grid[0] > 0.0) {
            return bad("friction grid must be positive and strictly increasing");
        }
        let mut classes: Vec<u8> = self
            .friction_grid
            .iter()
            .map(|&mu| super::closure::class_of(mu))
            .collect();
        classes.dedup();
        if classes.len() != self.friction_grid.len() {
            return bad("friction grid values must fall into distinct score classes");
        }
        Ok(())
    }

    pub fn n_depths(&self) -> usize {
        self.depth_grid.len()
    }

    /// Index of `mu` on the friction grid (exact to 1e-9).
    pub fn friction_index(&self, mu: f64) -> Option<usize> {
        self.friction_grid
            .iter()
            .position(|&g| (g - mu).abs() <= 1e-9)
    }

    /// Friction coefficient whose score class is `class`.
    pub fn friction_for_class(&self, class: u8) -> Option<f64> {
        self.friction_grid
            .iter()
            .copied()
            .find(|&mu| super::closure::class_of(mu) == class)
    }

    /// Radius of a ball around the grasp center that contains every gripper
    /// volume at any width and depth.
    pub fn reach(&self) -> f64 {
        let x = self.max_width / 2.0 + self.finger_thickness;
        let y = self.finger_height / 2.0;
        let deepest = self.depth_grid.last().copied().unwrap_or(0.0);
        let shallowest = self.depth_grid.first().copied().unwrap_or(0.0);
        let z = deepest
            .abs()
            .max((shallowest - self.finger_length - self.base_depth).abs());
        (x * x + y * y + z * z).sqrt()
    }
}

/// Axis-aligned box in gripper coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl GripperBox {
    /// Strict interior test.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] > self.min[k] && p[k] < self.max[k])
    }

    pub fn centroid(&self) -> Vec3 {
        (self.min + self.max) / 2.0
    }
}

/// The three collision boxes and the closing region for one width and depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperVolumes {
    pub left: GripperBox,
    pub right: GripperBox,
    pub base: GripperBox,
    half_width: f64,
    half_height: f64,
    tip: f64,
    root: f64,
}

impl GripperVolumes {
    pub fn new(gripper: &GripperModel, width: f64, depth_offset: f64) -> Self {
        let hw = width / 2.0;
        let t = gripper.finger_thickness;
        let hh = gripper.finger_height / 2.0;
        let tip = depth_offset;
        let root = depth_offset - gripper.finger_length;
        let left = GripperBox {
            min: Vec3::new(-hw - t, -hh, root),
            max: Vec3::new(-hw, hh, tip),
        };
        let right = GripperBox {
            min: Vec3::new(hw, -hh, root),
            max: Vec3::new(hw + t, hh, tip),
        };
        let base = GripperBox {
            min: Vec3::new(-hw - t, -hh, root - gripper.base_depth),
            max: Vec3::new(hw + t, hh, root),
        };
        Self {
            left,
            right,
            base,
            half_width: hw,
            half_height: hh,
            tip,
            root,
        }
    }

    pub fn collides(&self, local: &Vec3) -> bool {
        self.left.contains(local) || self.right.contains(local) || self.base.contains(local)
    }

    /// Open between the finger faces, closed along `y` and the finger length.
    pub fn in_closing_region(&self, local: &Vec3) -> bool {
        local.x > -self.half_width
            && local.x < self.half_width
            && local.y.abs() <= self.half_height
            && local.z >= self.root
            && local.z <= self.tip
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollisionReport {
    pub colliding: bool,
    pub inner_point_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub point: Vec3,
    pub normal: Vec3,
}

/// Contacts under the left (`-x`) and right (`+x`) finger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPair {
    pub left: Contact,
    pub right: Contact,
}

fn grasp_frame(
    g: &GraspPose,
    sphere: &ViewSphere,
    gripper: &GripperModel,
) -> Result<Mat3, GeometryError> {
    if g.frame != Frame::Scene {
        return Err(GeometryError::WrongFrame {
            expected: Frame::Scene,
            found: g.frame,
        });
    }
    if g.depth == 0 || g.depth > gripper.depth_grid.len() {
        return Err(GeometryError::DepthOutOfRange {
            index: g.depth,
            count: gripper.depth_grid.len(),
        });
    }
    compose_rotation(sphere, g.view, g.angle, gripper.angle_count)
}

/// Tests the posed gripper against a point cloud.
pub fn gripper_collision(
    g: &GraspPose,
    cloud: &[Vec3],
    sphere: &ViewSphere,
    gripper: &GripperModel,
) -> Result<CollisionReport, GeometryError> {
    let rot = grasp_frame(g, sphere, gripper)?;
    let rt = rot.transpose();
    let vol = GripperVolumes::new(gripper, g.width, gripper.depth_grid[g.depth - 1]);
    let mut report = CollisionReport {
        colliding: false,
        inner_point_count: 0,
    };
    for p in cloud {
        let local = to_local(&rt, &(p - g.center));
        if vol.collides(&local) {
            report.colliding = true;
        } else if vol.in_closing_region(&local) {
            report.inner_point_count += 1;
        }
    }
    Ok(report)
}

/// `rtᵀ`-rotated offset with a fixed evaluation order, shared by the
/// labeler fast path so both agree bit-for-bit.
#[inline]
pub(crate) fn to_local(rt: &Mat3, q: &Vec3) -> Vec3 {
    Vec3::new(
        local_axis(rt, 0, q),
        local_axis(rt, 1, q),
        local_axis(rt, 2, q),
    )
}

#[inline]
pub(crate) fn local_axis(rt: &Mat3, row: usize, q: &Vec3) -> f64 {
    rt[(row, 0)] * q.x + rt[(row, 1)] * q.y + rt[(row, 2)] * q.z
}

/// Lexicographic order on `(x, y, z)`, independent of input order.
pub(crate) fn lex_less(a: &Vec3, b: &Vec3) -> bool {
    for k in 0..3 {
        match a[k].total_cmp(&b[k]) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Points within this distance of a finger's extreme point are touched by
/// the flat finger pad at the same time.
pub const CONTACT_BAND: f64 = 1e-3;

/// Chosen contact ids and the extreme
/// closing-axis coordinates on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ContactChoice {
    pub left: usize,
    pub right: usize,
    pub x_min: f64,
    pub x_max: f64,
}

fn line_key(p: &Vec3) -> f64 {
    p.y * p.y + p.z * p.z
}

fn better(candidate: &Vec3, current: &Vec3) -> bool {
    match line_key(candidate).total_cmp(&line_key(current)) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => lex_less(candidate, current),
    }
}

/// Contact search over closing-region points in gripper coordinates.
///
/// Each side (`x < 0`, `x > 0`) contributes the point nearest the closing
/// line through the grasp center among those within [`CONTACT_BAND`] of
/// that side's extreme. `None` when a side is empty. Returned contact
/// indices are the ids carried by the iterator.
pub(crate) fn contact_pair<'a, I>(locals: I) -> Option<ContactChoice>
where
    I: Iterator<Item = (usize, &'a Vec3)> + Clone,
{
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for (_, p) in locals.clone() {
        if p.x < 0.0 {
            x_min = x_min.min(p.x);
        }
        if p.x > 0.0 {
            x_max = x_max.max(p.x);
        }
    }
    if !(x_min < 0.0) || !(x_max > 0.0) {
        return None;
    }
    let mut left: Option<(usize, &Vec3)> = None;
    let mut right: Option<(usize, &Vec3)> = None;
    for (i, p) in locals {
        if p.x < 0.0 && p.x <= x_min + CONTACT_BAND && left.is_none_or(|(_, q)| better(p, q)) {
            left = Some((i, p));
        }
        if p.x > 0.0 && p.x >= x_max - CONTACT_BAND && right.is_none_or(|(_, q)| better(p, q)) {
            right = Some((i, p));
        }
    }
    Some(ContactChoice {
        left: left?.0,
        right: right?.0,
        x_min,
        x_max,
    })
}

/// Points nearest each finger's inner face among those in the closing
/// region, with their normals. `None` when either side of the region is
/// empty. Flat-face ties are resolved as described on [`CONTACT_BAND`].
pub fn find_contacts(
    g: &GraspPose,
    cloud: &[Vec3],
    normals: &[Vec3],
    sphere: &ViewSphere,
    gripper: &GripperModel,
) -> Result<Option<ContactPair>, GeometryError> {
    let rot = grasp_frame(g, sphere, gripper)?;
    let rt = rot.transpose();
    let vol = GripperVolumes::new(gripper, g.width, gripper.depth_grid[g.depth - 1]);
    let locals: Vec<(usize, Vec3)> = cloud
        .iter()
        .enumerate()
        .map(|(i, p)| (i, to_local(&rt, &(p - g.center))))
        .filter(|(_, l)| vol.in_closing_region(l))
        .collect();
    Ok(contact_pair(locals.iter().map(|(i, l)| (*i, l))).map(|c| {
        let (l, r) = (c.left, c.right);
        ContactPair {
            left: Contact {
                point: cloud[l],
                normal: normals[l],
            },
            right: Contact {
                point: cloud[r],
                normal: normals[r],
            },
        }
    }))
}
