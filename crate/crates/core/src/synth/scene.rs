use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{make_object, Shape, SynthError, SyntheticObject};
use crate::geometry::{RigidPose, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedObject {
    pub object: SyntheticObject,
    pub pose: RigidPose,
}

/// Posed objects plus their merged scene-frame cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDescription {
    pub seed: u64,
    pub objects: Vec<PlacedObject>,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub object_ids: Vec<u32>,
}

impl SceneDescription {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Scene-cloud offset of each object's first point.
    pub fn object_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.objects.len());
        let mut acc = 0;
        for o in &self.objects {
            offsets.push(acc);
            acc += o.object.len();
        }
        offsets
    }
}

/// Deepest penetration of any point of `a` into the solid of `b`.
fn penetration(a: &PlacedObject, b: &PlacedObject) -> f64 {
    let to_b = b.pose.inverse();
    a.object
        .points
        .iter()
        .map(|p| {
            let local = to_b.transform_point(&a.pose.transform_point(p));
            (-b.object.shape.signed_distance(&local)).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Merges posed objects into one cloud. Rejects the layout when any object
/// penetrates another by more than `tolerance` meters.
pub fn make_scene(
    objects: Vec<SyntheticObject>,
    poses: Vec<RigidPose>,
    seed: u64,
    tolerance: f64,
) -> Result<SceneDescription, SynthError> {
    if objects.len() != poses.len() {
        return Err(SynthError::LengthMismatch {
            objects: objects.len(),
            poses: poses.len(),
        });
    }
    for pose in &poses {
        RigidPose::new(pose.rotation, pose.translation).map_err(SynthError::Geometry)?;
    }
    let placed: Vec<PlacedObject> = objects
        .into_iter()
        .zip(poses)
        .map(|(object, pose)| PlacedObject { object, pose })
        .collect();
    for i in 0..placed.len() {
        for j in 0..placed.len() {
            if i == j {
                continue;
            }
            let depth = penetration(&placed[i], &placed[j]);
            if depth > tolerance {
                return Err(SynthError::Interpenetration { a: i, b: j, depth });
            }
        }
    }
    let total: usize = placed.iter().map(|o| o.object.len()).sum();
    let mut points = Vec::with_capacity(total);
    let mut normals = Vec::with_capacity(total);
    let mut object_ids = Vec::with_capacity(total);
    for (id, o) in placed.iter().enumerate() {
        for (p, n) in o.object.points.iter().zip(&o.object.normals) {
            points.push(o.pose.transform_point(p));
            normals.push(o.pose.transform_vector(n));
            object_ids.push(id as u32);
        }
    }
    Ok(SceneDescription {
        seed,
        objects: placed,
        points,
        normals,
        object_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Mixed boxes, cylinders and spheres.
    Clutter,
    /// Thin square plates lying flat.
    Plates,
}

/// Procedural scene generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub kind: SceneKind,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Surface points per square meter.
    pub density: f64,
    /// Small objects get a raised density so they have at least this many points.
    pub min_points: usize,
    /// Objects are placed in `[-extent, extent]²`.
    pub extent: f64,
    /// Minimum horizontal gap between object footprints.
    pub gap: f64,
    pub tolerance: f64,
    /// When false every object keeps the identity yaw, so object-frame
    /// grasp labels lift into the scene without re-quantisation.
    pub random_yaw: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            kind: SceneKind::Clutter,
            min_objects: 3,
            max_objects: 5,
            density: 20_000.0,
            min_points: 64,
            extent: 0.25,
            gap: 0.02,
            tolerance: 1e-3,
            random_yaw: true,
        }
    }
}

impl SceneConfig {
    pub fn plates() -> Self {
        Self {
            kind: SceneKind::Plates,
            min_objects: 1,
            max_objects: 2,
            random_yaw: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(SynthError::InvalidConfig("object count range".into()));
        }
        let positive = [self.density, self.extent, self.tolerance];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) || !(self.gap >= 0.0) {
            return Err(SynthError::InvalidConfig(
                "density, extent and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn random_shape(kind: SceneKind, rng: &mut ChaCha8Rng) -> Shape {
    match kind {
        SceneKind::Plates => {
            let side = rng.random_range(0.04..0.06);
            Shape::Box {
                x: side,
                y: side,
                z: rng.random_range(0.008..0.012),
            }
        }
        SceneKind::Clutter => match rng.random_range(0..3) {
            0 => Shape::Box {
                x: rng.random_range(0.02..0.07),
                y: rng.random_range(0.02..0.07),
                z: rng.random_range(0.02..0.07),
            },
            1 => Shape::Cylinder {
                radius: rng.random_range(0.01..0.035),
                height: rng.random_range(0.03..0.08),
            },
            _ => Shape::Sphere {
                radius: rng.random_range(0.015..0.04),
            },
        },
    }
}

/// Rests random objects on the `z = 0` plane, rejecting
/// placements whose footprints come closer than `gap`.
pub fn random_scene(config: &SceneConfig, seed: u64) -> Result<SceneDescription, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(config.min_objects..=config.max_objects);
    let mut objects = Vec::with_capacity(count);
    let mut poses: Vec<RigidPose> = Vec::with_capacity(count);
    let mut footprints: Vec<(f64, f64, f64)> = Vec::with_capacity(count);
    for _ in 0..count {
        let shape = random_shape(config.kind, &mut rng);
        let object_seed = rng.random::<u64>();
        let r = shape.footprint_radius();
        let mut placed = None;
        for _ in 0..1000 {
            let x = rng.random_range(-config.extent..config.extent);
            let y = rng.random_range(-config.extent..config.extent);
            let clear = footprints.iter().all(|&(ox, oy, or)| {
                ((x - ox).powi(2) + (y - oy).powi(2)).sqrt() >= r + or + config.gap
            });
            if clear {
                placed = Some((x, y));
                break;
            }
        }
        let (x, y) = placed.ok_or(SynthError::PlacementFailed)?;
        let yaw = rng.random_range(0.0..PI);
        let yaw = if config.random_yaw { yaw } else { 0.0 };
        footprints.push((x, y, r));
        poses.push(RigidPose::from_yaw(
            yaw,
            Vec3::new(x, y, shape.half_height()),
        ));
        let density = config
            .density
            .max(config.min_points as f64 / shape.surface_area());
        objects.push(make_object(shape, density, object_seed)?);
    }
    make_scene(objects, poses, seed, config.tolerance)
}
