use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SynthError;
use crate::geometry::Vec3;

/// Analytic primitive, centered at the origin of its object frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Full side lengths along x, y, z.
    Box {
        x: f64,
        y: f64,
        z: f64,
    },
    /// Upright along z.
    Cylinder {
        radius: f64,
        height: f64,
    },
    Sphere {
        radius: f64,
    },
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Box { .. } => "box",
            Shape::Cylinder { .. } => "cylinder",
            Shape::Sphere { .. } => "sphere",
        }
    }

    pub fn dimensions(&self) -> Vec<f64> {
        match *self {
            Shape::Box { x, y, z } => vec![x, y, z],
            Shape::Cylinder { radius, height } => vec![radius, height],
            Shape::Sphere { radius } => vec![radius],
        }
    }

    pub fn from_parts(name: &str, dims: &[f64]) -> Option<Shape> {
        match (name, dims) {
            ("box", &[x, y, z]) => Some(Shape::Box { x, y, z }),
            ("cylinder", &[radius, height]) => Some(Shape::Cylinder { radius, height }),
            ("sphere", &[radius]) => Some(Shape::Sphere { radius }),
            _ => None,
        }
    }

    pub fn surface_area(&self) -> f64 {
        match *self {
            Shape::Box { x, y, z } => 2.0 * (x * y + y * z + x * z),
            Shape::Cylinder { radius, height } => 2.0 * PI * radius * (radius + height),
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
        }
    }

    /// Half extent along z: the lift that rests the shape on `z = 0`.
    pub fn half_height(&self) -> f64 {
        match *self {
            Shape::Box { z, .. } => z / 2.0,
            Shape::Cylinder { height, .. } => height / 2.0,
            Shape::Sphere { radius } => radius,
        }
    }

    /// Radius of the smallest z-axis cylinder containing the shape.
    pub fn footprint_radius(&self) -> f64 {
        match *self {
            Shape::Box { x, y, .. } => 0.5 * (x * x + y * y).sqrt(),
            Shape::Cylinder { radius, .. } => radius,
            Shape::Sphere { radius } => radius,
        }
    }

    /// Signed distance in the object frame (negative inside).
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        match *self {
            Shape::Box { x, y, z } => {
                let q = Vec3::new(
                    p.x.abs() - x / 2.0,
                    p.y.abs() - y / 2.0,
                    p.z.abs() - z / 2.0,
                );
                let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                outside + q.x.max(q.y).max(q.z).min(0.0)
            }
            Shape::Cylinder { radius, height } => {
                let dr = (p.x * p.x + p.y * p.y).sqrt() - radius;
                let dz = p.z.abs() - height / 2.0;
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                outside + dr.max(dz).min(0.0)
            }
            Shape::Sphere { radius } => p.norm() - radius,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.dimensions().iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(SynthError::InvalidDimensions(format!("{self:?}")))
        }
    }
}

/// Surface-sampled primitive with analytic outward normals.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticObject {
    pub shape: Shape,
    pub density: f64,
    pub seed: u64,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl SyntheticObject {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Splits `total` over `weights` by largest remainder, at least one each.
fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let total = total.max(weights.len());
    let spare = total - weights.len();
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * spare as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = spare - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts.iter().map(|c| c + 1).collect()
}

fn unit_gaussian_direction(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let mut v = Vec3::zeros();
        for k in 0..3 {
            // Box-Muller
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            v[k] = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
        }
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Samples `round(area · density)` surface points (at least one per face).
pub fn make_object(shape: Shape, density: f64, seed: u64) -> Result<SyntheticObject, SynthError> {
    shape.validate()?;
    if !(density.is_finite() && density > 0.0) {
        return Err(SynthError::InvalidDimensions(format!("density {density}")));
    }
    let target = (shape.surface_area() * density).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(target);
    let mut normals = Vec::with_capacity(target);
    match shape {
        Shape::Box { x, y, z } => {
            let half = Vec3::new(x / 2.0, y / 2.0, z / 2.0);
            // faces: +x, -x, +y, -y, +z, -z
            let areas = [y * z, y * z, x * z, x * z, x * y, x * y];
            for (face, count) in allocate(target, &areas).into_iter().enumerate() {
                let axis = face / 2;
                let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                let mut n = Vec3::zeros();
                n[axis] = sign;
                for _ in 0..count {
                    let mut p = Vec3::zeros();
                    for k in 0..3 {
                        p[k] = if k == axis {
                            sign * half[k]
                        } else {
                            rng.random_range(-half[k]..=half[k])
                        };
                    }
                    points.push(p);
                    normals.push(n);
                }
            }
        }
        Shape::Cylinder { radius, height } => {
            let cap = PI * radius * radius;
            let counts = allocate(target, &[2.0 * PI * radius * height, cap, cap]);
            for _ in 0..counts[0] {
                let t = rng.random_range(0.0..2.0 * PI);
                let z = rng.random_range(-height / 2.0..=height / 2.0);
                let n = Vec3::new(t.cos(), t.sin(), 0.0);
                points.push(Vec3::new(radius * n.x, radius * n.y, z));
                normals.push(n);
            }
            for (sign, count) in [(1.0, counts[1]), (-1.0, counts[2])] {
                for _ in 0..count {
                    let t = rng.random_range(0.0..2.0 * PI);
                    let r = radius * rng.random::<f64>().sqrt();
                    points.push(Vec3::new(r * t.cos(), r * t.sin(), sign * height / 2.0));
                    normals.push(Vec3::new(0.0, 0.0, sign));
                }
            }
        }
        Shape::Sphere { radius } => {
            for _ in 0..target {
                let n = unit_gaussian_direction(&mut rng);
                points.push(n * radius);
                normals.push(n);
            }
        }
    }
    Ok(SyntheticObject {
        shape,
        density,
        seed,
        points,
        normals,
    })
}
