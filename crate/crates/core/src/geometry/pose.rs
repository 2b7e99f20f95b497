use std::f64::consts::PI;

use super::{GeometryError, GripperModel, Mat3, Vec3, ViewSphere};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    Object,
    Scene,
}

/// A discretised 6-DoF grasp: center, view, in-plane angle, depth, width, score.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspPose {
    pub frame: Frame,
    pub center: Vec3,
    pub view: usize,
    pub angle: usize,
    pub depth: usize,
    pub width: f64,
    pub score: f64,
}

impl GraspPose {
    pub fn validate(
        &self,
        sphere: &ViewSphere,
        gripper: &GripperModel,
    ) -> Result<(), GeometryError> {
        sphere.check(self.view)?;
        if self.angle == 0 || self.angle > gripper.angle_count {
            return Err(GeometryError::AngleOutOfRange {
                index: self.angle,
                count: gripper.angle_count,
            });
        }
        if self.depth == 0 || self.depth > gripper.depth_grid.len() {
            return Err(GeometryError::DepthOutOfRange {
                index: self.depth,
                count: gripper.depth_grid.len(),
            });
        }
        if !(self.width >= 0.0 && self.width <= gripper.max_width) {
            return Err(GeometryError::InvalidGrasp(format!(
                "width {} outside [0, {}]",
                self.width, gripper.max_width
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(GeometryError::InvalidGrasp(format!(
                "score {} outside [0, 1]",
                self.score
            )));
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::InvalidGrasp("non-finite center".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidPose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        let ortho = (rotation.transpose() * rotation - Mat3::identity())
            .abs()
            .max();
        if !(ortho <= 1e-9) || !((rotation.determinant() - 1.0).abs() <= 1e-9) {
            return Err(GeometryError::NotARotation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Rotation by `angle` radians about the world `z` axis, then translation.
    pub fn from_yaw(angle: f64, translation: Vec3) -> Self {
        let (s, c) = angle.sin_cos();
        let rotation = Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Self {
            rotation,
            translation,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Right-handed basis whose third column is `approach`.
///
/// The first column is the world `x` axis (or `y` when `approach` is close
/// to `x`) projected onto the plane orthogonal to `approach`.
pub fn frame_from_axis(approach: &Vec3) -> Mat3 {
    let z = approach.normalize();
    let helper = if z.x.abs() > 0.9 {
        Vec3::y()
    } else {
        Vec3::x()
    };
    let x = (helper - z * helper.dot(&z)).normalize();
    let y = z.cross(&x);
    Mat3::from_columns(&[x, y, z])
}

/// Gripper orientation for a view and in-plane angle index.
///
/// Column 3 is the approach axis `-direction(view)`, column 1 the closing
/// axis. Angle index `a` turns the reference frame by `(a - 1)·π/n_angles`
/// about the approach axis.
pub fn compose_rotation(
    sphere: &ViewSphere,
    view: usize,
    angle: usize,
    n_angles: usize,
) -> Result<Mat3, GeometryError> {
    let dir = sphere.direction(view)?;
    if angle == 0 || angle > n_angles {
        return Err(GeometryError::AngleOutOfRange {
            index: angle,
            count: n_angles,
        });
    }
    let base = frame_from_axis(&(-dir));
    let theta = (angle - 1) as f64 * PI / n_angles as f64;
    let (s, c) = theta.sin_cos();
    let x0 = base.column(0).into_owned();
    let y0 = base.column(1).into_owned();
    let x = x0 * c + y0 * s;
    let y = y0 * c - x0 * s;
    Ok(Mat3::from_columns(&[x, y, -dir]))
}

/// Nearest of the `n_angles` bins on the π-periodic circle; ties go to the
/// lowest index. Returns a 1-based index.
pub(crate) fn quantize_angle(theta: f64, n_angles: usize) -> usize {
    let step = PI / n_angles as f64;
    let t = theta.rem_euclid(PI);
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for k in 0..n_angles {
        let diff = (t - k as f64 * step).abs();
        let dist = diff.min(PI - diff);
        if dist < best_dist {
            best_dist = dist;
            best = k;
        }
    }
    best + 1
}

/// Quantised `(view, angle)` of a gripper orientation.
pub(crate) fn quantize_rotation(
    rot: &Mat3,
    sphere: &ViewSphere,
    n_angles: usize,
) -> (usize, usize) {
    let approach = rot.column(2).into_owned();
    let view = sphere.nearest(&(-approach));
    let base = frame_from_axis(&(-sphere.directions()[view - 1]));
    let closing = rot.column(0).into_owned();
    let theta = closing
        .dot(&base.column(1).into_owned())
        .atan2(closing.dot(&base.column(0).into_owned()));
    (view, quantize_angle(theta, n_angles))
}

/// Lifts an object-frame grasp into the scene frame under `pose`,
/// re-quantising view and angle. Width, depth and score are carried over.
pub fn transform_grasp(
    g: &GraspPose,
    pose: &RigidPose,
    sphere: &ViewSphere,
    n_angles: usize,
) -> Result<GraspPose, GeometryError> {
    if g.frame != Frame::Object {
        return Err(GeometryError::WrongFrame {
            expected: Frame::Object,
            found: g.frame,
        });
    }
    let rot = pose.rotation * compose_rotation(sphere, g.view, g.angle, n_angles)?;
    let (view, angle) = quantize_rotation(&rot, sphere, n_angles);
    Ok(GraspPose {
        frame: Frame::Scene,
        center: pose.transform_point(&g.center),
        view,
        angle,
        depth: g.depth,
        width: g.width,
        score: g.score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_rotation(r: &Mat3) {
        assert!((r.transpose() * r - Mat3::identity()).abs().max() < 1e-9);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn plus_z_view_approaches_down() {
        let s = ViewSphere::generate(1).unwrap();
        let r = compose_rotation(&s, 1, 1, 12).unwrap();
        assert_eq!(r.column(2).into_owned(), Vec3::new(0.0, 0.0, -1.0));
        assert_rotation(&r);
    }

    #[test]
    fn angle_seven_is_quarter_turn() {
        let s = ViewSphere::generate(300).unwrap();
        for v in [1, 42, 150, 300] {
            let r1 = compose_rotation(&s, v, 1, 12).unwrap();
            let r7 = compose_rotation(&s, v, 7, 12).unwrap();
            let axis = Unit::new_normalize(r1.column(2).into_owned());
            let quarter = Rotation3::from_axis_angle(&axis, std::f64::consts::FRAC_PI_2);
            assert!((quarter.matrix() * r1 - r7).abs().max() < 1e-12);
        }
    }

    #[test]
    fn random_rotations_are_orthonormal() {
        let s = ViewSphere::generate(300).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let v = rng.random_range(1..=300);
            let a = rng.random_range(1..=12);
            let r = compose_rotation(&s, v, a, 12).unwrap();
            assert_rotation(&r);
            let dir = s.direction(v).unwrap();
            assert!((r.column(2).into_owned() + dir).norm() < 1e-15);
        }
    }

    #[test]
    fn out_of_range_indices_rejected() {
        let s = ViewSphere::generate(10).unwrap();
        assert!(compose_rotation(&s, 11, 1, 12).is_err());
        assert!(compose_rotation(&s, 1, 0, 12).is_err());
        assert!(compose_rotation(&s, 1, 13, 12).is_err());
    }

    fn grasp(view: usize, angle: usize) -> GraspPose {
        GraspPose {
            frame: Frame::Object,
            center: Vec3::new(0.01, -0.02, 0.03),
            view,
            angle,
            depth: 3,
            width: 0.05,
            score: 0.6,
        }
    }

    #[test]
    fn identity_pose_only_retags() {
        let s = ViewSphere::generate(300).unwrap();
        for v in (1..=300).step_by(7) {
            for a in 1..=12 {
                let g = grasp(v, a);
                let out = transform_grasp(&g, &RigidPose::identity(), &s, 12).unwrap();
                assert_eq!(
                    out,
                    GraspPose {
                        frame: Frame::Scene,
                        ..g
                    }
                );
            }
        }
    }

    #[test]
    fn aligning_rotation_moves_view() {
        let s = ViewSphere::generate(300).unwrap();
        for (v1, v2) in [(3, 200), (17, 18), (299, 1)] {
            let d1 = s.direction(v1).unwrap();
            let d2 = s.direction(v2).unwrap();
            let rot = Rotation3::rotation_between(&d1, &d2).unwrap();
            let pose = RigidPose::new(*rot.matrix(), Vec3::new(0.1, 0.2, 0.0)).unwrap();
            let out = transform_grasp(&grasp(v1, 4), &pose, &s, 12).unwrap();
            assert_eq!(out.view, v2);
            assert_eq!(out.frame, Frame::Scene);
            assert!((out.center - pose.transform_point(&grasp(v1, 4).center)).norm() < 1e-15);
        }
    }

    #[test]
    fn half_turn_twice_restores_view() {
        let s = ViewSphere::generate(300).unwrap();
        let half = RigidPose::from_yaw(std::f64::consts::PI, Vec3::zeros());
        let twice = half.compose(&half);
        for v in 1..=300 {
            let out = transform_grasp(&grasp(v, 5), &twice, &s, 12).unwrap();
            assert_eq!((out.view, out.angle), (v, 5));
        }
    }

    #[test]
    fn scene_frame_input_rejected() {
        let s = ViewSphere::generate(30).unwrap();
        let g = GraspPose {
            frame: Frame::Scene,
            ..grasp(1, 1)
        };
        assert!(transform_grasp(&g, &RigidPose::identity(), &s, 12).is_err());
    }

    #[test]
    fn angle_quantisation_wraps() {
        let step = PI / 12.0;
        assert_eq!(quantize_angle(0.0, 12), 1);
        assert_eq!(quantize_angle(-1e-12, 12), 1);
        assert_eq!(quantize_angle(PI - 1e-12, 12), 1);
        assert_eq!(quantize_angle(3.0 * step + 1e-9, 12), 4);
        // exact midpoint between bins 1 and 2 goes to the lower index
        assert_eq!(quantize_angle(0.5 * step, 12), 1);
    }

    #[test]
    fn rigid_pose_validation() {
        assert!(RigidPose::new(Mat3::identity() * 2.0, Vec3::zeros()).is_err());
        let mirror = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(RigidPose::new(mirror, Vec3::zeros()).is_err());
        let p = RigidPose::from_yaw(0.3, Vec3::new(1.0, 2.0, 3.0));
        let q = p.compose(&p.inverse());
        assert!((q.rotation - Mat3::identity()).abs().max() < 1e-15);
        assert!(q.translation.norm() < 1e-15);
    }
}
