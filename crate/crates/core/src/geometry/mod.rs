//! Deterministic geometry kernel.
//!
//! Everything a grasp label needs to be placed in space: the discrete view
//! sphere, rotation composition from `(view, angle)` indices, rigid poses,
//! the box model of a parallel-jaw gripper and the antipodal force-closure
//! test used by both the labeler and the evaluator.
//!
//! Conventions, frozen here and relied on everywhere else:
//!
//! * view directions point *outward* from the grasped surface; the gripper
//!   approaches along the negated view direction;
//! * in the gripper frame `x` is the closing axis, `z` the approach axis and
//!   `y = z × x`;
//! * view, angle and depth indices are 1-based, matching the label format.

mod closure;
mod gripper;
mod pose;
mod sphere;

pub use closure::{
    closure_angle, force_closure, score_class, score_from_friction, within_cone, CONE_TOLERANCE,
};
pub use gripper::{
    find_contacts, gripper_collision, CollisionReport, Contact, ContactPair, GripperBox,
    GripperModel, GripperVolumes, CONTACT_BAND,
};
pub use pose::{compose_rotation, frame_from_axis, transform_grasp, Frame, GraspPose, RigidPose};
pub use sphere::ViewSphere;

pub(crate) use closure::class_of;
pub(crate) use gripper::{contact_pair, local_axis};
pub(crate) use pose::quantize_rotation;

use thiserror::Error;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("view sphere needs at least one view")]
    EmptySphere,
    #[error("view index {index} outside 1..={count}")]
    ViewOutOfRange { index: usize, count: usize },
    #[error("angle index {index} outside 1..={count}")]
    AngleOutOfRange { index: usize, count: usize },
    #[error("depth index {index} outside 1..={count}")]
    DepthOutOfRange { index: usize, count: usize },
    #[error("rotation is not orthonormal with det +1")]
    NotARotation,
    #[error("normal has length {0}, expected 1")]
    NonUnitNormal(f64),
    #[error("friction coefficient {0} must be positive")]
    NonPositiveFriction(f64),
    #[error("friction coefficient {0} is not on the friction grid")]
    FrictionOffGrid(f64),
    #[error("grasp is in the {found:?} frame, expected {expected:?}")]
    WrongFrame { expected: Frame, found: Frame },
    #[error("invalid gripper model: {0}")]
    InvalidGripper(String),
    #[error("invalid grasp: {0}")]
    InvalidGrasp(String),
}
