//! Procedural objects and scenes, and the brute-force dense labeler that
//! serves as ground truth for everything downstream.

mod label;
mod object;
mod scene;

pub use label::{label_object, DenseObjectLabels, LabelEntry, INFEASIBLE, WIDTH_CLEARANCE};
pub use object::{make_object, Shape, SyntheticObject};
pub use scene::{make_scene, random_scene, PlacedObject, SceneConfig, SceneDescription, SceneKind};

pub(crate) use label::{neighborhoods, transposed_rotations};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("{objects} objects but {poses} poses")]
    LengthMismatch { objects: usize, poses: usize },
    #[error("object {a} penetrates object {b} by {depth} m")]
    Interpenetration { a: usize, b: usize, depth: f64 },
    #[error("could not place all objects without overlap")]
    PlacementFailed,
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
