//! Economic supervision for 6-DoF grasp detection at desk scale.
//!
//! The crate covers the whole label pipeline: a brute-force labeler for
//! procedurally generated scenes ([`synth`]), bit-exact label files
//! ([`label_store`]), compilation of dense labels into per-view best grasps
//! with graspness and point pruning ([`compiler`]), label ambiguity
//! statistics ([`ambiguity`]), input-to-label matching with a selective
//! mask ([`matching`]), a small focal grasp head with analytic gradients
//! ([`head`]) and the top-k friction-sweep AP metric ([`eval`]).

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ambiguity;
pub mod compiler;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod head;
pub mod label_store;
pub mod matching;
pub mod micro;
pub mod pipeline;
pub mod synth;
