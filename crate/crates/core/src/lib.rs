//! Expressive gesture parameters from motion capture, their prediction from
//! speech with small bidirectional recurrent regressors, baseline-controlled
//! evaluation, and percentile-band stimulus editing.

pub mod config;
pub mod constants;
pub mod hand;
pub mod audio;
pub mod mocap;
pub mod corpus;
pub mod params;
pub mod model;
pub mod eval;
pub mod stimuli;

pub use hand::{Hand, HandPair, JointKind, Role};
