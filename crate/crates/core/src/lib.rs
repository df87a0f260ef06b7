//! Physics-informed reconstruction of ocean dynamic fields.
//!
//! The engine trains a parallel shared-first-layer network against scattered
//! observations plus primitive-equation residuals, jointly estimating unknown
//! equation coefficients, and fuses rotated-coordinate sub-learners into one
//! continuous space-time predictor.

pub mod autodiff;
pub mod baseline;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod network;
pub mod oracle;
pub mod physics;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
