//! Exact nested differentiation.
//!
//! Three cooperating pieces, all in 64-bit floating point:
//!
//! * [`jet::Jet2`] — a scalar carrying its value, first derivatives with
//!   respect to up to four inputs, and the diagonal second derivatives with
//!   respect to the spatial inputs. Closed under the arithmetic the equations
//!   need; diagonal second derivatives never require mixed partials.
//! * [`engine`] — the augmented forward/backward pass through the
//!   shared-first-layer network. The forward pass propagates value and
//!   derivative channels in one sweep; the backward pass turns adjoints of
//!   those channels into gradients with respect to every weight and bias.
//! * [`tape`] — a scalar reverse-mode tape for gradients of arbitrary
//!   closures over the parameter vector.
//!
//! Derivative scope is fixed by the equations: first order in time and all
//! spatial coordinates, second order in spatial coordinates only.

pub mod engine;
pub mod jet;
pub mod tape;
pub mod vdual;

pub use engine::{eval_with_input_derivs, DerivRequest, EvalWorkspace, FieldJet};
pub use jet::Jet2;
pub use tape::{loss_param_gradient, Tape, TapeVar};
pub use vdual::{Scalar, VDual};

/// Gradient of a scalar loss with respect to every trainable parameter, in
/// the canonical flat ordering of [`crate::network::ModelParams`].
pub type ParamGradient = Vec<f64>;
