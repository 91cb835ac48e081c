//! Focused attention: scaled dot-product attention whose matrix-wise
//! softmax is supervised by a center-mass cross-entropy loss.
//!
//! The crate is organized bottom-up:
//!
//! * [`numeric`]: dense matrices and stable softmax primitives.
//! * [`attention`]: logits, focus/aggregation weights and their backward pass.
//! * [`focus_loss`]: center-mass, the relation losses and their gradients.
//! * [`supervision`]: target matrices for box and word entities.
//! * [`metrics`]: top-K proposals, recall@K, word importance.
//! * [`synthgen`]: deterministic synthetic datasets.
//! * [`trainer`]: training, evaluation, gradient checks, ablations.

pub mod attention;
pub mod error;
pub mod focus_loss;
pub mod metrics;
pub mod numeric;
pub mod supervision;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
