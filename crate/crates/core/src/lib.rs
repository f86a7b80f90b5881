//! Skeleton-joint co-attention recurrent networks (SC-RNN) for human motion
//! prediction.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices and a reverse-mode tape.
//! - [`datamodel`]: skeleton sequences, feature maps, joint traversals, CSV
//!   and synthetic data.
//! - [`attention`]: skeleton (temporal) and joint (spatial) attention.
//! - [`cells`]: the two gated recurrent cells, the confidence gate, the full
//!   prediction step, rollouts and checkpoints.
//! - [`loss`]: weighted gram-matrix loss, MSE and mean angle error.
//! - [`training`]: SGD with momentum, the training loop, gradient checking
//!   and ablations.

pub mod attention;
pub mod cells;
pub mod datamodel;
pub mod error;
pub mod loss;
pub mod numerics;
pub mod training;

pub use error::{Error, ErrorCategory, Result};
pub use numerics::Matrix;
