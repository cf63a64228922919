//! Off-policy pixel DQN with early encoder freezing and latent replay.
//!
//! The encoder is trained with the rest of the network until a freeze step;
//! afterwards it is fixed, the replay buffer stores encoder outputs instead
//! of frames, and only the head keeps training. Compute is tracked with a
//! closed-form multiply-add model and replay memory with a byte ledger.
// `!(x > 0)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod agent;
pub mod analysis;
pub mod augment;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
