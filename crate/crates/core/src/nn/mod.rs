//! Minimal neural-network substrate.
//!
//! Feed-forward networks with layer normalization on hidden layers, analytic
//! backpropagation (including input gradients, needed for the action path of
//! `Q(s, a)`), Adam, a squashed-Gaussian policy head, a binary checkpoint
//! format, and a finite-difference gradient checker for tests.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod head;
mod mlp;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use head::{GaussianPolicyHead, SampledAction};
pub use mlp::{Activation, ForwardCache, Grads, Mlp};
