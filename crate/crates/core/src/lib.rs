//! Active learning-from-demonstration for policy transfer.
//!
//! Starting from a policy trained on a source task, the library adapts it to a
//! related target task by actively querying a limited budget of online episodic
//! expert demonstrations. The crate is organized as:
//!
//! - [`nn`]: minimal feed-forward networks with layer normalization, a
//!   squashed-Gaussian policy head, analytic backprop, and Adam.
//! - [`env`]: desk-scale 2D Push/Carry environments with one-axis target
//!   variants (friction, object size, obstacle, embodiment).
//! - [`replay`]: transition buffers and the balanced demo/rollout sampler.
//! - [`learner`]: SAC, advantage-weighted actor-critic, and behavior cloning.
//! - [`query`]: roll-out TD-uncertainty, shifting history, and the adaptive
//!   query threshold.
//! - [`expert`]: scripted oracle controllers, demonstration pools, and
//!   nearest-initial-state retrieval.
//! - [`harness`]: experiment orchestration, evaluation, logging, aggregation.

pub mod env;
pub mod error;
pub mod expert;
pub mod harness;
pub mod learner;
pub mod nn;
pub mod query;
pub mod replay;

pub use error::{Error, Result};
