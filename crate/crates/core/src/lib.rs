//! Adversarial text generation where generator and auto-encoder states are
//! replaced, step by step, by sparse combinations of word embeddings before
//! they reach a Wasserstein critic.

pub mod corpus;
pub mod diff;
pub mod error;
pub mod eval;
pub mod nets;
pub mod sparse;
pub mod tol;
pub mod train;

pub use error::{Error, Result};
