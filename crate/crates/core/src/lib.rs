//! Augmentation-free graph contrastive learning.
//!
//! An online GCN (with projector) and an EMA-tracked target GCN see the same
//! graph. Positives for each node are itself plus its nearest 1-hop
//! neighbors in target space, and the invariant-discriminative loss pulls
//! standardized online projections toward them while pushing both Gram
//! matrices toward the identity.

pub mod error;
pub mod graph;
pub mod par;
pub mod tensor;

pub use error::{Error, Result};
pub mod config;
pub mod encoder;
pub mod positive;
pub mod loss;
pub mod train;
pub mod probe;
pub mod cli;
