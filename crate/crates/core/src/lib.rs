//! Projected sensitivity summaries of differentiable representation maps and
//! their comparison on the SPD manifold.
//!
//! A representation map is summarized, for a chosen orthonormal perturbation
//! family `P`, by the dataset average of `(J P)ᵀ(J P)` (or its noise-whitened
//! Fisher counterpart). Two summaries are compared after a trace-scaled lift
//! with the affine-invariant distance, whose value bounds every second-moment
//! task value of one map in terms of the other.

pub mod baselines;
pub mod data;
pub mod probes;
pub mod error;
pub mod gridfisher;
pub mod random;
pub mod repmap;
pub mod retrieval;
pub mod spd;
pub mod summaries;

pub use error::{Error, Result};
