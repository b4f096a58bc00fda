//! Width and depth limits of the neural covariance kernel.
//!
//! `covlab` pairs exact infinite-width / infinite-depth kernel computations
//! ([`theory`]) with Monte Carlo forward passes of randomly initialized
//! networks ([`nets`]) and the studies that compare them ([`experiments`]).
//! Scaling-factor sequences for residual branches live in [`scaling`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod numeric;
pub mod rng;
pub mod scaling;
pub mod nets;
pub mod theory;
pub mod experiments;

pub use error::{Error, Result};
pub use scaling::{ScalingSequence, SeriesSpec, StabilityReport};
pub use theory::{InputPair, KernelTriple};
