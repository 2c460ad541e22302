//! Detection of adversarial inputs from ReLU activation bit vectors.
//!
//! A trained ReLU network partitions its input space into convex polyhedra,
//! each labeled by the pattern of ReLU nodes that fire. This crate trains
//! small fully-connected ReLU networks, generates signed-gradient attacks,
//! extracts the packed activation bit vectors, selects discriminator bits by
//! frequency thresholds, classifies inputs by majority vote against the
//! selected bits, and probes the polyhedral decomposition directly through
//! segment walks and grid censuses.

pub mod attacks;
pub mod bits;
pub mod data;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod net;
pub mod reference;
pub mod stats;

pub use bits::{extract_bits, hamming, layer_slice, BitVector, LayerLayout};
pub use error::{Error, Result};
pub use net::{ActivationTrace, NetworkSpec, TrainConfig, TrainOutcome};
