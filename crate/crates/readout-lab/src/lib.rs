//! Few-shot readout heads over frozen graph embeddings.
//!
//! The crate is organized around a small dense-matrix core with reverse-mode
//! differentiation ([`numcore`]), two families of readout heads fitted on
//! episode support sets ([`readouts`]), convex-hull diagnostics for prototype
//! geometry ([`geometry`]), calibration measurement ([`calibration`]), graph
//! synthesis and featurization ([`graphkit`]), episodic task sampling
//! ([`episodes`]), a meta-training loop that backpropagates through the
//! closed-form ridge solve ([`metatrain`]), and reproducible experiment
//! drivers ([`experiments`]).
//!
//! Everything is seeded and deterministic: the same configuration and seed
//! produce byte-identical artifacts.

pub mod calibration;
pub mod cli;
pub mod episodes;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod graphkit;
pub mod metatrain;
pub mod numcore;
pub mod readouts;

pub use error::{Error, Result};
