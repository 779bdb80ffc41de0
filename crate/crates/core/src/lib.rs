//! Heterogeneous graph embeddings for ICU mortality prediction.
//!
//! The pipeline has four stages:
//!
//! 1. [`ingest`] reads event-level clinical data (or generates synthetic
//!    data with a planted signal) and bins lab events into hourly
//!    patient-hour snapshots counted backwards from death or discharge.
//! 2. [`graph`] materializes a typed graph of patient-hour, lab and
//!    diagnosis nodes linked by *tested*, *diagnosed* and *temporal* edges.
//! 3. [`hgm`] learns per-type projections into a shared latent space plus
//!    relation translation vectors, trained with skip-gram negative
//!    sampling over contexts drawn by [`sampler`].
//! 4. [`cnn`] classifies time × feature matrices built from raw labs,
//!    embeddings, or both, and [`eval`] scores the arms under patient-level
//!    k-fold cross-validation.

pub mod checkpoint;
pub mod cnn;
pub mod error;
pub mod eval;
pub mod graph;
pub mod hgm;
pub mod ingest;
pub mod linalg;
pub mod sampler;
pub mod seed;

pub use error::{Error, Result};
