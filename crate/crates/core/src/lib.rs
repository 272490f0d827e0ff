//! Spatio-temporal surrogates for ensembles of 2-D simulation snapshots.
//!
//! The pipeline: remap raw dumps onto a [`grid::CommonGrid`] and store them as
//! a row-blocked snapshot matrix ([`store`]), decompose it ([`svd`]), model
//! each projection weight with a Gaussian process ([`gp`]) and reconstruct
//! fields at new inputs ([`surrogate`]). The locally-linear variant first
//! groups snapshots with [`cluster`].

pub mod cluster;
pub mod error;
pub mod gp;
pub mod grid;
pub mod manifest;
pub mod meta;
pub mod rng;
pub mod sampling;
pub mod store;
pub mod surrogate;
pub mod svd;
pub mod synthetic;

pub use error::{Error, Result};
