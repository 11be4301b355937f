//! Numerical laboratory for the double-porosity (resonant high-contrast)
//! elliptic problem on random inclusion geometries.
//!
//! The crate is organized as a pipeline:
//! geometry sampling -> rasterized indicator grids -> finite-volume
//! operators -> cell problems and correctors -> epsilon-scale solves and
//! two-scale error diagnostics. [`acceptance`] bundles the verification
//! suite that the CLI `verify` subcommand and the integration tests share.

pub mod acceptance;
pub mod cell;
pub mod dporosity;
pub mod error;
pub mod extlab;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod stochastic;
pub mod svg;

pub use error::{Error, Result};
