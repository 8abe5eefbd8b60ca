//! Diffusion maps on point clouds closed under a rotation group.
//!
//! The orbit kernel of a cloud is block-diagonalized by frequency, each block
//! is factored once, and every embedding and distance is then read off the
//! eigenpairs. Brute-force and Monte-Carlo references live in [`oracle`].

pub mod data;
pub mod error;
pub mod group;
pub mod io;
pub mod kernel;
pub mod oracle;
pub mod pipeline;
pub mod dist;
pub mod embed;
pub mod spectral;

pub use error::{Error, Result};
