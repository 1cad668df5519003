//! Diffusion reverse sampling with measurement-embedded range/null-space
//! refinement, for sparse-view CT reconstruction.

pub mod cli;
pub mod denoiser;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod nsmi;
pub mod operators;
pub mod phantom;
pub mod sampler;
pub mod schedule;

pub use error::{Error, Result};
pub use image::{Image, Sinogram, ValueRange};
