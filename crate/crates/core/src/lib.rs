//! Distributional soft actor-critic in which both the return distribution and
//! the policy are conditional denoising-diffusion samplers.

pub mod buffer;
pub mod diffusion;
pub mod entropy;
pub mod envs;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod stats;
pub mod tape;
pub mod trainer;
pub mod value;

pub use error::{Error, Result};
