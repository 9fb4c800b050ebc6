//! Fundamental pair (Z_t, Y_t) of the operator 𝒟_t + ℒ_x, where 𝒟_t is a
//! memory-kernel time derivative and ℒ_x a Lévy-type nonlocal diffusion,
//! together with a spectral Duhamel solver for (𝒟_t + ℒ_x)u = u^p and
//! numerical checks of decay rates, subordination and blow-up criteria.

pub mod config;
pub mod criteria;
pub mod error;
pub mod heat;
pub mod levy;
pub mod pair;
pub mod quad;
pub mod relaxation;
pub mod report;
pub mod solver;
pub mod spectral;
pub mod special;
pub mod sweep;
pub mod time_kernels;

pub use error::{FracError, Result};
