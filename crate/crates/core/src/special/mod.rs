//! Special functions on the real axis: Γ, Mittag-Leffler, Wright/Mainardi, J₀.

pub mod bessel;
pub mod gamma;
pub mod mittag_leffler;
pub mod wright;

pub use bessel::bessel_j0;
pub use gamma::{gamma, ln_gamma, rgamma};
pub use mittag_leffler::{mittag_leffler, mittag_leffler_with, MittagLefflerParams, MlBranch};
pub use wright::{mainardi_phi, phi_moment, Mainardi};
