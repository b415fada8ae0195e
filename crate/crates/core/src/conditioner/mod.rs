//! Projects pixel-space seismic sections onto the latent grid: an orthonormal
//! Haar analysis cascade with a small learnable conv + batch-norm head and a
//! final tanh.

mod haar;
mod shwt;

pub use haar::{hwt2d, ihwt2d, HaarCoeffs};
pub use shwt::{ShwtConfig, ShwtHead};
