//! Convolutional forward physics: Ricker wavelets, reflectivity, the Toeplitz
//! convolution operator with its exact adjoint, band-pass noise injection, and
//! the data-misfit gradient used by model-driven sampling and the baselines.

mod forward;
mod misfit;
mod noise;
mod wavelet;

pub use forward::{reflectivity, reflectivity_jacobian_products, synthesize, adjoint, ConvOperator};
pub use misfit::misfit_and_gradient;
pub use noise::{add_bandpass_noise, default_noise_band, NoiseSpec};
pub use wavelet::{ricker, Wavelet};
