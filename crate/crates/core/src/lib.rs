//! Seismic acoustic impedance inversion toolkit.
//!
//! The crate is organised around the inversion pipeline:
//!
//! - [`datakit`] builds synthetic impedance/seismic training corpora,
//! - [`seisforward`] holds the convolutional forward physics and its adjoint,
//! - [`latentcodec`] is the vector-quantized autoencoder defining the latent space,
//! - [`conditioner`] projects seismic sections onto the latent grid (Haar + conv head),
//! - [`diffcore`] trains the conditional latent denoiser,
//! - [`sampler`] runs DDIM inversion with interval-gated data-consistency resampling,
//! - [`baselines`] provides the comparison methods (2D-TV, supervised and
//!   unsupervised networks),
//! - [`evalkit`] computes metrics and renders figures.
//!
//! Everything is deterministic given a seed; all heavy numerics are `f64`.

pub mod baselines;
pub mod conditioner;
pub mod datakit;
pub mod diffcore;
pub mod dsp;
pub mod error;
pub mod evalkit;
pub mod grid;
pub mod io;
pub mod latentcodec;
pub mod nn;
pub mod sampler;
pub mod seisforward;

pub use error::{Result, SaiiError};
pub use grid::{ImpedanceGrid, SeismicSection};
