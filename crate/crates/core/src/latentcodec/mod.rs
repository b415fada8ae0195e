//! Vector-quantized autoencoder: the latent space where diffusion runs.

mod model;
mod quantize;
mod train;

pub use model::{VqCodec, CODEC_FORMAT};
pub use quantize::{quantize, Codebook};
pub use train::{train_codec, CodecTrainReport};

use crate::error::{Result, SaiiError};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Spatial downsampling factor f; the latent grid is input dims / f.
    pub downsample_factor: usize,
    pub latent_channels: usize,
    pub codebook_size: usize,
    pub base_width: usize,
    pub commitment_beta: f64,
    pub use_adversarial: bool,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            downsample_factor: 4,
            latent_channels: 3,
            codebook_size: 512,
            base_width: 32,
            commitment_beta: 0.25,
            use_adversarial: false,
            lr: 1e-3,
            epochs: 60,
            batch_size: 8,
        }
    }
}

impl CodecConfig {
    pub fn levels(&self) -> usize {
        self.downsample_factor.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if ![2, 4, 8].contains(&self.downsample_factor) {
            return Err(SaiiError::Parameter(format!(
                "downsample_factor must be 2, 4 or 8, got {}",
                self.downsample_factor
            )));
        }
        if self.codebook_size < 16 {
            return Err(SaiiError::Parameter("codebook_size must be >= 16".into()));
        }
        if self.commitment_beta <= 0.0 {
            return Err(SaiiError::Parameter("commitment_beta must be > 0".into()));
        }
        if self.latent_channels == 0 || self.base_width == 0 || self.batch_size == 0 {
            return Err(SaiiError::Parameter("channels, width, batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Which pixel-space field a latent encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentSpace {
    Impedance,
    LowFreq,
    Seismic,
}

/// Multi-channel low-resolution tensor in the codec's latent space.
#[derive(Debug, Clone)]
pub struct LatentTensor {
    /// `[channels, height, width]`.
    pub values: Array3<f64>,
    pub space_tag: LatentSpace,
    /// Reflect padding (rows, cols) added before encoding; removed on decode.
    pub pad: (usize, usize),
}

impl LatentTensor {
    pub fn new(values: Array3<f64>, space_tag: LatentSpace) -> Self {
        Self { values, space_tag, pad: (0, 0) }
    }
}
