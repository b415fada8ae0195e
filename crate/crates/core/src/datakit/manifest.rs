//! Dataset manifest: JSON index over raw `.f32` tensor files.

use crate::error::{Result, SaiiError};
use crate::io::{read_f32_grid, sha256_bytes};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST_FORMAT: &str = "saii-dataset/1";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WaveletParams {
    #[serde(rename = "type")]
    pub kind: String,
    pub f: f64,
    pub dt: f64,
    pub phase_deg: f64,
    pub half_length: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NoiseParams {
    pub snr_db: Option<f64>, // None means noise-free
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetEntry {
    pub impedance_path: String,
    pub lowfreq_path: String,
    pub seismic_path: String,
    pub cutoff_hz: f64,
    pub dominant_freq_hz: f64,
    pub snr_db: Option<f64>,
    pub shape: (usize, usize),
    pub wavelet: WaveletParams,
    pub noise: NoiseParams,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Normalization {
    pub imp_min: f64,
    pub imp_max: f64,
    pub seis_scale: f64,
}

impl Normalization {
    /// Impedance units -> [-1, 1].
    pub fn normalize_imp(&self, v: f64) -> f64 {
        2.0 * (v - self.imp_min) / (self.imp_max - self.imp_min) - 1.0
    }

    pub fn denormalize_imp(&self, v: f64) -> f64 {
        (v + 1.0) * 0.5 * (self.imp_max - self.imp_min) + self.imp_min
    }

    /// Jacobian of `denormalize_imp`, used to chain misfit gradients.
    pub fn denorm_scale(&self) -> f64 {
        0.5 * (self.imp_max - self.imp_min)
    }

    pub fn normalize_seis(&self, v: f64) -> f64 {
        v / self.seis_scale
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub format_version: String,
    pub dt: f64,
    pub normalization: Normalization,
    pub entries: Vec<DatasetEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let bytes = serde_json::to_vec_pretty(self)?;
        crate::io::atomic_write(&path, &bytes)?;
        Ok(path)
    }

    /// Loads and validates: format string, imp_min < imp_max, every referenced
    /// file present with the declared shape.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut m: DatasetManifest = serde_json::from_slice(&bytes)?;
        if m.format_version != MANIFEST_FORMAT {
            return Err(SaiiError::Format(format!(
                "manifest format {:?}, expected {MANIFEST_FORMAT:?}",
                m.format_version
            )));
        }
        if !(m.normalization.imp_min < m.normalization.imp_max) {
            return Err(SaiiError::Format("manifest normalization has imp_min >= imp_max".into()));
        }
        m.root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        for e in &m.entries {
            for rel in [&e.impedance_path, &e.lowfreq_path, &e.seismic_path] {
                let full = m.root.join(rel);
                let meta = std::fs::metadata(&full).map_err(|_| {
                    SaiiError::Format(format!("manifest references missing file {}", full.display()))
                })?;
                let expected = (e.shape.0 * e.shape.1 * 4) as u64;
                if meta.len() != expected {
                    return Err(SaiiError::Format(format!(
                        "{}: {} bytes, expected {expected} for shape {:?}",
                        full.display(),
                        meta.len(),
                        e.shape
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn read_impedance(&self, e: &DatasetEntry) -> Result<Array2<f64>> {
        read_f32_grid(&self.root.join(&e.impedance_path), e.shape.0, e.shape.1)
    }

    pub fn read_lowfreq(&self, e: &DatasetEntry) -> Result<Array2<f64>> {
        read_f32_grid(&self.root.join(&e.lowfreq_path), e.shape.0, e.shape.1)
    }

    pub fn read_seismic(&self, e: &DatasetEntry) -> Result<Array2<f64>> {
        read_f32_grid(&self.root.join(&e.seismic_path), e.shape.0, e.shape.1)
    }

    /// Hash of the manifest JSON (not the tensor payloads).
    pub fn content_hash(&self) -> Result<String> {
        Ok(sha256_bytes(&serde_json::to_vec(self)?))
    }
}
