//! Writes a training/test corpus to disk: per patch, one impedance field, one
//! low-frequency condition, one noisy seismic record, plus the manifest.

use super::lowpass::lowpass_impedance;
use super::manifest::{
    DatasetEntry, DatasetManifest, NoiseParams, Normalization, WaveletParams, MANIFEST_FORMAT,
};
use crate::error::{Result, SaiiError};
use crate::grid::ImpedanceGrid;
use crate::io::write_f32_grid;
use crate::seisforward::{add_bandpass_noise, default_noise_band, ricker, synthesize, NoiseSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildOptions {
    pub wavelet_half_length: usize,
    pub wavelet_phase_deg: f64,
    /// Noise band; None derives the wavelet's -20 dB band per entry.
    pub noise_band_hz: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { wavelet_half_length: 32, wavelet_phase_deg: 0.0, noise_band_hz: None, seed: 0 }
    }
}

fn splitmix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct PartialOutputs {
    written: Vec<PathBuf>,
}

impl PartialOutputs {
    fn cleanup(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

/// Builds the corpus. Per-entry randomness (wavelet frequency, cutoff, noise)
/// derives deterministically from `(opts.seed, entry index)`, and file writes
/// are atomic; any failure removes everything written so far.
pub fn build_training_set(
    models: &[ImpedanceGrid],
    wavelet_freqs: &[f64],
    cutoffs: &[f64],
    snr_db: Option<f64>,
    out_dir: &Path,
    opts: &BuildOptions,
) -> Result<DatasetManifest> {
    if models.is_empty() {
        return Err(SaiiError::Parameter("no input models".into()));
    }
    if wavelet_freqs.is_empty() || cutoffs.is_empty() {
        return Err(SaiiError::Parameter("wavelet_freqs and cutoffs must be non-empty".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut partial = PartialOutputs { written: Vec::new() };
    match build_inner(models, wavelet_freqs, cutoffs, snr_db, out_dir, opts, &mut partial) {
        Ok(m) => Ok(m),
        Err(e) => {
            partial.cleanup();
            Err(e)
        }
    }
}

fn build_inner(
    models: &[ImpedanceGrid],
    wavelet_freqs: &[f64],
    cutoffs: &[f64],
    snr_db: Option<f64>,
    out_dir: &Path,
    opts: &BuildOptions,
    partial: &mut PartialOutputs,
) -> Result<DatasetManifest> {
    let dt = models[0].dt;
    let mut entries = Vec::with_capacity(models.len());
    let mut imp_min = f64::INFINITY;
    let mut imp_max = f64::NEG_INFINITY;
    let mut seis_scale = 0.0f64;

    for (idx, model) in models.iter().enumerate() {
        let entry_seed = splitmix(opts.seed, idx as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(entry_seed);
        let freq = wavelet_freqs[rng.gen_range(0..wavelet_freqs.len())];
        let cutoff = cutoffs[rng.gen_range(0..cutoffs.len())];
        let noise_seed = rng.gen::<u64>();

        let wavelet = ricker(freq, dt, opts.wavelet_half_length, opts.wavelet_phase_deg)?;
        let lowfreq = lowpass_impedance(model, cutoff, dt)?;
        let clean = synthesize(model, &wavelet)?;
        let band = opts.noise_band_hz.unwrap_or_else(|| default_noise_band(&wavelet));
        let seismic = match snr_db {
            Some(snr) => add_bandpass_noise(
                &clean,
                &NoiseSpec { snr_db: snr, band_hz: band, seed: noise_seed },
            )?,
            None => clean,
        };

        let stem = format!("entry_{idx:04}");
        let imp_path = format!("{stem}_impedance.f32");
        let low_path = format!("{stem}_lowfreq.f32");
        let seis_path = format!("{stem}_seismic.f32");
        for (rel, arr) in [
            (&imp_path, &model.values),
            (&low_path, &lowfreq.values),
            (&seis_path, &seismic.values),
        ] {
            let full = out_dir.join(rel);
            write_f32_grid(&full, arr)?;
            partial.written.push(full);
        }

        imp_min = imp_min.min(model.min()).min(lowfreq.min());
        imp_max = imp_max.max(model.max()).max(lowfreq.max());
        seis_scale = seis_scale.max(seismic.values.iter().fold(0.0f64, |m, &v| m.max(v.abs())));

        entries.push(DatasetEntry {
            impedance_path: imp_path,
            lowfreq_path: low_path,
            seismic_path: seis_path,
            cutoff_hz: cutoff,
            dominant_freq_hz: freq,
            snr_db,
            shape: model.values.dim(),
            wavelet: WaveletParams {
                kind: "ricker".into(),
                f: freq,
                dt,
                phase_deg: opts.wavelet_phase_deg,
                half_length: opts.wavelet_half_length,
            },
            noise: NoiseParams {
                snr_db,
                band_low_hz: band.0,
                band_high_hz: band.1,
                seed: noise_seed,
            },
        });
    }

    if seis_scale == 0.0 {
        seis_scale = 1.0;
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_FORMAT.into(),
        dt,
        normalization: Normalization { imp_min, imp_max, seis_scale },
        entries,
        root: out_dir.to_path_buf(),
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}
