//! Band-pass noise injection at a target SNR.

use super::wavelet::Wavelet;
use crate::dsp::{amplitude_spectrum, fft_freqs, fft_real, ifft_real};
use crate::error::{Result, SaiiError};
use crate::grid::SeismicSection;
use ndarray::Array2;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Noise recipe: target SNR in dB (`f64::INFINITY` means "no noise"), the
/// pass band in Hz, and the RNG seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub band_hz: (f64, f64),
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self, dt: f64) -> Result<()> {
        let nyquist = 0.5 / dt;
        let (lo, hi) = self.band_hz;
        if !(0.0 <= lo && lo < hi && hi < nyquist) {
            return Err(SaiiError::Parameter(format!(
                "noise band ({lo}, {hi}) Hz invalid for Nyquist {nyquist} Hz"
            )));
        }
        Ok(())
    }
}

/// The wavelet's -20 dB amplitude band, used as the default noise band.
pub fn default_noise_band(wavelet: &Wavelet) -> (f64, f64) {
    let mut padded = wavelet.samples.clone();
    padded.resize(4096, 0.0);
    let amp = amplitude_spectrum(&padded);
    let peak = amp.iter().cloned().fold(0.0f64, f64::max);
    let thresh = peak * 0.1;
    let df = 1.0 / (4096.0 * wavelet.dt);
    let nyquist = 0.5 / wavelet.dt;
    let mut lo = 0.0;
    let mut hi = nyquist * 0.99;
    if let Some(first) = amp.iter().position(|&a| a >= thresh) {
        lo = first as f64 * df;
    }
    if let Some(last) = amp.iter().rposition(|&a| a >= thresh) {
        hi = (last as f64 * df).min(nyquist * 0.99);
    }
    (lo, hi)
}

/// Filters one trace to the band by zeroing FFT bins outside `[lo, hi]` Hz.
fn bandlimit_trace(trace: &[f64], dt: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = trace.len();
    let mut spec = fft_real(trace);
    let freqs = fft_freqs(n, dt);
    for (c, &f) in spec.iter_mut().zip(freqs.iter()) {
        let fa = f.abs();
        if fa < lo || fa > hi {
            *c = rustfft::num_complex::Complex64::new(0.0, 0.0);
        }
    }
    ifft_real(&spec)
}

/// Adds band-limited white Gaussian noise scaled so that
/// `10 log10(||d||^2 / ||noise||^2)` equals `spec.snr_db` exactly.
/// Deterministic given `(seed, shape, spec)`.
pub fn add_bandpass_noise(d: &SeismicSection, spec: &NoiseSpec) -> Result<SeismicSection> {
    if spec.snr_db.is_infinite() && spec.snr_db > 0.0 {
        return Ok(d.clone());
    }
    spec.validate(d.dt)?;
    let signal_energy = d.energy();
    if signal_energy <= 0.0 {
        return Err(SaiiError::Domain(
            "cannot set a finite SNR on a zero-energy section".into(),
        ));
    }
    let (m, n) = d.values.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise = Array2::zeros((m, n));
    for j in 0..n {
        let white: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let limited = bandlimit_trace(&white, d.dt, spec.band_hz.0, spec.band_hz.1);
        for i in 0..m {
            noise[[i, j]] = limited[i];
        }
    }
    let noise_energy: f64 = noise.iter().map(|v| v * v).sum();
    if noise_energy <= 0.0 {
        return Err(SaiiError::Numerical("band-limited noise is identically zero".into()));
    }
    let scale = (signal_energy / noise_energy).sqrt() * 10f64.powf(-spec.snr_db / 20.0);
    let out = &d.values + &(noise * scale);
    Ok(SeismicSection::new(out, d.dt))
}

/// Measured SNR in dB between a clean section and its noisy version.
pub fn measure_snr_db(clean: &SeismicSection, noisy: &SeismicSection) -> f64 {
    let noise_energy: f64 = (&noisy.values - &clean.values).iter().map(|v| v * v).sum();
    10.0 * (clean.energy() / noise_energy).log10()
}
