//! Ricker source wavelets with optional constant phase rotation.

use crate::dsp::analytic_signal;
use crate::error::{Result, SaiiError};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Sampled source pulse, centered and peak-normalized so `max|samples| = 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Wavelet {
    /// Odd-length samples, center sample at index `half_length()`.
    pub samples: Vec<f64>,
    pub dt: f64,
    pub dominant_freq_hz: f64,
    pub phase_deg: f64,
}

impl Wavelet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn half_length(&self) -> usize {
        (self.samples.len() - 1) / 2
    }

    pub fn samples_array(&self) -> Array1<f64> {
        Array1::from_vec(self.samples.clone())
    }
}

/// Builds a Ricker wavelet `w(t) = (1 - 2 pi^2 f^2 t^2) exp(-pi^2 f^2 t^2)`
/// sampled on `t = -half_length*dt ..= half_length*dt`. A non-zero phase is
/// applied as a constant rotation of the analytic signal, after which the pulse
/// is re-normalized to unit peak.
pub fn ricker(dominant_freq_hz: f64, dt: f64, half_length: usize, phase_deg: f64) -> Result<Wavelet> {
    if dt <= 0.0 {
        return Err(SaiiError::Parameter(format!("dt must be positive, got {dt}")));
    }
    let nyquist = 0.5 / dt;
    if dominant_freq_hz <= 0.0 || dominant_freq_hz >= nyquist {
        return Err(SaiiError::Parameter(format!(
            "dominant frequency {dominant_freq_hz} Hz outside (0, {nyquist}) Hz"
        )));
    }
    if half_length < 1 {
        return Err(SaiiError::Parameter("half_length must be >= 1".into()));
    }
    let n = 2 * half_length + 1;
    let mut samples = vec![0.0; n];
    for (i, s) in samples.iter_mut().enumerate() {
        let t = (i as f64 - half_length as f64) * dt;
        let a = PI * dominant_freq_hz * t;
        let a2 = a * a;
        *s = (1.0 - 2.0 * a2) * (-a2).exp();
    }
    if phase_deg != 0.0 {
        let p = phase_deg.to_radians();
        let z = analytic_signal(&samples);
        for (s, zi) in samples.iter_mut().zip(z.iter()) {
            *s = p.cos() * zi.re - p.sin() * zi.im;
        }
    }
    let peak = samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak <= 0.0 {
        return Err(SaiiError::Numerical("degenerate wavelet with zero peak".into()));
    }
    for s in samples.iter_mut() {
        *s /= peak;
    }
    Ok(Wavelet { samples, dt, dominant_freq_hz, phase_deg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::amplitude_spectrum;

    #[test]
    fn zero_phase_is_symmetric_with_unit_center() {
        let w = ricker(30.0, 0.002, 32, 0.0).unwrap();
        let c = w.half_length();
        assert_eq!(w.samples[c], 1.0);
        for k in 1..=c {
            assert!((w.samples[c - k] - w.samples[c + k]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_crossings_bracket_analytic_location() {
        // Solving 1 - 2 pi^2 f^2 t^2 = 0 gives t0 = 1/(pi f sqrt(2)).
        let f = 30.0;
        let dt = 0.001;
        let w = ricker(f, dt, 64, 0.0).unwrap();
        let t0 = 1.0 / (PI * f * 2.0f64.sqrt());
        let c = w.half_length() as f64;
        for sign in [-1.0, 1.0] {
            let idx = c + sign * t0 / dt;
            let lo = idx.floor() as usize;
            let hi = lo + 1;
            assert!(
                w.samples[lo] * w.samples[hi] <= 0.0,
                "no sign change around t = {}",
                sign * t0
            );
        }
    }

    #[test]
    fn spectrum_peaks_at_dominant_frequency() {
        let f = 30.0;
        let dt = 0.002;
        let w = ricker(f, dt, 64, 0.0).unwrap();
        let mut padded = w.samples.clone();
        padded.resize(8192, 0.0);
        let amp = amplitude_spectrum(&padded);
        let argmax = amp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let df = 1.0 / (8192.0 * dt);
        let peak_hz = argmax as f64 * df;
        assert!(
            (peak_hz - f).abs() <= df,
            "spectral peak {peak_hz} Hz not within one bin of {f} Hz"
        );
    }

    #[test]
    fn rotated_wavelet_keeps_unit_peak() {
        for phase in [10.0, 20.0, 30.0, 90.0] {
            let w = ricker(25.0, 0.002, 48, phase).unwrap();
            let peak = w.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            assert!((peak - 1.0).abs() < 1e-12);
            assert_eq!(w.len() % 2, 1);
        }
    }

    #[test]
    fn rejects_frequency_at_or_above_nyquist() {
        assert!(ricker(250.0, 0.002, 32, 0.0).is_err());
        assert!(ricker(400.0, 0.002, 32, 0.0).is_err());
    }
}
