//! Shared signal-processing helpers: FFT wrappers, zero-phase Butterworth
//! low-pass filtering, analytic-signal phase rotation, Gaussian smoothing.

use crate::error::{Result, SaiiError};
use ndarray::{Array1, Array2};
use rustfft::{num_complex::Complex64, FftPlanner};

/// Forward FFT of a real signal.
pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse FFT, returning the real part scaled by 1/N.
pub fn ifft_real(spec: &[Complex64]) -> Vec<f64> {
    let mut buf = spec.to_vec();
    let n = buf.len();
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// FFT bin center frequencies in Hz for an N-point transform at sampling interval dt.
/// Bins above N/2 are the negative frequencies.
pub fn fft_freqs(n: usize, dt: f64) -> Vec<f64> {
    let df = 1.0 / (n as f64 * dt);
    (0..n)
        .map(|k| {
            if k <= n / 2 {
                k as f64 * df
            } else {
                (k as f64 - n as f64) * df
            }
        })
        .collect()
}

/// One-sided amplitude spectrum |X_k| for k = 0..=N/2.
pub fn amplitude_spectrum(x: &[f64]) -> Vec<f64> {
    let spec = fft_real(x);
    spec[..=x.len() / 2].iter().map(|c| c.norm()).collect()
}

/// Discrete analytic signal via the FFT method (Marple). The imaginary part is
/// the Hilbert transform of the input.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut spec = fft_real(x);
    // Double positive frequencies, zero negative ones; DC (and Nyquist for even n)
    // stay untouched.
    if n % 2 == 0 {
        for c in spec.iter_mut().take(n / 2).skip(1) {
            *c *= 2.0;
        }
        for c in spec.iter_mut().skip(n / 2 + 1) {
            *c = Complex64::new(0.0, 0.0);
        }
    } else {
        for c in spec.iter_mut().take((n + 1) / 2).skip(1) {
            *c *= 2.0;
        }
        for c in spec.iter_mut().skip((n + 1) / 2) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|c| c / n as f64).collect()
}

/// Second-order IIR section, direct form II transposed.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3], // a[0] == 1
}

impl Biquad {
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        self.filter_from(x, 0.0, 0.0)
    }

    fn filter_from(&self, x: &[f64], s1_init: f64, s2_init: f64) -> Vec<f64> {
        let mut y = Vec::with_capacity(x.len());
        let (mut s1, mut s2) = (s1_init, s2_init);
        for &xi in x {
            let yi = self.b[0] * xi + s1;
            s1 = self.b[1] * xi - self.a[1] * yi + s2;
            s2 = self.b[2] * xi - self.a[2] * yi;
            y.push(yi);
        }
        y
    }

    /// Filters with the internal state pre-set to the step-response steady
    /// state for the first sample, suppressing the start-up transient.
    pub fn filter_steady(&self, x: &[f64]) -> Vec<f64> {
        if x.is_empty() {
            return Vec::new();
        }
        let g = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[1] + self.a[2]);
        let s1 = (g - self.b[0]) * x[0];
        let s2 = (self.b[2] - self.a[2] * g) * x[0];
        self.filter_from(x, s1, s2)
    }

    /// Squared magnitude response at normalized angular frequency w = 2*pi*f*dt.
    pub fn mag_sq(&self, w: f64) -> f64 {
        let z1 = Complex64::new(w.cos(), -w.sin());
        let z2 = z1 * z1;
        let num = Complex64::new(self.b[0], 0.0) + z1 * self.b[1] + z2 * self.b[2];
        let den = Complex64::new(1.0, 0.0) + z1 * self.a[1] + z2 * self.a[2];
        (num / den).norm_sqr()
    }
}

/// 4th-order digital Butterworth low-pass as two cascaded biquads
/// (bilinear transform with frequency pre-warping, unity DC gain).
pub fn butterworth4_lowpass(cutoff_hz: f64, dt: f64) -> Result<[Biquad; 2]> {
    let nyquist = 0.5 / dt;
    if cutoff_hz <= 0.0 || cutoff_hz >= nyquist {
        return Err(SaiiError::Parameter(format!(
            "cutoff {cutoff_hz} Hz outside (0, {nyquist}) Hz"
        )));
    }
    let c = 1.0 / (std::f64::consts::PI * cutoff_hz * dt).tan();
    // Analog prototype denominators s^2 + q*s + 1 for the two pole pairs.
    let qs = [
        2.0 * (std::f64::consts::PI / 8.0).sin(),
        2.0 * (3.0 * std::f64::consts::PI / 8.0).sin(),
    ];
    let mut sections = [Biquad { b: [0.0; 3], a: [1.0, 0.0, 0.0] }; 2];
    for (i, &q) in qs.iter().enumerate() {
        let d0 = c * c + q * c + 1.0;
        sections[i] = Biquad {
            b: [1.0 / d0, 2.0 / d0, 1.0 / d0],
            a: [1.0, (2.0 - 2.0 * c * c) / d0, (c * c - q * c + 1.0) / d0],
        };
    }
    Ok(sections)
}

/// Closed-form squared magnitude of the 4th-order digital Butterworth low-pass
/// at frequency f: 1 / (1 + (tan(pi f dt)/tan(pi fc dt))^8).
pub fn butterworth4_analytic_mag_sq(f_hz: f64, cutoff_hz: f64, dt: f64) -> f64 {
    let ratio = (std::f64::consts::PI * f_hz * dt).tan() / (std::f64::consts::PI * cutoff_hz * dt).tan();
    1.0 / (1.0 + ratio.powi(8))
}

/// Zero-phase filtering: odd-reflection padding, forward pass, backward pass.
/// The effective amplitude response is the squared magnitude of the cascade.
pub fn filtfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let pad = (n - 1).min(3 * 10 * sections.len().max(1));
    // Odd reflection about the end points keeps level and slope continuous.
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let mut y = ext;
    for s in sections {
        y = s.filter_steady(&y);
    }
    y.reverse();
    for s in sections {
        y = s.filter_steady(&y);
    }
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Gaussian kernel with radius 3*sigma, normalized to unit sum.
pub fn gaussian_kernel(sigma: f64) -> Array1<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k = Array1::zeros(2 * radius + 1);
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        k[i] = (-0.5 * (d / sigma).powi(2)).exp();
    }
    let sum = k.sum();
    k / sum
}

fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian smoothing with reflective boundaries.
pub fn gaussian_smooth2d(x: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let k = gaussian_kernel(sigma);
    let radius = (k.len() - 1) / 2;
    let (m, n) = x.dim();
    let mut tmp = Array2::zeros((m, n));
    for j in 0..n {
        for i in 0..m {
            let mut acc = 0.0;
            for (t, &kv) in k.iter().enumerate() {
                let src = reflect_index(i as isize + t as isize - radius as isize, m);
                acc += kv * x[[src, j]];
            }
            tmp[[i, j]] = acc;
        }
    }
    let mut out = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for (t, &kv) in k.iter().enumerate() {
                let src = reflect_index(j as isize + t as isize - radius as isize, n);
                acc += kv * tmp[[i, src]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_roundtrip() {
        let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
        let back = ifft_real(&fft_real(&x));
        for (a, b) in x.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_signal_real_part_is_input() {
        let x: Vec<f64> = (0..129).map(|i| (i as f64 * 0.21).cos()).collect();
        let z = analytic_signal(&x);
        for (a, b) in x.iter().zip(z.iter()) {
            assert!((a - b.re).abs() < 1e-10);
        }
    }

    #[test]
    fn hilbert_of_cosine_is_sine() {
        // Exactly periodic cosine: Hilbert transform is sin at the same frequency.
        let n = 256;
        let cycles = 16.0;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * cycles * i as f64 / n as f64).cos())
            .collect();
        let z = analytic_signal(&x);
        for (i, zi) in z.iter().enumerate() {
            let expected = (2.0 * std::f64::consts::PI * cycles * i as f64 / n as f64).sin();
            assert!((zi.im - expected).abs() < 1e-10, "sample {i}");
        }
    }

    #[test]
    fn butterworth_dc_gain_is_unity() {
        let sections = butterworth4_lowpass(6.0, 0.002).unwrap();
        let g: f64 = sections.iter().map(|s| s.mag_sq(0.0)).product();
        assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn butterworth_matches_analytic_magnitude() {
        let dt = 0.002;
        let fc = 6.0;
        let sections = butterworth4_lowpass(fc, dt).unwrap();
        for &f in &[1.0, 3.0, 6.0, 12.0, 20.0, 50.0] {
            let w = 2.0 * std::f64::consts::PI * f * dt;
            let measured: f64 = sections.iter().map(|s| s.mag_sq(w)).product();
            let analytic = butterworth4_analytic_mag_sq(f, fc, dt);
            assert!(
                (measured - analytic).abs() < 1e-10,
                "f={f}: {measured} vs {analytic}"
            );
        }
    }

    #[test]
    fn halfpower_at_cutoff() {
        let sections = butterworth4_lowpass(10.0, 0.001).unwrap();
        let w = 2.0 * std::f64::consts::PI * 10.0 * 0.001;
        let g: f64 = sections.iter().map(|s| s.mag_sq(w)).product();
        assert!((g - 0.5).abs() < 1e-9);
    }

    #[test]
    fn filtfilt_preserves_constant() {
        let sections = butterworth4_lowpass(6.0, 0.002).unwrap();
        let x = vec![3.25; 200];
        let y = filtfilt(&sections, &x);
        for v in y {
            assert!((v - 3.25).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_kernel_normalized() {
        let k = gaussian_kernel(2.5);
        assert!((k.sum() - 1.0).abs() < 1e-12);
        assert_eq!(k.len() % 2, 1);
    }

    #[test]
    fn smoothing_preserves_constant_field() {
        let x = Array2::from_elem((10, 12), 7.0);
        let y = gaussian_smooth2d(&x, 1.5);
        for v in y.iter() {
            assert!((v - 7.0).abs() < 1e-12);
        }
    }
}
