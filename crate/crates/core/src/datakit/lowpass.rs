//! Trace-wise zero-phase low-pass filtering of impedance models.

use crate::dsp::{butterworth4_lowpass, filtfilt};
use crate::error::Result;
use crate::grid::ImpedanceGrid;
use ndarray::Array2;

/// Applies a zero-phase 4th-order Butterworth low-pass to every trace.
/// Filtering can undershoot near strong contrasts; the output is clamped to a
/// small positive floor so it remains a valid impedance model.
pub fn lowpass_impedance(imp: &ImpedanceGrid, cutoff_hz: f64, dt: f64) -> Result<ImpedanceGrid> {
    let sections = butterworth4_lowpass(cutoff_hz, dt)?;
    let (m, n) = imp.values.dim();
    let floor = imp.min() * 1e-3;
    let mut out = Array2::zeros((m, n));
    for j in 0..n {
        let col: Vec<f64> = imp.values.column(j).to_vec();
        let filtered = filtfilt(&sections, &col);
        for i in 0..m {
            out[[i, j]] = filtered[i].max(floor);
        }
    }
    ImpedanceGrid::new(out, dt, format!("{}:lp{cutoff_hz}", imp.origin_tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{butterworth4_analytic_mag_sq, fft_freqs, fft_real};

    #[test]
    fn constant_trace_is_unchanged() {
        let imp = ImpedanceGrid::new(Array2::from_elem((128, 3), 4200.0), 0.002, "t").unwrap();
        let lp = lowpass_impedance(&imp, 6.0, 0.002).unwrap();
        for &v in lp.values.iter() {
            assert!((v - 4200.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sinusoid_attenuated_by_squared_analytic_response() {
        // DC + 20 Hz sinusoid through a 6 Hz low-pass: the sinusoid amplitude
        // shrinks by the cascade's |H|^2 at 20 Hz (forward-backward pass),
        // DC passes untouched.
        let dt = 0.002;
        let n = 4096;
        let f_sin = 20.0;
        let dc = 5000.0;
        let amp = 500.0;
        let vals = Array2::from_shape_fn((n, 1), |(i, _)| {
            dc + amp * (2.0 * std::f64::consts::PI * f_sin * i as f64 * dt).sin()
        });
        let imp = ImpedanceGrid::new(vals, dt, "t").unwrap();
        let lp = lowpass_impedance(&imp, 6.0, dt).unwrap();

        // project the mid-section onto the sinusoid to estimate amplitude
        let lo = n / 4;
        let hi = 3 * n / 4;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut mean = 0.0;
        for i in lo..hi {
            mean += lp.values[[i, 0]];
        }
        mean /= (hi - lo) as f64;
        for i in lo..hi {
            let s = (2.0 * std::f64::consts::PI * f_sin * i as f64 * dt).sin();
            num += (lp.values[[i, 0]] - mean) * s;
            den += s * s;
        }
        let measured_amp = num / den;
        let expected_amp = amp * butterworth4_analytic_mag_sq(f_sin, 6.0, dt);
        assert!(
            (measured_amp - expected_amp).abs() / expected_amp < 1e-3,
            "measured {measured_amp}, expected {expected_amp}"
        );
        assert!((mean - dc).abs() / dc < 1e-3, "DC shifted to {mean}");
    }

    #[test]
    fn stopband_power_is_suppressed() {
        // Broadband (random) input: power above 2x cutoff drops to <= 1% of
        // the input's power there.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let dt = 0.002;
        let n = 1024;
        let cutoff = 12.0;
        let vals = Array2::from_shape_fn((n, 2), |_| rng.gen_range(3000.0..7000.0));
        let imp = ImpedanceGrid::new(vals, dt, "t").unwrap();
        let lp = lowpass_impedance(&imp, cutoff, dt).unwrap();
        let freqs = fft_freqs(n, dt);
        let mut power_in = 0.0;
        let mut power_out = 0.0;
        for j in 0..2 {
            let orig: Vec<f64> = imp.values.column(j).to_vec();
            let filt: Vec<f64> = lp.values.column(j).to_vec();
            let so = fft_real(&orig);
            let sf = fft_real(&filt);
            for (k, &f) in freqs.iter().enumerate() {
                if f.abs() > 2.0 * cutoff {
                    power_in += so[k].norm_sqr();
                    power_out += sf[k].norm_sqr();
                }
            }
        }
        assert!(power_out <= 0.01 * power_in, "stopband leak {}", power_out / power_in);
    }

    #[test]
    fn cutoff_at_nyquist_rejected() {
        let imp = ImpedanceGrid::new(Array2::from_elem((64, 2), 4000.0), 0.002, "t").unwrap();
        assert!(lowpass_impedance(&imp, 250.0, 0.002).is_err());
        assert!(lowpass_impedance(&imp, 300.0, 0.002).is_err());
    }

    #[test]
    fn output_stays_positive_near_contrasts() {
        let mut vals = Array2::from_elem((256, 2), 1.0);
        for i in 100..256 {
            vals[[i, 0]] = 10000.0;
            vals[[i, 1]] = 10000.0;
        }
        let imp = ImpedanceGrid::new(vals, 0.002, "t").unwrap();
        let lp = lowpass_impedance(&imp, 3.0, 0.002).unwrap();
        assert!(lp.values.iter().all(|&v| v > 0.0));
    }
}
