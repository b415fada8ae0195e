//! Reflectivity and the same-length convolution operator with exact adjoint.

use super::wavelet::Wavelet;
use crate::error::{Result, SaiiError};
use crate::grid::{ImpedanceGrid, SeismicSection};
use ndarray::Array2;

/// Normalized impedance contrasts `r_j = (z_{j+1} - z_j) / (z_{j+1} + z_j)`.
/// The last coefficient is padded with zero so the output length equals the
/// input length and the operator composition stays shape-preserving.
pub fn reflectivity(imp_trace: &[f64]) -> Result<Vec<f64>> {
    let m = imp_trace.len();
    if m < 2 {
        return Err(SaiiError::Dimension("trace needs at least 2 samples".into()));
    }
    for &z in imp_trace {
        if !(z > 0.0) || !z.is_finite() {
            return Err(SaiiError::Domain(format!("impedance must be positive, found {z}")));
        }
    }
    let mut r = vec![0.0; m];
    for j in 0..m - 1 {
        r[j] = (imp_trace[j + 1] - imp_trace[j]) / (imp_trace[j + 1] + imp_trace[j]);
    }
    Ok(r)
}

/// Applies the transpose of the reflectivity Jacobian to `u`:
/// `g_j = u_j * dr_j/dz_j + u_{j-1} * dr_{j-1}/dz_j`, with
/// `dr_j/dz_j = -2 z_{j+1} / (z_j + z_{j+1})^2` and
/// `dr_j/dz_{j+1} = 2 z_j / (z_j + z_{j+1})^2`.
pub fn reflectivity_jacobian_products(imp_trace: &[f64], u: &[f64]) -> Vec<f64> {
    let m = imp_trace.len();
    let mut g = vec![0.0; m];
    for j in 0..m {
        let mut acc = 0.0;
        if j + 1 < m {
            let s = imp_trace[j] + imp_trace[j + 1];
            acc += u[j] * (-2.0 * imp_trace[j + 1] / (s * s));
        }
        if j >= 1 {
            let s = imp_trace[j - 1] + imp_trace[j];
            acc += u[j - 1] * (2.0 * imp_trace[j - 1] / (s * s));
        }
        g[j] = acc;
    }
    g
}

/// Same-length centered convolution of one trace with the wavelet
/// (the implicit Toeplitz matrix `W[i][j] = w[center + i - j]`).
pub fn convolve_same(wavelet: &Wavelet, trace: &[f64]) -> Vec<f64> {
    let m = trace.len();
    let c = wavelet.half_length() as isize;
    let wlen = wavelet.len() as isize;
    let mut out = vec![0.0; m];
    for i in 0..m as isize {
        let mut acc = 0.0;
        // kernel index k = c + i - j must lie in [0, wlen)
        let j_min = (i + c - wlen + 1).max(0);
        let j_max = (i + c).min(m as isize - 1);
        for j in j_min..=j_max {
            acc += wavelet.samples[(c + i - j) as usize] * trace[j as usize];
        }
        out[i as usize] = acc;
    }
    out
}

/// Exact adjoint of [`convolve_same`] under the Euclidean inner product
/// (correlation with the wavelet).
pub fn correlate_same(wavelet: &Wavelet, trace: &[f64]) -> Vec<f64> {
    let m = trace.len();
    let c = wavelet.half_length() as isize;
    let wlen = wavelet.len() as isize;
    let mut out = vec![0.0; m];
    for j in 0..m as isize {
        let mut acc = 0.0;
        let i_min = (j - c).max(0);
        let i_max = (j - c + wlen - 1).min(m as isize - 1);
        for i in i_min..=i_max {
            acc += wavelet.samples[(c + i - j) as usize] * trace[i as usize];
        }
        out[j as usize] = acc;
    }
    out
}

/// Trace-by-trace convolution forward operator `d = W C(z)`.
#[derive(Debug, Clone)]
pub struct ConvOperator {
    pub wavelet: Wavelet,
    pub output_len: usize,
}

impl ConvOperator {
    pub fn new(wavelet: Wavelet, output_len: usize) -> Self {
        Self { wavelet, output_len }
    }

    /// Applies `W` (convolution) column-by-column to a reflectivity section.
    pub fn apply(&self, reflectivity: &Array2<f64>) -> Array2<f64> {
        let (m, n) = reflectivity.dim();
        let mut out = Array2::zeros((m, n));
        for j in 0..n {
            let col: Vec<f64> = reflectivity.column(j).to_vec();
            let conv = convolve_same(&self.wavelet, &col);
            for i in 0..m {
                out[[i, j]] = conv[i];
            }
        }
        out
    }

    /// Applies `W^T` column-by-column.
    pub fn apply_adjoint(&self, section: &Array2<f64>) -> Array2<f64> {
        let (m, n) = section.dim();
        let mut out = Array2::zeros((m, n));
        for j in 0..n {
            let col: Vec<f64> = section.column(j).to_vec();
            let corr = correlate_same(&self.wavelet, &col);
            for i in 0..m {
                out[[i, j]] = corr[i];
            }
        }
        out
    }

    /// Dense Toeplitz matrix for small-problem oracles and the TV baseline.
    pub fn dense_matrix(&self, m: usize) -> Array2<f64> {
        let c = self.wavelet.half_length() as isize;
        let wlen = self.wavelet.len() as isize;
        let mut w = Array2::zeros((m, m));
        for i in 0..m as isize {
            for j in 0..m as isize {
                let k = c + i - j;
                if k >= 0 && k < wlen {
                    w[[i as usize, j as usize]] = self.wavelet.samples[k as usize];
                }
            }
        }
        w
    }
}

/// Full forward model `f(z) = W C(z)` applied trace-by-trace.
pub fn synthesize(imp: &ImpedanceGrid, wavelet: &Wavelet) -> Result<SeismicSection> {
    let (m, n) = imp.values.dim();
    let mut out = Array2::zeros((m, n));
    for j in 0..n {
        let col: Vec<f64> = imp.values.column(j).to_vec();
        let r = reflectivity(&col)?;
        let d = convolve_same(wavelet, &r);
        for i in 0..m {
            out[[i, j]] = d[i];
        }
    }
    Ok(SeismicSection::new(out, imp.dt))
}

/// Adjoint of the linear map `r -> W r` applied to a section.
pub fn adjoint(section: &SeismicSection, wavelet: &Wavelet) -> Array2<f64> {
    ConvOperator::new(wavelet.clone(), section.time_samples()).apply_adjoint(&section.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seisforward::ricker;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_wavelet() -> Wavelet {
        ricker(30.0, 0.002, 12, 0.0).unwrap()
    }

    #[test]
    fn constant_trace_has_zero_reflectivity() {
        let r = reflectivity(&[2500.0; 16]).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_layer_contrast_is_exact() {
        let r = reflectivity(&[2000.0, 3000.0]).unwrap();
        assert_eq!(r[0], 0.2);
        assert_eq!(r[1], 0.0);
    }

    #[test]
    fn reversing_two_layers_negates_coefficient() {
        let fwd = reflectivity(&[2000.0, 3000.0]).unwrap();
        let rev = reflectivity(&[3000.0, 2000.0]).unwrap();
        assert_eq!(fwd[0], -rev[0]);
    }

    #[test]
    fn reflectivity_magnitude_below_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let trace: Vec<f64> = (0..32).map(|_| rng.gen_range(1.0..20000.0)).collect();
            let r = reflectivity(&trace).unwrap();
            assert!(r.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn rejects_non_positive_trace() {
        assert!(reflectivity(&[2000.0, -1.0, 3000.0]).is_err());
        assert!(reflectivity(&[2000.0, 0.0]).is_err());
    }

    #[test]
    fn zero_contrast_impedance_synthesizes_silence() {
        let imp = ImpedanceGrid::new(Array2::from_elem((32, 4), 3000.0), 0.002, "t").unwrap();
        let d = synthesize(&imp, &test_wavelet()).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_interface_places_scaled_wavelet() {
        let w = test_wavelet();
        let m = 64;
        let k = 30; // interface between rows k and k+1
        let mut vals = Array2::from_elem((m, 1), 2000.0);
        for i in k + 1..m {
            vals[[i, 0]] = 3000.0;
        }
        let imp = ImpedanceGrid::new(vals, 0.002, "t").unwrap();
        let d = synthesize(&imp, &w).unwrap();
        let c = w.half_length() as isize;
        for i in 0..m {
            let kk = c + i as isize - k as isize;
            let expected = if kk >= 0 && kk < w.len() as isize {
                0.2 * w.samples[kk as usize]
            } else {
                0.0
            };
            assert!((d.values[[i, 0]] - expected).abs() < 1e-12, "row {i}");
        }
    }

    #[test]
    fn convolution_matches_dense_toeplitz() {
        let w = test_wavelet();
        let op = ConvOperator::new(w.clone(), 16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dense = op.dense_matrix(16);
        let direct = convolve_same(&w, &r);
        for i in 0..16 {
            let mut acc = 0.0;
            for j in 0..16 {
                acc += dense[[i, j]] * r[j];
            }
            assert!((acc - direct[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_matches_dense_transpose() {
        let w = ricker(35.0, 0.002, 5, 17.0).unwrap();
        let op = ConvOperator::new(w.clone(), 8);
        let dense = op.dense_matrix(8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let direct = correlate_same(&w, &y);
        for j in 0..8 {
            let mut acc = 0.0;
            for i in 0..8 {
                acc += dense[[i, j]] * y[i];
            }
            assert!((acc - direct[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_dot_test() {
        // <W r, y> == <r, W^T y> for random vectors, several wavelet shapes.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(f, hl, phase) in &[(25.0, 8, 0.0), (30.0, 12, 0.0), (35.0, 20, 15.0), (20.0, 40, 30.0)] {
            let w = ricker(f, 0.002, hl, phase).unwrap();
            let m = 48;
            let r: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let wr = convolve_same(&w, &r);
            let wty = correlate_same(&w, &y);
            let lhs: f64 = wr.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            let rhs: f64 = r.iter().zip(wty.iter()).map(|(a, b)| a * b).sum();
            let scale = lhs.abs().max(rhs.abs()).max(1e-30);
            assert!(
                (lhs - rhs).abs() / scale < 1e-10,
                "dot test failed for f={f}, hl={hl}, phase={phase}"
            );
        }
    }

    #[test]
    fn symmetric_wavelet_adjoint_equals_convolution() {
        let w = test_wavelet();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let corr = correlate_same(&w, &y);
        let conv = convolve_same(&w, &y);
        for (a, b) in corr.iter().zip(conv.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn operator_is_linear_in_reflectivity() {
        let w = test_wavelet();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let combo: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| 2.5 * x - 0.7 * y).collect();
        let lhs = convolve_same(&w, &combo);
        let ca = convolve_same(&w, &a);
        let cb = convolve_same(&w, &b);
        for i in 0..32 {
            assert!((lhs[i] - (2.5 * ca[i] - 0.7 * cb[i])).abs() < 1e-12);
        }
    }
}
