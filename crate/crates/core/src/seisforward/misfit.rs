//! Data misfit `J(x) = ||d - f(x)||^2` and its analytic gradient.

use super::forward::{convolve_same, correlate_same, reflectivity, reflectivity_jacobian_products};
use super::wavelet::Wavelet;
use crate::error::{Result, SaiiError};
use crate::grid::SeismicSection;
use ndarray::Array2;

/// Evaluates the misfit and its gradient with respect to the impedance,
/// composing the convolution adjoint with the reflectivity Jacobian.
pub fn misfit_and_gradient(
    imp: &Array2<f64>,
    d: &SeismicSection,
    wavelet: &Wavelet,
) -> Result<(f64, Array2<f64>)> {
    if imp.dim() != d.values.dim() {
        return Err(SaiiError::Dimension(format!(
            "impedance {:?} vs data {:?}",
            imp.dim(),
            d.values.dim()
        )));
    }
    let (m, n) = imp.dim();
    let mut j_total = 0.0;
    let mut grad = Array2::zeros((m, n));
    for jcol in 0..n {
        let z: Vec<f64> = imp.column(jcol).to_vec();
        let r = reflectivity(&z)?;
        let pred = convolve_same(wavelet, &r);
        let mut resid = vec![0.0; m];
        for i in 0..m {
            resid[i] = d.values[[i, jcol]] - pred[i];
            j_total += resid[i] * resid[i];
        }
        // dJ/dz = -2 C'(z)^T W^T (d - W C(z))
        let u = correlate_same(wavelet, &resid);
        let g = reflectivity_jacobian_products(&z, &u);
        for i in 0..m {
            grad[[i, jcol]] = -2.0 * g[i];
        }
    }
    Ok((j_total, grad))
}
