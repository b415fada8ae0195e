//! PSNR / SSIM / PCC / RRE and the seismic reconstruction-consistency check.

use crate::error::{Result, SaiiError};
use crate::grid::{check_same_shape, SeismicSection};
use crate::seisforward::{synthesize, Wavelet};
use crate::ImpedanceGrid;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub const REPORT_FORMAT: &str = "saii-report/1";

/// Identical inputs have zero MSE; reports cap the +inf sentinel here.
pub const PSNR_CAP_DB: f64 = 200.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub format_version: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub pcc: f64,
    pub rre: f64,
    /// Per-trace PCC at well locations.
    pub well_pcc: Vec<f64>,
    /// PCC between the forward-modeled estimate and the observed seismic.
    pub reconstruction_pcc: Option<f64>,
}

/// `10 log10(peak^2 / MSE)` with `peak = max(x_true) - min(x_true)`, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(x_hat: &Array2<f64>, x_true: &Array2<f64>) -> Result<f64> {
    check_same_shape("psnr", x_hat, x_true)?;
    let mse: f64 =
        x_hat.iter().zip(x_true.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x_hat.len() as f64;
    let peak = x_true.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - x_true.iter().cloned().fold(f64::INFINITY, f64::min);
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window11() -> [f64; 11] {
    let sigma = 1.5;
    let mut w = [0.0; 11];
    let mut sum = 0.0;
    for (i, wi) in w.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *wi = (-0.5 * (d / sigma).powi(2)).exp();
        sum += *wi;
    }
    for wi in w.iter_mut() {
        *wi /= sum;
    }
    w
}

/// Valid-mode weighted local moments via separable filtering.
fn local_moments(x: &Array2<f64>, w: &[f64; 11]) -> Array2<f64> {
    let (m, n) = x.dim();
    let mut rows = Array2::zeros((m, n - 10));
    for i in 0..m {
        for j in 0..n - 10 {
            let mut acc = 0.0;
            for (t, &wt) in w.iter().enumerate() {
                acc += wt * x[[i, j + t]];
            }
            rows[[i, j]] = acc;
        }
    }
    let mut out = Array2::zeros((m - 10, n - 10));
    for i in 0..m - 10 {
        for j in 0..n - 10 {
            let mut acc = 0.0;
            for (t, &wt) in w.iter().enumerate() {
                acc += wt * rows[[i + t, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Mean local SSIM over valid 11x11 Gaussian windows (sigma 1.5), stabilizers
/// relative to the true model's dynamic range.
pub fn ssim(x_hat: &Array2<f64>, x_true: &Array2<f64>) -> Result<f64> {
    check_same_shape("ssim", x_hat, x_true)?;
    let (m, n) = x_hat.dim();
    if m < 11 || n < 11 {
        return Err(SaiiError::Dimension(format!("image {m}x{n} smaller than the 11x11 window")));
    }
    let range = x_true.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - x_true.iter().cloned().fold(f64::INFINITY, f64::min);
    let l = if range > 0.0 { range } else { 1.0 };
    let c1 = (0.01 * l) * (0.01 * l);
    let c2 = (0.03 * l) * (0.03 * l);

    let w = gaussian_window11();
    let mu_x = local_moments(x_hat, &w);
    let mu_y = local_moments(x_true, &w);
    let xx = local_moments(&(x_hat * x_hat), &w);
    let yy = local_moments(&(x_true * x_true), &w);
    let xy = local_moments(&(x_hat * x_true), &w);

    let (vm, vn) = mu_x.dim();
    let mut acc = 0.0;
    for i in 0..vm {
        for j in 0..vn {
            let (mx, my) = (mu_x[[i, j]], mu_y[[i, j]]);
            let sx = xx[[i, j]] - mx * mx;
            let sy = yy[[i, j]] - my * my;
            let sxy = xy[[i, j]] - mx * my;
            acc += ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
                / ((mx * mx + my * my + c1) * (sx + sy + c2));
        }
    }
    Ok(acc / (vm * vn) as f64)
}

/// Pearson correlation between two equally-shaped collections. Exactly 1 for
/// bitwise-identical inputs (Cauchy-Schwarz equality short-circuit).
pub fn pcc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(SaiiError::Dimension(format!("pcc: lengths {} vs {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(SaiiError::Domain("pcc undefined for zero-variance input".into()));
    }
    if cov * cov == va * vb {
        return Ok(cov.signum());
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Relative L2 error `||x_hat - x_true|| / ||x_true||`.
pub fn rre(x_hat: &Array2<f64>, x_true: &Array2<f64>) -> Result<f64> {
    check_same_shape("rre", x_hat, x_true)?;
    let num: f64 = x_hat
        .iter()
        .zip(x_true.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let den: f64 = x_true.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(SaiiError::Domain("rre undefined for an all-zero reference".into()));
    }
    Ok(num / den)
}

/// PCC between the forward-modeled estimate and the observed record.
pub fn reconstruction_check(
    x_hat: &ImpedanceGrid,
    d: &SeismicSection,
    wavelet: &Wavelet,
) -> Result<f64> {
    let pred = synthesize(x_hat, wavelet)?;
    check_same_shape("reconstruction_check", &pred.values, &d.values)?;
    let a: Vec<f64> = pred.values.iter().cloned().collect();
    let b: Vec<f64> = d.values.iter().cloned().collect();
    pcc(&a, &b)
}

/// Full report. `wells` are trace indices evaluated column-by-column.
pub fn compute_report(
    x_hat: &Array2<f64>,
    x_true: &Array2<f64>,
    wells: &[usize],
    recon: Option<(&ImpedanceGrid, &SeismicSection, &Wavelet)>,
) -> Result<MetricReport> {
    let mut well_pcc = Vec::with_capacity(wells.len());
    for &j in wells {
        if j >= x_hat.ncols() {
            return Err(SaiiError::Dimension(format!(
                "well trace {j} outside 0..{}",
                x_hat.ncols()
            )));
        }
        let a: Vec<f64> = x_hat.column(j).to_vec();
        let b: Vec<f64> = x_true.column(j).to_vec();
        well_pcc.push(pcc(&a, &b)?);
    }
    let reconstruction_pcc = match recon {
        Some((grid, d, w)) => Some(reconstruction_check(grid, d, w)?),
        None => None,
    };
    Ok(MetricReport {
        format_version: REPORT_FORMAT.into(),
        psnr_db: psnr(x_hat, x_true)?,
        ssim: ssim(x_hat, x_true)?,
        pcc: pcc(
            &x_hat.iter().cloned().collect::<Vec<_>>(),
            &x_true.iter().cloned().collect::<Vec<_>>(),
        )?,
        rre: rre(x_hat, x_true)?,
        well_pcc,
        reconstruction_pcc,
    })
}
