//! Orthonormal single-level 2D Haar analysis/synthesis.

use crate::error::{Result, SaiiError};
use ndarray::Array2;

/// The four half-resolution subbands of one analysis level. The transform is
/// orthonormal, so `||x||^2 = ||LL||^2 + ||LH||^2 + ||HL||^2 + ||HH||^2`.
#[derive(Debug, Clone)]
pub struct HaarCoeffs {
    pub ll: Array2<f64>,
    pub lh: Array2<f64>,
    pub hl: Array2<f64>,
    pub hh: Array2<f64>,
}

/// One level of 2D Haar analysis. Odd dimensions are reflect-padded by one
/// sample before the transform.
pub fn hwt2d(x: &Array2<f64>) -> HaarCoeffs {
    let x = pad_to_even(x);
    let (m, n) = x.dim();
    let (mh, nh) = (m / 2, n / 2);
    let mut ll = Array2::zeros((mh, nh));
    let mut lh = Array2::zeros((mh, nh));
    let mut hl = Array2::zeros((mh, nh));
    let mut hh = Array2::zeros((mh, nh));
    for i in 0..mh {
        for j in 0..nh {
            let a = x[[2 * i, 2 * j]];
            let b = x[[2 * i, 2 * j + 1]];
            let c = x[[2 * i + 1, 2 * j]];
            let d = x[[2 * i + 1, 2 * j + 1]];
            ll[[i, j]] = (a + b + c + d) / 2.0;
            lh[[i, j]] = (a - b + c - d) / 2.0;
            hl[[i, j]] = (a + b - c - d) / 2.0;
            hh[[i, j]] = (a - b - c + d) / 2.0;
        }
    }
    HaarCoeffs { ll, lh, hl, hh }
}

/// Exact inverse of [`hwt2d`] (for even-dimension inputs).
pub fn ihwt2d(c: &HaarCoeffs) -> Result<Array2<f64>> {
    let dim = c.ll.dim();
    if c.lh.dim() != dim || c.hl.dim() != dim || c.hh.dim() != dim {
        return Err(SaiiError::Dimension(format!(
            "subband shapes differ: LL {:?}, LH {:?}, HL {:?}, HH {:?}",
            c.ll.dim(),
            c.lh.dim(),
            c.hl.dim(),
            c.hh.dim()
        )));
    }
    let (mh, nh) = dim;
    let mut x = Array2::zeros((2 * mh, 2 * nh));
    for i in 0..mh {
        for j in 0..nh {
            let (ll, lh, hl, hh) = (c.ll[[i, j]], c.lh[[i, j]], c.hl[[i, j]], c.hh[[i, j]]);
            x[[2 * i, 2 * j]] = (ll + lh + hl + hh) / 2.0;
            x[[2 * i, 2 * j + 1]] = (ll - lh + hl - hh) / 2.0;
            x[[2 * i + 1, 2 * j]] = (ll + lh - hl - hh) / 2.0;
            x[[2 * i + 1, 2 * j + 1]] = (ll - lh - hl + hh) / 2.0;
        }
    }
    Ok(x)
}

fn pad_to_even(x: &Array2<f64>) -> Array2<f64> {
    let (m, n) = x.dim();
    if m % 2 == 0 && n % 2 == 0 {
        return x.clone();
    }
    let (mp, np) = (m + m % 2, n + n % 2);
    let mut out = Array2::zeros((mp, np));
    for i in 0..mp {
        for j in 0..np {
            let si = if i < m { i } else { 2 * m - 1 - i };
            let sj = if j < n { j } else { 2 * n - 1 - j };
            out[[i, j]] = x[[si, sj]];
        }
    }
    out
}
