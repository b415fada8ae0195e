//! Core 2D domain types shared by every module.
//!
//! Both grids are stored depth-major: `values[[i, j]]` is time/depth sample `i`
//! of trace `j`.

use crate::error::{Result, SaiiError};
use ndarray::Array2;

/// 2D acoustic impedance model (velocity x density units), the inversion target.
#[derive(Debug, Clone)]
pub struct ImpedanceGrid {
    /// `[depth_samples x traces]`, strictly positive.
    pub values: Array2<f64>,
    /// Time sampling interval in seconds.
    pub dt: f64,
    /// Provenance string ("marmousi-patch-12", "layered-seed-7", ...).
    pub origin_tag: String,
}

impl ImpedanceGrid {
    pub fn new(values: Array2<f64>, dt: f64, origin_tag: impl Into<String>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(SaiiError::Dimension(format!(
                "impedance grid needs at least 2 depth samples, got {}",
                values.nrows()
            )));
        }
        if dt <= 0.0 || !dt.is_finite() {
            return Err(SaiiError::Parameter(format!("dt must be positive, got {dt}")));
        }
        for &v in values.iter() {
            if !v.is_finite() || v <= 0.0 {
                return Err(SaiiError::Domain(format!(
                    "impedance values must be finite and strictly positive, found {v}"
                )));
            }
        }
        Ok(Self { values, dt, origin_tag: origin_tag.into() })
    }

    pub fn depth_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn traces(&self) -> usize {
        self.values.ncols()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// 2D post-stack seismic amplitude section on the same trace grid as the model.
#[derive(Debug, Clone)]
pub struct SeismicSection {
    /// `[time_samples x traces]`.
    pub values: Array2<f64>,
    /// Time sampling interval in seconds.
    pub dt: f64,
}

impl SeismicSection {
    pub fn new(values: Array2<f64>, dt: f64) -> Self {
        Self { values, dt }
    }

    pub fn time_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn traces(&self) -> usize {
        self.values.ncols()
    }

    /// Total energy `sum(v^2)`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Rejects mismatched 2D shapes with a uniform error message.
pub fn check_same_shape(what: &str, a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(SaiiError::Dimension(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}
