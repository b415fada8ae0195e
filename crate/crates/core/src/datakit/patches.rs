//! Edge-anchored patch tiling.

use crate::error::{Result, SaiiError};
use crate::grid::ImpedanceGrid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PatchSpec {
    pub patch_height: usize,
    pub patch_width: usize,
    pub stride_v: usize,
    pub stride_h: usize,
}

impl PatchSpec {
    pub fn square(size: usize) -> Self {
        Self { patch_height: size, patch_width: size, stride_v: size, stride_h: size }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_height < 8 || self.patch_width < 8 {
            return Err(SaiiError::Parameter("patch dims must be >= 8".into()));
        }
        if self.stride_v < 1 || self.stride_h < 1 {
            return Err(SaiiError::Parameter("strides must be >= 1".into()));
        }
        Ok(())
    }
}

/// Anchor positions along one axis: regular stride tiling plus a final anchor
/// flush with the far edge, so non-divisible extents stay fully covered.
fn tile_positions(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut pos = Vec::new();
    let last = extent - patch;
    let mut p = 0;
    while p <= last {
        pos.push(p);
        if p == last {
            break;
        }
        p += stride;
    }
    if *pos.last().unwrap() != last {
        pos.push(last);
    }
    pos
}

/// Tiles the model into patches of exactly the requested dims with
/// edge-anchored overlap for full coverage.
pub fn extract_patches(model: &ImpedanceGrid, spec: &PatchSpec) -> Result<Vec<ImpedanceGrid>> {
    spec.validate()?;
    let (m, n) = model.values.dim();
    if m < spec.patch_height || n < spec.patch_width {
        return Err(SaiiError::Dimension(format!(
            "model {m}x{n} smaller than patch {}x{}",
            spec.patch_height, spec.patch_width
        )));
    }
    let rows = tile_positions(m, spec.patch_height, spec.stride_v);
    let cols = tile_positions(n, spec.patch_width, spec.stride_h);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            let window = model
                .values
                .slice(ndarray::s![r..r + spec.patch_height, c..c + spec.patch_width])
                .to_owned();
            out.push(ImpedanceGrid::new(
                window,
                model.dt,
                format!("{}:patch@{r},{c}", model.origin_tag),
            )?);
        }
    }
    Ok(out)
}
