//! Dataset augmentation: flips and elastic deformation.

use crate::dsp::gaussian_smooth2d;
use crate::error::{Result, SaiiError};
use crate::grid::ImpedanceGrid;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub enable_hflip: bool,
    pub enable_vflip: bool,
    /// Displacement magnitude in samples; 0 disables deformation.
    pub elastic_alpha: f64,
    /// Gaussian smoothing width of the displacement field, in samples.
    pub elastic_sigma: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self { enable_hflip: true, enable_vflip: true, elastic_alpha: 4.0, elastic_sigma: 6.0, seed: 0 }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elastic_alpha < 0.0 {
            return Err(SaiiError::Parameter("elastic_alpha must be >= 0".into()));
        }
        if self.elastic_sigma <= 0.0 {
            return Err(SaiiError::Parameter("elastic_sigma must be > 0".into()));
        }
        Ok(())
    }
}

pub fn hflip(g: &ImpedanceGrid) -> ImpedanceGrid {
    let (m, n) = g.values.dim();
    let vals = Array2::from_shape_fn((m, n), |(i, j)| g.values[[i, n - 1 - j]]);
    ImpedanceGrid { values: vals, dt: g.dt, origin_tag: format!("{}:hflip", g.origin_tag) }
}

pub fn vflip(g: &ImpedanceGrid) -> ImpedanceGrid {
    let (m, n) = g.values.dim();
    let vals = Array2::from_shape_fn((m, n), |(i, j)| g.values[[m - 1 - i, j]]);
    ImpedanceGrid { values: vals, dt: g.dt, origin_tag: format!("{}:vflip", g.origin_tag) }
}

fn reflect(x: f64, n: usize) -> f64 {
    let n = n as f64;
    let mut x = x;
    loop {
        if x < 0.0 {
            x = -x;
        } else if x > n - 1.0 {
            x = 2.0 * (n - 1.0) - x;
        } else {
            return x;
        }
    }
}

/// Gaussian-smoothed random displacement field with bilinear resampling and
/// reflective boundary handling. Values stay inside the interpolation hull, so
/// positivity is preserved.
pub fn elastic_deform(g: &ImpedanceGrid, alpha: f64, sigma: f64, rng: &mut ChaCha8Rng) -> ImpedanceGrid {
    let (m, n) = g.values.dim();
    let raw_dy = Array2::from_shape_fn((m, n), |_| rng.gen_range(-1.0..1.0));
    let raw_dx = Array2::from_shape_fn((m, n), |_| rng.gen_range(-1.0..1.0));
    let dy = gaussian_smooth2d(&raw_dy, sigma) * alpha;
    let dx = gaussian_smooth2d(&raw_dx, sigma) * alpha;

    let mut out = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let si = reflect(i as f64 + dy[[i, j]], m);
            let sj = reflect(j as f64 + dx[[i, j]], n);
            let i0 = si.floor() as usize;
            let j0 = sj.floor() as usize;
            let i1 = (i0 + 1).min(m - 1);
            let j1 = (j0 + 1).min(n - 1);
            let fi = si - i0 as f64;
            let fj = sj - j0 as f64;
            out[[i, j]] = g.values[[i0, j0]] * (1.0 - fi) * (1.0 - fj)
                + g.values[[i1, j0]] * fi * (1.0 - fj)
                + g.values[[i0, j1]] * (1.0 - fi) * fj
                + g.values[[i1, j1]] * fi * fj;
        }
    }
    ImpedanceGrid { values: out, dt: g.dt, origin_tag: format!("{}:elastic", g.origin_tag) }
}

/// Expands the patch set: originals plus horizontal/vertical flips plus two
/// elastic draws. With every option enabled the expansion factor is 5.
pub fn augment(patches: &[ImpedanceGrid], cfg: &AugmentationConfig) -> Result<Vec<ImpedanceGrid>> {
    cfg.validate()?;
    if patches.is_empty() {
        return Err(SaiiError::Parameter("augment needs a non-empty patch list".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for p in patches {
        out.push(p.clone());
    }
    if cfg.enable_hflip {
        for p in patches {
            out.push(hflip(p));
        }
    }
    if cfg.enable_vflip {
        for p in patches {
            out.push(vflip(p));
        }
    }
    for _ in 0..2 {
        for p in patches {
            out.push(elastic_deform(p, cfg.elastic_alpha, cfg.elastic_sigma, &mut rng));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(seed: u64) -> ImpedanceGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = Array2::from_shape_fn((32, 24), |_| rng.gen_range(2000.0..8000.0));
        ImpedanceGrid::new(vals, 0.002, "p").unwrap()
    }

    #[test]
    fn expansion_factor_is_five() {
        let patches: Vec<_> = (0..313).map(|_| {
            ImpedanceGrid::new(Array2::from_elem((8, 8), 2500.0), 0.002, "p").unwrap()
        }).collect();
        let cfg = AugmentationConfig { elastic_sigma: 2.0, ..Default::default() };
        let out = augment(&patches, &cfg).unwrap();
        assert_eq!(out.len(), 1565);
    }

    #[test]
    fn hflip_is_an_involution() {
        let p = patch(1);
        let back = hflip(&hflip(&p));
        assert_eq!(back.values, p.values);
    }

    #[test]
    fn flips_preserve_value_histogram() {
        let p = patch(2);
        let mut orig: Vec<u64> = p.values.iter().map(|v| v.to_bits()).collect();
        let mut flipped: Vec<u64> = vflip(&p).values.iter().map(|v| v.to_bits()).collect();
        orig.sort_unstable();
        flipped.sort_unstable();
        assert_eq!(orig, flipped);
    }

    #[test]
    fn zero_alpha_deformation_is_identity() {
        let p = patch(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = elastic_deform(&p, 0.0, 4.0, &mut rng);
        for (a, b) in p.values.iter().zip(d.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn deformation_respects_value_hull_and_positivity() {
        let p = patch(4);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = elastic_deform(&p, 5.0, 4.0, &mut rng);
        let (lo, hi) = (p.min(), p.max());
        for &v in d.values.iter() {
            assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            assert!(v > 0.0);
        }
    }

    #[test]
    fn empty_input_rejected() {
        assert!(augment(&[], &AugmentationConfig::default()).is_err());
    }
}
