//! Haar-cascade conditioning head: each level quadruples channels via the
//! orthonormal transform and halves resolution, a 3x3 conv + batch-norm
//! compresses channels back, and a final 1x1 conv + tanh lands on the latent
//! grid. Only the convolutions and norms learn; the transform is fixed, which
//! keeps the head far smaller than the denoiser it conditions.

use crate::error::{Result, SaiiError};
use crate::nn::{BatchNorm2d, Conv2d, Graph, ParamStore, Var};
use ndarray::{Array2, Array3, Array4};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShwtConfig {
    /// Number of Haar levels; the spatial reduction is `2^levels` and must
    /// equal the codec's downsampling factor.
    pub levels: usize,
    /// Conv output channels per level.
    pub widths: Vec<usize>,
    pub latent_channels: usize,
    /// Batch norm after each level conv (disabled only for analysis).
    pub use_batch_norm: bool,
}

impl ShwtConfig {
    pub fn for_factor(downsample_factor: usize, latent_channels: usize) -> Self {
        let levels = downsample_factor.trailing_zeros() as usize;
        Self { levels, widths: vec![6; levels], latent_channels, use_batch_norm: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 3 {
            return Err(SaiiError::Parameter("levels must be 1..=3".into()));
        }
        if self.widths.len() != self.levels {
            return Err(SaiiError::Parameter("one width per level required".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct ShwtHead {
    pub cfg: ShwtConfig,
    convs: Vec<Conv2d>,
    bns: Vec<BatchNorm2d>,
    final_conv: Conv2d,
    param_indices: Vec<usize>,
}

impl ShwtHead {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, cfg: ShwtConfig) -> Result<Self> {
        cfg.validate()?;
        let before = store.tensors.len();
        let mut convs = Vec::new();
        let mut bns = Vec::new();
        let mut in_ch = 1usize;
        for (l, &w) in cfg.widths.iter().enumerate() {
            convs.push(Conv2d::new(store, rng, &format!("shwt.l{l}.conv"), 4 * in_ch, w, 3, 1, 1));
            bns.push(BatchNorm2d::new(store, &format!("shwt.l{l}.bn"), w));
            in_ch = w;
        }
        let final_conv =
            Conv2d::new(store, rng, "shwt.out", in_ch, cfg.latent_channels, 1, 1, 0);
        let param_indices: Vec<usize> = (before..store.tensors.len()).collect();
        Ok(Self { cfg, convs, bns, final_conv, param_indices })
    }

    /// Scalar parameter count of the head (lightweight contract).
    pub fn param_count(&self, store: &ParamStore) -> usize {
        self.param_indices.iter().map(|&i| store.tensors[i].len()).sum()
    }

    pub fn bn_states(&self) -> Vec<(ndarray::Array1<f64>, ndarray::Array1<f64>)> {
        self.bns
            .iter()
            .map(|b| (b.running_mean.clone(), b.running_var.clone()))
            .collect()
    }

    pub fn set_bn_states(&mut self, states: Vec<(ndarray::Array1<f64>, ndarray::Array1<f64>)>) {
        for (bn, (mean, var)) in self.bns.iter_mut().zip(states) {
            bn.running_mean = mean;
            bn.running_var = var;
        }
    }

    /// Training-mode forward; updates batch-norm running statistics.
    pub fn forward_train(&mut self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let mut h = x;
        for l in 0..self.cfg.levels {
            h = g.haar_analysis(h);
            h = self.convs[l].forward(g, store, h);
            if self.cfg.use_batch_norm {
                h = self.bns[l].forward_train(g, store, h);
            }
        }
        h = self.final_conv.forward(g, store, h);
        g.tanh(h)
    }

    /// Eval-mode forward with frozen batch-norm statistics; deterministic.
    pub fn forward_eval(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let mut h = x;
        for l in 0..self.cfg.levels {
            h = g.haar_analysis(h);
            h = self.convs[l].forward(g, store, h);
            if self.cfg.use_batch_norm {
                h = self.bns[l].forward_eval(g, store, h);
            }
        }
        h = self.final_conv.forward(g, store, h);
        g.tanh(h)
    }

    /// Projects one normalized seismic section onto the latent grid
    /// (reflect-padding odd extents like the codec does).
    pub fn project(&self, store: &ParamStore, d_norm: &Array2<f64>) -> Result<Array3<f64>> {
        let f = 1 << self.cfg.levels;
        let (m, n) = d_norm.dim();
        if m < f || n < f {
            return Err(SaiiError::Dimension(format!(
                "section {m}x{n} smaller than reduction factor {f}"
            )));
        }
        let pr = (f - m % f) % f;
        let pc = (f - n % f) % f;
        let mut batch = Array4::zeros((1, 1, m + pr, n + pc));
        for i in 0..m + pr {
            let si = if i < m { i } else { 2 * m - 1 - i };
            for j in 0..n + pc {
                let sj = if j < n { j } else { 2 * n - 1 - j };
                batch[[0, 0, i, j]] = d_norm[[si, sj]];
            }
        }
        let mut g = Graph::new();
        let xv = g.input(batch);
        let out = self.forward_eval(&mut g, store, xv);
        let ov = g.value(out);
        let (_, c, h, w) = ov.dim();
        Ok(Array3::from_shape_fn((c, h, w), |(ci, i, j)| ov[[0, ci, i, j]]))
    }
}
