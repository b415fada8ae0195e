//! Parameterized layers built on the autodiff graph.

use super::graph::{Graph, ParamStore, Var};
use ndarray::{Array1, Array4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Largest group count <= 8 that divides the channel count.
pub fn norm_groups(channels: usize) -> usize {
    for g in (1..=8.min(channels)).rev() {
        if channels % g == 0 {
            return g;
        }
    }
    1
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: usize,
    pub b: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = (c_in * k * k) as f64;
        let std = (2.0 / fan_in).sqrt();
        let w = Array4::from_shape_fn((c_out, c_in, k, k), |_| {
            // Box-Muller keeps us off rand_distr here so init stays in one place.
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        let b = Array4::zeros((1, c_out, 1, 1));
        Self {
            w: store.add(format!("{name}.weight"), w),
            b: store.add(format!("{name}.bias"), b),
            stride,
            pad,
        }
    }

    /// Zero-initialized variant for output projections.
    pub fn new_zeroed(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let w = Array4::zeros((c_out, c_in, k, k));
        let b = Array4::zeros((1, c_out, 1, 1));
        Self {
            w: store.add(format!("{name}.weight"), w),
            b: store.add(format!("{name}.bias"), b),
            stride,
            pad,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.conv2d(x, w, Some(b), self.stride, self.pad)
    }

    /// Forward with weights bound as constants: activations upstream still get
    /// gradients, the weights do not (adversarial generator passes).
    pub fn forward_frozen(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.input(store.tensors[self.w].clone());
        let b = g.input(store.tensors[self.b].clone());
        g.conv2d(x, w, Some(b), self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub gamma: usize,
    pub beta: usize,
    pub groups: usize,
    pub eps: f64,
}

impl GroupNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Array4::ones((1, channels, 1, 1))),
            beta: store.add(format!("{name}.beta"), Array4::zeros((1, channels, 1, 1))),
            groups: norm_groups(channels),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.group_norm(x, gamma, beta, self.groups, self.eps)
    }
}

/// Batch normalization with running statistics. Training mode uses batch
/// statistics and updates the running averages; eval mode is a fixed affine
/// map, so inference stays deterministic.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: usize,
    pub beta: usize,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Array4::ones((1, channels, 1, 1))),
            beta: store.add(format!("{name}.beta"), Array4::zeros((1, channels, 1, 1))),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn forward_train(&mut self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let (out, stats) = g.batch_norm(
            x,
            gamma,
            beta,
            &self.running_mean,
            &self.running_var,
            true,
            self.eps,
        );
        if let Some((mu, var)) = stats {
            let m = self.momentum;
            self.running_mean = &self.running_mean * (1.0 - m) + &mu * m;
            self.running_var = &self.running_var * (1.0 - m) + &var * m;
        }
        out
    }

    pub fn forward_eval(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let (out, _) = g.batch_norm(
            x,
            gamma,
            beta,
            &self.running_mean,
            &self.running_var,
            false,
            self.eps,
        );
        out
    }
}

/// Pre-activation residual block with optional timestep conditioning.
#[derive(Debug, Clone)]
pub struct ResBlock {
    gn1: GroupNorm,
    conv1: Conv2d,
    temb_proj: Option<Conv2d>,
    gn2: GroupNorm,
    conv2: Conv2d,
    skip: Option<Conv2d>,
}

impl ResBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        temb_dim: Option<usize>,
    ) -> Self {
        Self {
            gn1: GroupNorm::new(store, &format!("{name}.gn1"), c_in),
            conv1: Conv2d::new(store, rng, &format!("{name}.conv1"), c_in, c_out, 3, 1, 1),
            temb_proj: temb_dim
                .map(|d| Conv2d::new(store, rng, &format!("{name}.temb"), d, c_out, 1, 1, 0)),
            gn2: GroupNorm::new(store, &format!("{name}.gn2"), c_out),
            conv2: Conv2d::new(store, rng, &format!("{name}.conv2"), c_out, c_out, 3, 1, 1),
            skip: (c_in != c_out)
                .then(|| Conv2d::new(store, rng, &format!("{name}.skip"), c_in, c_out, 1, 1, 0)),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, temb: Option<Var>) -> Var {
        let mut h = self.gn1.forward(g, store, x);
        h = g.silu(h);
        h = self.conv1.forward(g, store, h);
        if let (Some(proj), Some(t)) = (&self.temb_proj, temb) {
            let e = proj.forward(g, store, t);
            h = g.add_broadcast(h, e);
        }
        let mut h2 = self.gn2.forward(g, store, h);
        h2 = g.silu(h2);
        h2 = self.conv2.forward(g, store, h2);
        let shortcut = match &self.skip {
            Some(conv) => conv.forward(g, store, x),
            None => x,
        };
        g.add(h2, shortcut)
    }
}

/// Standard sinusoidal timestep embedding, shaped `[N, dim, 1, 1]`.
pub fn sinusoidal_embedding(timesteps: &[usize], dim: usize) -> Array4<f64> {
    assert!(dim % 2 == 0, "embedding dim must be even");
    let half = dim / 2;
    let mut out = Array4::zeros((timesteps.len(), dim, 1, 1));
    for (ni, &t) in timesteps.iter().enumerate() {
        for i in 0..half {
            let freq = (-(10000f64.ln()) * i as f64 / (half as f64 - 1.0).max(1.0)).exp();
            let arg = t as f64 * freq;
            out[[ni, i, 0, 0]] = arg.sin();
            out[[ni, half + i, 0, 0]] = arg.cos();
        }
    }
    out
}
