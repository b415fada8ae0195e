//! Small time-conditionable U-Net shared by the latent denoiser and the
//! learned baselines (which drop the time conditioning).

use super::graph::{Graph, ParamStore, Var};
use super::layers::{sinusoidal_embedding, Conv2d, GroupNorm, ResBlock};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Base width; deeper levels use twice this.
    pub width: usize,
    /// Number of downsampling stages.
    pub levels: usize,
    /// Sinusoidal embedding width; `None` disables time conditioning.
    pub temb_dim: Option<usize>,
    /// Apply tanh to the output (used by image-to-image regressors).
    pub final_tanh: bool,
    /// Zero-initialize the output projection (noise predictors start at zero).
    pub zero_init_out: bool,
}

#[derive(Debug, Clone)]
pub struct UNet {
    cfg: UNetConfig,
    temb_mlp: Option<(Conv2d, Conv2d)>,
    conv_in: Conv2d,
    down_res: Vec<ResBlock>,
    downs: Vec<Conv2d>,
    mid: ResBlock,
    ups: Vec<Conv2d>,
    up_res: Vec<ResBlock>,
    out_gn: GroupNorm,
    conv_out: Conv2d,
}

fn level_width(base: usize, level: usize) -> usize {
    if level == 0 {
        base
    } else {
        2 * base
    }
}

impl UNet {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, cfg: UNetConfig) -> Self {
        let temb_inner = cfg.temb_dim;
        let temb_mlp = cfg.temb_dim.map(|d| {
            (
                Conv2d::new(store, rng, &format!("{prefix}.temb1"), d, d, 1, 1, 0),
                Conv2d::new(store, rng, &format!("{prefix}.temb2"), d, d, 1, 1, 0),
            )
        });
        let w0 = cfg.width;
        let conv_in = Conv2d::new(store, rng, &format!("{prefix}.conv_in"), cfg.in_channels, w0, 3, 1, 1);
        let mut down_res = Vec::new();
        let mut downs = Vec::new();
        for l in 0..cfg.levels {
            let cw = level_width(w0, l);
            down_res.push(ResBlock::new(store, rng, &format!("{prefix}.down{l}.res"), cw, cw, temb_inner));
            let nw = level_width(w0, l + 1);
            downs.push(Conv2d::new(store, rng, &format!("{prefix}.down{l}.pool"), cw, nw, 3, 2, 1));
        }
        let mid_w = level_width(w0, cfg.levels);
        let mid = ResBlock::new(store, rng, &format!("{prefix}.mid"), mid_w, mid_w, temb_inner);
        let mut ups = Vec::new();
        let mut up_res = Vec::new();
        for l in (0..cfg.levels).rev() {
            let cw = level_width(w0, l);
            let upper = level_width(w0, l + 1);
            ups.push(Conv2d::new(store, rng, &format!("{prefix}.up{l}.conv"), upper, cw, 3, 1, 1));
            up_res.push(ResBlock::new(store, rng, &format!("{prefix}.up{l}.res"), 2 * cw, cw, temb_inner));
        }
        let out_gn = GroupNorm::new(store, &format!("{prefix}.out_gn"), w0);
        let conv_out = if cfg.zero_init_out {
            Conv2d::new_zeroed(store, &format!("{prefix}.conv_out"), w0, cfg.out_channels, 3, 1, 1)
        } else {
            Conv2d::new(store, rng, &format!("{prefix}.conv_out"), w0, cfg.out_channels, 3, 1, 1)
        };
        Self { cfg, temb_mlp, conv_in, down_res, downs, mid, ups, up_res, out_gn, conv_out }
    }

    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    /// Forward pass. `timesteps` must be given iff the net was built with
    /// time conditioning; spatial dims must be divisible by `2^levels`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        timesteps: Option<&[usize]>,
    ) -> Var {
        let temb = match (&self.temb_mlp, timesteps) {
            (Some((l1, l2)), Some(ts)) => {
                let base = sinusoidal_embedding(ts, self.cfg.temb_dim.unwrap());
                let e = g.input(base);
                let e = l1.forward(g, store, e);
                let e = g.silu(e);
                Some(l2.forward(g, store, e))
            }
            (None, None) => None,
            _ => panic!("timestep conditioning mismatch"),
        };

        let mut h = self.conv_in.forward(g, store, x);
        let mut skips = Vec::with_capacity(self.cfg.levels);
        for l in 0..self.cfg.levels {
            h = self.down_res[l].forward(g, store, h, temb);
            skips.push(h);
            h = self.downs[l].forward(g, store, h);
        }
        h = self.mid.forward(g, store, h, temb);
        for (i, l) in (0..self.cfg.levels).rev().enumerate() {
            h = g.upsample2x(h);
            h = self.ups[i].forward(g, store, h);
            h = g.concat(&[h, skips[l]]);
            h = self.up_res[i].forward(g, store, h, temb);
        }
        h = self.out_gn.forward(g, store, h);
        h = g.silu(h);
        h = self.conv_out.forward(g, store, h);
        if self.cfg.final_tanh {
            h = g.tanh(h);
        }
        h
    }
}
