//! Codec training: L1 reconstruction + quantization losses, optional
//! adversarial hinge term, and dead-code revival.

use super::model::VqCodec;
use super::quantize::quantize;
use super::CodecConfig;
use crate::datakit::DatasetManifest;
use crate::error::{Result, SaiiError};
use crate::nn::{Adam, AdamConfig, Conv2d, Graph, ParamStore, Var};
use ndarray::{Array2, Array3, Array4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const ADV_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodecTrainReport {
    pub recon_l1_curve: Vec<f64>,
    pub total_curve: Vec<f64>,
    pub final_usage_fraction: f64,
}

struct Discriminator {
    store: ParamStore,
    c1: Conv2d,
    c2: Conv2d,
    c3: Conv2d,
}

impl Discriminator {
    fn new(seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c1 = Conv2d::new(&mut store, &mut rng, "disc.c1", 1, 16, 4, 2, 1);
        let c2 = Conv2d::new(&mut store, &mut rng, "disc.c2", 16, 32, 4, 2, 1);
        let c3 = Conv2d::new(&mut store, &mut rng, "disc.c3", 32, 1, 3, 1, 1);
        Self { store, c1, c2, c3 }
    }

    fn forward(&self, g: &mut Graph, x: Var, frozen: bool) -> Var {
        let fwd = |layer: &Conv2d, g: &mut Graph, h: Var| {
            if frozen {
                layer.forward_frozen(g, &self.store, h)
            } else {
                layer.forward(g, &self.store, h)
            }
        };
        let mut h = fwd(&self.c1, g, x);
        h = g.leaky_relu(h, 0.2);
        h = fwd(&self.c2, g, h);
        h = g.leaky_relu(h, 0.2);
        fwd(&self.c3, g, h)
    }
}

fn stack_batch(patches: &[Array2<f64>], idxs: &[usize]) -> Array4<f64> {
    let (h, w) = patches[idxs[0]].dim();
    let mut out = Array4::zeros((idxs.len(), 1, h, w));
    for (ni, &pi) in idxs.iter().enumerate() {
        for i in 0..h {
            for j in 0..w {
                out[[ni, 0, i, j]] = patches[pi][[i, j]];
            }
        }
    }
    out
}

/// Quantizes a batch of latents, accumulating per-code usage; returns the
/// quantized values and the per-position index maps.
fn quantize_batch(
    codec: &VqCodec,
    z_e: &Array4<f64>,
    usage: &mut [u64],
) -> Result<(Array4<f64>, Vec<Array2<usize>>)> {
    let book = codec.codebook();
    let (n, c, h, w) = z_e.dim();
    let mut z_q = Array4::zeros((n, c, h, w));
    let mut index_maps = Vec::with_capacity(n);
    for ni in 0..n {
        let zi = Array3::from_shape_fn((c, h, w), |(ci, i, j)| z_e[[ni, ci, i, j]]);
        let (zq, idx, _, _) = quantize(&zi, &book)?;
        for k in idx.iter() {
            usage[*k] += 1;
        }
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    z_q[[ni, ci, i, j]] = zq[[ci, i, j]];
                }
            }
        }
        index_maps.push(idx);
    }
    Ok((z_q, index_maps))
}

/// Accumulates the codebook gradient of `mean||sg(z_e) - e||^2` directly into
/// the store (the quantizer is not part of the autodiff graph).
fn accumulate_codebook_grad(codec: &mut VqCodec, z_e: &Array4<f64>, index_maps: &[Array2<usize>]) {
    let cb_idx = codec.codebook_param();
    let book = codec.store.tensors[cb_idx].clone();
    let (n, c, h, w) = z_e.dim();
    let denom = (n * c * h * w) as f64;
    for (ni, idx) in index_maps.iter().enumerate() {
        for i in 0..h {
            for j in 0..w {
                let k = idx[[i, j]];
                for ci in 0..c {
                    codec.store.grads[cb_idx][[k, ci, 0, 0]] +=
                        2.0 * (book[[k, ci, 0, 0]] - z_e[[ni, ci, i, j]]) / denom;
                }
            }
        }
    }
}

/// Re-seeds codes unused over the last epoch from recent encoder outputs.
fn revive_dead_codes(codec: &mut VqCodec, epoch_usage: &[u64], recent_z: &Array4<f64>, rng: &mut ChaCha8Rng) {
    let cb_idx = codec.codebook_param();
    let (n, c, h, w) = recent_z.dim();
    for (k, &u) in epoch_usage.iter().enumerate() {
        if u == 0 {
            let ni = rng.gen_range(0..n);
            let i = rng.gen_range(0..h);
            let j = rng.gen_range(0..w);
            for ci in 0..c {
                codec.store.tensors[cb_idx][[k, ci, 0, 0]] =
                    recent_z[[ni, ci, i, j]] + rng.gen_range(-0.01..0.01);
            }
        }
    }
}

/// Trains the codec on the manifest's impedance patches.
pub fn train_codec(
    manifest: &DatasetManifest,
    cfg: &CodecConfig,
    seed: u64,
) -> Result<(VqCodec, CodecTrainReport)> {
    cfg.validate()?;
    if manifest.entries.is_empty() {
        return Err(SaiiError::Parameter("manifest has no entries".into()));
    }
    let norm = manifest.normalization;
    let patches: Vec<Array2<f64>> = manifest
        .entries
        .iter()
        .map(|e| {
            let imp = manifest.read_impedance(e)?;
            Ok(imp.mapv(|v| norm.normalize_imp(v)))
        })
        .collect::<Result<_>>()?;

    let mut codec = VqCodec::new(*cfg, norm, seed)?;
    let mut opt = Adam::new(&codec.store, AdamConfig { lr: cfg.lr, ..Default::default() });
    let mut disc = cfg.use_adversarial.then(|| Discriminator::new(seed ^ 0xD15C));
    let mut disc_opt = disc
        .as_ref()
        .map(|d| Adam::new(&d.store, AdamConfig { lr: cfg.lr, ..Default::default() }));

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut report = CodecTrainReport {
        recon_l1_curve: Vec::new(),
        total_curve: Vec::new(),
        final_usage_fraction: 0.0,
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_usage = vec![0u64; cfg.codebook_size];
        let mut l1_sum = 0.0;
        let mut total_sum = 0.0;
        let mut batches = 0usize;
        let mut last_z: Option<Array4<f64>> = None;

        for chunk in order.chunks(cfg.batch_size) {
            let x = stack_batch(&patches, chunk);
            let mut g = Graph::new();
            let xv = g.input(x.clone());
            let z_e = codec.encoder_net().forward(&mut g, &codec.store, xv);
            let z_e_val = g.value(z_e).clone();
            let (z_q, index_maps) = quantize_batch(&codec, &z_e_val, &mut epoch_usage)?;
            let st = g.straight_through(z_e, z_q.clone());
            let recon = codec.decoder_net().forward(&mut g, &codec.store, st);
            let l1 = g.l1_loss(recon, &x);
            let commit = g.mse_loss(z_e, &z_q);
            let commit_scaled = g.affine(commit, cfg.commitment_beta, 0.0);
            let mut loss = g.add(l1, commit_scaled);
            if let Some(d) = &disc {
                // generator wants the critic to score reconstructions high
                let score = d.forward(&mut g, recon, true);
                let mean_score = g.mean_all(score);
                let gen_term = g.affine(mean_score, -ADV_WEIGHT, 0.0);
                loss = g.add(loss, gen_term);
            }
            let l1_val = g.value(l1)[[0, 0, 0, 0]];
            let loss_val = g.value(loss)[[0, 0, 0, 0]];
            if !loss_val.is_finite() {
                return Err(SaiiError::Numerical(format!(
                    "codec training diverged at epoch {epoch} (loss = {loss_val})"
                )));
            }
            codec.store.zero_grads();
            g.backward(loss, &mut codec.store);
            accumulate_codebook_grad(&mut codec, &z_e_val, &index_maps);
            opt.step(&mut codec.store);

            if let (Some(d), Some(dopt)) = (&mut disc, &mut disc_opt) {
                let recon_val = codec.decode_array(&z_q, false)?;
                let mut gd = Graph::new();
                let real = gd.input(x.clone());
                let fake = gd.input(recon_val);
                let s_real = d.forward(&mut gd, real, false);
                let s_fake = d.forward(&mut gd, fake, false);
                // hinge: mean(relu(1 - D(x))) + mean(relu(1 + D(x_hat)))
                let a = gd.affine(s_real, -1.0, 1.0);
                let a = gd.relu(a);
                let a = gd.mean_all(a);
                let b = gd.affine(s_fake, 1.0, 1.0);
                let b = gd.relu(b);
                let b = gd.mean_all(b);
                let d_loss = gd.add(a, b);
                d.store.zero_grads();
                gd.backward(d_loss, &mut d.store);
                dopt.step(&mut d.store);
            }

            l1_sum += l1_val;
            total_sum += loss_val;
            batches += 1;
            last_z = Some(z_e_val);
        }

        if let Some(z) = &last_z {
            revive_dead_codes(&mut codec, &epoch_usage, z, &mut rng);
        }
        codec.usage_counts = epoch_usage;
        report.recon_l1_curve.push(l1_sum / batches as f64);
        report.total_curve.push(total_sum / batches as f64);
    }

    report.final_usage_fraction = codec.codebook().usage_fraction();
    Ok((codec, report))
}
