//! Joint training of the latent denoiser and the seismic conditioning head.

use super::schedule::{make_linear_schedule, q_sample_batch, NoiseSchedule};
use crate::conditioner::{ShwtConfig, ShwtHead};
use crate::datakit::DatasetManifest;
use crate::error::{Result, SaiiError};
use crate::io::{read_container, sha256_file, write_container, NamedTensor};
use crate::latentcodec::{LatentSpace, VqCodec};
use crate::nn::unet::{UNet, UNetConfig};
use crate::nn::{Adam, AdamConfig, Graph, ParamStore};
use ndarray::{Array4, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DIFFUSION_FORMAT: &str = "saii-diffusion/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Denoiser base width.
    pub width: usize,
    pub temb_dim: usize,
    pub shwt_widths: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub ema_decay: f64,
    /// Write an intermediate checkpoint every this many epochs (0 = off).
    pub checkpoint_every: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            timesteps: 1000,
            beta_start: 1e-4,
            beta_end: 2e-2,
            width: 32,
            temb_dim: 64,
            shwt_widths: vec![6, 6],
            lr: 2e-4,
            epochs: 60,
            batch_size: 16,
            ema_decay: 0.995,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionTrainReport {
    pub loss_curve: Vec<f64>,
    pub latent_scale: f64,
    pub shwt_param_fraction: f64,
}

/// Denoiser + conditioning head + schedule, with EMA weights for sampling.
#[derive(Debug)]
pub struct DiffusionModel {
    pub cfg: DiffusionConfig,
    pub latent_channels: usize,
    pub store: ParamStore,
    pub unet: UNet,
    pub shwt: ShwtHead,
    pub schedule: NoiseSchedule,
    /// Global latent standard deviation; diffusion operates on z / scale.
    pub latent_scale: f64,
    pub codec_hash: String,
    pub ema: Vec<Array4<f64>>,
}

/// The checkpoint form of [`DiffusionModel`] on disk.
pub type DiffusionCheckpoint = DiffusionModel;

impl DiffusionModel {
    pub fn new(
        cfg: DiffusionConfig,
        latent_channels: usize,
        downsample_factor: usize,
        codec_hash: String,
        seed: u64,
    ) -> Result<Self> {
        let schedule = make_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = downsample_factor.trailing_zeros() as usize;
        if cfg.shwt_widths.len() != levels {
            return Err(SaiiError::Parameter(format!(
                "shwt_widths has {} entries, downsample factor {} needs {}",
                cfg.shwt_widths.len(),
                downsample_factor,
                levels
            )));
        }
        let unet = UNet::new(
            &mut store,
            &mut rng,
            "denoiser",
            UNetConfig {
                in_channels: 3 * latent_channels,
                out_channels: latent_channels,
                width: cfg.width,
                levels: 2,
                temb_dim: Some(cfg.temb_dim),
                final_tanh: false,
                zero_init_out: true,
            },
        );
        let shwt = ShwtHead::new(
            &mut store,
            &mut rng,
            ShwtConfig {
                levels,
                widths: cfg.shwt_widths.clone(),
                latent_channels,
                use_batch_norm: true,
            },
        )?;
        let ema = store.tensors.clone();
        Ok(Self {
            cfg,
            latent_channels,
            store,
            unet,
            shwt,
            schedule,
            latent_scale: 1.0,
            codec_hash,
            ema,
        })
    }

    /// Parameter store with EMA weights substituted, for sampling.
    pub fn eval_params(&self) -> ParamStore {
        let mut s = ParamStore::new();
        for (name, t) in self.store.names.iter().zip(self.ema.iter()) {
            s.add(name.clone(), t.clone());
        }
        s
    }

    /// Eval-mode noise prediction over a batch, given scaled latents and the
    /// raw conditioning inputs already projected to the latent grid.
    pub fn predict_eps(
        &self,
        params: &ParamStore,
        z_t: &Array4<f64>,
        ts: &[usize],
        l_z: &Array4<f64>,
        d_z: &Array4<f64>,
    ) -> Array4<f64> {
        let mut g = Graph::new();
        let zt = g.input(z_t.clone());
        let lz = g.input(l_z.clone());
        let dz = g.input(d_z.clone());
        let x = g.concat(&[zt, lz, dz]);
        let out = self.unet.forward(&mut g, params, x, Some(ts));
        g.value(out).clone()
    }

    /// One optimization step on a batch; returns the loss value.
    #[allow(clippy::too_many_arguments)]
    pub fn training_step(
        &mut self,
        z0: &Array4<f64>,
        l_z: &Array4<f64>,
        d: &Array4<f64>,
        opt: &mut Adam,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let n = z0.dim().0;
        let ts: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=self.schedule.timesteps)).collect();
        let eps = Array4::from_shape_fn(z0.raw_dim(), |_| StandardNormal.sample(rng));
        let z_t = q_sample_batch(z0, &ts, &eps, &self.schedule)?;

        let mut g = Graph::new();
        let d_in = g.input(d.clone());
        let d_z = self.shwt.forward_train(&mut g, &self.store, d_in);
        let zt = g.input(z_t);
        let lz = g.input(l_z.clone());
        let x = g.concat(&[zt, lz, d_z]);
        let eps_hat = self.unet.forward(&mut g, &self.store, x, Some(&ts));
        let loss = g.mse_loss(eps_hat, &eps);
        let loss_val = g.value(loss)[[0, 0, 0, 0]];
        if !loss_val.is_finite() {
            return Err(SaiiError::Numerical(format!("diffusion loss diverged ({loss_val})")));
        }
        self.store.zero_grads();
        g.backward(loss, &mut self.store);
        opt.step(&mut self.store);
        let decay = self.cfg.ema_decay;
        for (e, t) in self.ema.iter_mut().zip(self.store.tensors.iter()) {
            e.zip_mut_with(t, |ev, &tv| *ev = decay * *ev + (1.0 - decay) * tv);
        }
        Ok(loss_val)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "config": self.cfg,
            "latent_channels": self.latent_channels,
            "schedule": { "timesteps": self.schedule.timesteps,
                          "beta_start": self.cfg.beta_start,
                          "beta_end": self.cfg.beta_end },
            "latent_scale": self.latent_scale,
            "codec_hash": self.codec_hash,
            "shwt_levels": self.shwt.cfg.levels,
        });
        let mut tensors: Vec<NamedTensor> = self
            .store
            .names
            .iter()
            .zip(self.store.tensors.iter())
            .map(|(n, t)| NamedTensor::from_array4(n.clone(), t))
            .collect();
        for (n, t) in self.store.names.iter().zip(self.ema.iter()) {
            tensors.push(NamedTensor::from_array4(format!("ema.{n}"), t));
        }
        for (i, (mean, var)) in self.shwt.bn_states().into_iter().enumerate() {
            tensors.push(NamedTensor::from_array1(format!("shwt.l{i}.bn.running_mean"), &mean));
            tensors.push(NamedTensor::from_array1(format!("shwt.l{i}.bn.running_var"), &var));
        }
        write_container(path, DIFFUSION_FORMAT, &meta, &tensors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, tensors) = read_container(path, DIFFUSION_FORMAT)?;
        let cfg: DiffusionConfig = serde_json::from_value(meta["config"].clone())?;
        let latent_channels: usize = serde_json::from_value(meta["latent_channels"].clone())?;
        let levels: usize = serde_json::from_value(meta["shwt_levels"].clone())?;
        let codec_hash: String = serde_json::from_value(meta["codec_hash"].clone())?;
        let latent_scale: f64 = serde_json::from_value(meta["latent_scale"].clone())?;
        let mut model =
            DiffusionModel::new(cfg, latent_channels, 1 << levels, codec_hash, 0)?;
        model.latent_scale = latent_scale;

        let by_name: std::collections::HashMap<&str, &NamedTensor> =
            tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        for (i, name) in model.store.names.clone().iter().enumerate() {
            let t = by_name
                .get(name.as_str())
                .ok_or_else(|| SaiiError::Checkpoint(format!("missing tensor {name}")))?;
            model.store.tensors[i] = t.to_array4()?;
            let e = by_name
                .get(format!("ema.{name}").as_str())
                .ok_or_else(|| SaiiError::Checkpoint(format!("missing tensor ema.{name}")))?;
            model.ema[i] = e.to_array4()?;
        }
        let mut bn_states = Vec::new();
        for i in 0..levels {
            let mean = by_name
                .get(format!("shwt.l{i}.bn.running_mean").as_str())
                .ok_or_else(|| SaiiError::Checkpoint("missing bn running mean".into()))?
                .to_array1()?;
            let var = by_name
                .get(format!("shwt.l{i}.bn.running_var").as_str())
                .ok_or_else(|| SaiiError::Checkpoint("missing bn running var".into()))?
                .to_array1()?;
            bn_states.push((mean, var));
        }
        model.shwt.set_bn_states(bn_states);
        Ok(model)
    }
}

/// Pre-encodes the corpus with the frozen codec and trains the denoiser and
/// conditioning head jointly.
pub fn train_diffusion(
    manifest: &DatasetManifest,
    codec: &VqCodec,
    cfg: &DiffusionConfig,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<(DiffusionModel, DiffusionTrainReport)> {
    if manifest.entries.is_empty() {
        return Err(SaiiError::Parameter("manifest has no entries".into()));
    }
    let shape = manifest.entries[0].shape;
    for e in &manifest.entries {
        if e.shape != shape {
            return Err(SaiiError::Dimension(format!(
                "dataset shapes differ: {:?} vs {:?}; diffusion training needs a uniform grid",
                e.shape, shape
            )));
        }
    }
    let f = codec.cfg.downsample_factor;
    if shape.0 % f != 0 || shape.1 % f != 0 {
        return Err(SaiiError::Dimension(format!(
            "patch shape {shape:?} not divisible by the codec factor {f}"
        )));
    }
    let norm = codec.norm;

    // pre-encode both impedance and its low-frequency condition
    let n = manifest.entries.len();
    let (lh, lw) = (shape.0 / f, shape.1 / f);
    let c = codec.cfg.latent_channels;
    let mut z0_all = Array4::zeros((n, c, lh, lw));
    let mut lz_all = Array4::zeros((n, c, lh, lw));
    let mut d_all = Array4::zeros((n, 1, shape.0, shape.1));
    for (i, e) in manifest.entries.iter().enumerate() {
        let imp = manifest.read_impedance(e)?.mapv(|v| norm.normalize_imp(v));
        let low = manifest.read_lowfreq(e)?.mapv(|v| norm.normalize_imp(v));
        let seis = manifest.read_seismic(e)?.mapv(|v| norm.normalize_seis(v));
        let zi = codec.encode(&imp, LatentSpace::Impedance)?;
        let zl = codec.encode(&low, LatentSpace::LowFreq)?;
        for ci in 0..c {
            for ii in 0..lh {
                for jj in 0..lw {
                    z0_all[[i, ci, ii, jj]] = zi.values[[ci, ii, jj]];
                    lz_all[[i, ci, ii, jj]] = zl.values[[ci, ii, jj]];
                }
            }
        }
        for ii in 0..shape.0 {
            for jj in 0..shape.1 {
                d_all[[i, 0, ii, jj]] = seis[[ii, jj]];
            }
        }
    }

    // scale latents to ~unit variance before diffusion
    let mean = z0_all.sum() / z0_all.len() as f64;
    let var = z0_all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / z0_all.len() as f64;
    let latent_scale = var.sqrt().max(1e-6);
    z0_all.mapv_inplace(|v| v / latent_scale);
    lz_all.mapv_inplace(|v| v / latent_scale);

    let codec_hash = codec.file_hash.clone().unwrap_or_else(|| "unsaved".into());
    let mut model = DiffusionModel::new(cfg.clone(), c, f, codec_hash, seed)?;
    model.latent_scale = latent_scale;
    let mut opt = Adam::new(&model.store, AdamConfig { lr: cfg.lr, ..Default::default() });
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_curve = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let z0 = select_batch(&z0_all, chunk);
            let lz = select_batch(&lz_all, chunk);
            let d = select_batch(&d_all, chunk);
            sum += model.training_step(&z0, &lz, &d, &mut opt, &mut rng)?;
            count += 1;
        }
        loss_curve.push(sum / count as f64);
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                model.save(&dir.join(format!("diffusion_epoch{:04}.ckpt", epoch + 1)))?;
            }
        }
    }

    let shwt_params = model.shwt.param_count(&model.store);
    let report = DiffusionTrainReport {
        loss_curve,
        latent_scale,
        shwt_param_fraction: shwt_params as f64
            / (model.store.num_scalars() - shwt_params) as f64,
    };
    Ok((model, report))
}

fn select_batch(all: &Array4<f64>, idxs: &[usize]) -> Array4<f64> {
    let views: Vec<_> = idxs.iter().map(|&i| all.index_axis(Axis(0), i)).collect();
    ndarray::stack(Axis(0), &views).expect("batch stack")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::{build_training_set, random_layered_model, BuildOptions, LayerStats};
    use crate::latentcodec::{train_codec, CodecConfig};

    fn fixture(dir: &Path) -> (DatasetManifest, VqCodec) {
        let models: Vec<_> = (0..10)
            .map(|i| random_layered_model(32, 32, &LayerStats::default(), 900 + i as u64).unwrap())
            .collect();
        let manifest =
            build_training_set(&models, &[30.0], &[6.0], Some(20.0), dir, &BuildOptions::default())
                .unwrap();
        let cfg = CodecConfig {
            codebook_size: 32,
            base_width: 8,
            epochs: 4,
            ..Default::default()
        };
        let (mut codec, _) = train_codec(&manifest, &cfg, 11).unwrap();
        codec.save(&dir.join("codec.ckpt")).unwrap();
        let codec = VqCodec::load(&dir.join("codec.ckpt")).unwrap();
        (manifest, codec)
    }

    fn tiny_cfg(epochs: usize) -> DiffusionConfig {
        DiffusionConfig {
            width: 16,
            temb_dim: 32,
            lr: 1e-3,
            epochs,
            batch_size: 5,
            ..Default::default()
        }
    }

    #[test]
    fn initial_loss_is_near_unity_with_zero_output_head() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, codec) = fixture(dir.path());
        let (_, report) = train_diffusion(&manifest, &codec, &tiny_cfg(1), 5, None).unwrap();
        // the output projection starts at zero, so the first losses average
        // E||eps||^2 per element = 1 up to Monte-Carlo scatter
        assert!(
            (report.loss_curve[0] - 1.0).abs() < 0.12,
            "first-epoch loss {}",
            report.loss_curve[0]
        );
    }

    #[test]
    fn perfect_noise_oracle_has_zero_loss() {
        // the loss is plain MSE between drawn and predicted noise
        let mut g = Graph::new();
        let eps = Array4::from_shape_fn((2, 3, 4, 4), |(a, b, c, d)| {
            ((a + 2 * b + 3 * c + 5 * d) as f64 * 0.37).sin()
        });
        let pred = g.input(eps.clone());
        let loss = g.mse_loss(pred, &eps);
        assert_eq!(g.value(loss)[[0, 0, 0, 0]], 0.0);
    }

    #[test]
    fn smoothed_loss_decreases_and_codec_stays_frozen() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, codec) = fixture(dir.path());
        let codec_params_before: Vec<Array4<f64>> = codec.store.tensors.clone();
        let (model, report) = train_diffusion(&manifest, &codec, &tiny_cfg(50), 6, None).unwrap();
        let early: f64 = report.loss_curve[..5].iter().sum::<f64>() / 5.0;
        let late: f64 =
            report.loss_curve[report.loss_curve.len() - 5..].iter().sum::<f64>() / 5.0;
        assert!(
            late <= 0.7 * early,
            "smoothed loss only moved {early} -> {late}"
        );
        for (a, b) in codec_params_before.iter().zip(codec.store.tensors.iter()) {
            assert_eq!(a, b, "codec parameters changed during diffusion training");
        }
        // lightweight conditioning head
        assert!(
            report.shwt_param_fraction < 0.01,
            "shwt fraction {}",
            report.shwt_param_fraction
        );
        assert_eq!(model.latent_channels, 3);
    }

    #[test]
    fn resume_reproduces_identical_next_step_loss() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, codec) = fixture(dir.path());
        let (model, _) = train_diffusion(&manifest, &codec, &tiny_cfg(2), 7, None).unwrap();
        let path = dir.path().join("diff.ckpt");
        model.save(&path).unwrap();

        let run = |seed: u64| -> f64 {
            let mut m = DiffusionModel::load(&path).unwrap();
            let mut opt = Adam::new(&m.store, AdamConfig { lr: 1e-3, ..Default::default() });
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z0 = Array4::from_elem((2, 3, 8, 8), 0.3);
            let lz = Array4::from_elem((2, 3, 8, 8), 0.1);
            let d = Array4::from_elem((2, 1, 32, 32), 0.05);
            m.training_step(&z0, &lz, &d, &mut opt, &mut rng).unwrap()
        };
        let a = run(1234);
        let b = run(1234);
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_dataset_shapes_rejected_before_training() {
        let dir = tempfile::tempdir().unwrap();
        let (mut manifest, codec) = fixture(dir.path());
        manifest.entries[1].shape = (16, 32); // corrupt
        let err = train_diffusion(&manifest, &codec, &tiny_cfg(1), 8, None);
        assert!(err.is_err());
    }

    #[test]
    fn checkpoint_roundtrip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, codec) = fixture(dir.path());
        let (model, _) = train_diffusion(&manifest, &codec, &tiny_cfg(2), 9, None).unwrap();
        let path = dir.path().join("diff.ckpt");
        model.save(&path).unwrap();
        let loaded = DiffusionModel::load(&path).unwrap();
        let loaded2 = DiffusionModel::load(&path).unwrap();
        let params = loaded.eval_params();
        let params2 = loaded2.eval_params();
        let z = Array4::from_elem((1, 3, 8, 8), 0.2);
        let l = Array4::from_elem((1, 3, 8, 8), 0.05);
        let dz = Array4::from_elem((1, 3, 8, 8), -0.1);
        let a = loaded.predict_eps(&params, &z, &[500], &l, &dz);
        let b = loaded2.predict_eps(&params2, &z, &[500], &l, &dz);
        assert_eq!(a, b);
    }
}
