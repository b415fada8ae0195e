//! Convolutional encoder/decoder pair around the vector quantizer.

use super::quantize::{quantize, Codebook};
use super::{CodecConfig, LatentSpace, LatentTensor};
use crate::datakit::Normalization;
use crate::error::{Result, SaiiError};
use crate::io::{read_container, sha256_file, write_container, NamedTensor};
use crate::nn::{Conv2d, Graph, GroupNorm, ParamStore, ResBlock, Var};
use ndarray::{s, Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub const CODEC_FORMAT: &str = "saii-codec/1";

fn level_width(base: usize, level: usize) -> usize {
    if level == 0 {
        base
    } else {
        2 * base
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderNet {
    conv_in: Conv2d,
    stages: Vec<(ResBlock, Conv2d)>,
    mid: ResBlock,
    out_gn: GroupNorm,
    conv_out: Conv2d,
}

impl EncoderNet {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, cfg: &CodecConfig) -> Self {
        let w = cfg.base_width;
        let levels = cfg.levels();
        let conv_in = Conv2d::new(store, rng, "enc.conv_in", 1, w, 3, 1, 1);
        let mut stages = Vec::new();
        for l in 0..levels {
            let cw = level_width(w, l);
            let nw = level_width(w, l + 1);
            stages.push((
                ResBlock::new(store, rng, &format!("enc.l{l}.res"), cw, cw, None),
                Conv2d::new(store, rng, &format!("enc.l{l}.down"), cw, nw, 3, 2, 1),
            ));
        }
        let mw = level_width(w, levels);
        EncoderNet {
            conv_in,
            stages,
            mid: ResBlock::new(store, rng, "enc.mid", mw, mw, None),
            out_gn: GroupNorm::new(store, "enc.out_gn", mw),
            conv_out: Conv2d::new(store, rng, "enc.conv_out", mw, cfg.latent_channels, 3, 1, 1),
        }
    }

    pub(crate) fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let mut h = self.conv_in.forward(g, store, x);
        for (res, down) in &self.stages {
            h = res.forward(g, store, h, None);
            h = down.forward(g, store, h);
        }
        h = self.mid.forward(g, store, h, None);
        h = self.out_gn.forward(g, store, h);
        h = g.silu(h);
        self.conv_out.forward(g, store, h)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct DecoderNet {
    conv_in: Conv2d,
    mid: ResBlock,
    stages: Vec<(Conv2d, ResBlock)>,
    out_gn: GroupNorm,
    conv_out: Conv2d,
}

impl DecoderNet {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, cfg: &CodecConfig) -> Self {
        let w = cfg.base_width;
        let levels = cfg.levels();
        let mw = level_width(w, levels);
        let conv_in = Conv2d::new(store, rng, "dec.conv_in", cfg.latent_channels, mw, 3, 1, 1);
        let mid = ResBlock::new(store, rng, "dec.mid", mw, mw, None);
        let mut stages = Vec::new();
        for l in (0..levels).rev() {
            let cw = level_width(w, l);
            let uw = level_width(w, l + 1);
            stages.push((
                Conv2d::new(store, rng, &format!("dec.l{l}.up"), uw, cw, 3, 1, 1),
                ResBlock::new(store, rng, &format!("dec.l{l}.res"), cw, cw, None),
            ));
        }
        DecoderNet {
            conv_in,
            mid,
            stages,
            out_gn: GroupNorm::new(store, "dec.out_gn", w),
            conv_out: Conv2d::new(store, rng, "dec.conv_out", w, 1, 3, 1, 1),
        }
    }

    pub(crate) fn forward(&self, g: &mut Graph, store: &ParamStore, z: Var) -> Var {
        let mut h = self.conv_in.forward(g, store, z);
        h = self.mid.forward(g, store, h, None);
        for (up_conv, res) in &self.stages {
            h = g.upsample2x(h);
            h = up_conv.forward(g, store, h);
            h = res.forward(g, store, h, None);
        }
        h = self.out_gn.forward(g, store, h);
        h = g.silu(h);
        h = self.conv_out.forward(g, store, h);
        g.tanh(h)
    }
}

/// Encoder + decoder + codebook with the dataset normalization baked in.
#[derive(Debug)]
pub struct VqCodec {
    pub cfg: CodecConfig,
    pub store: ParamStore,
    pub norm: Normalization,
    pub(crate) encoder: EncoderNet,
    pub(crate) decoder: DecoderNet,
    pub(crate) codebook_idx: usize,
    pub usage_counts: Vec<u64>,
    /// Hash of the checkpoint file this codec was loaded from or saved to.
    pub file_hash: Option<String>,
}

impl VqCodec {
    pub fn new(cfg: CodecConfig, norm: Normalization, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderNet::new(&mut store, &mut rng, &cfg);
        let decoder = DecoderNet::new(&mut store, &mut rng, &cfg);
        let cb = Array4::from_shape_fn((cfg.codebook_size, cfg.latent_channels, 1, 1), |_| {
            rng.gen_range(-0.5..0.5)
        });
        let codebook_idx = store.add("codebook", cb);
        Ok(Self {
            cfg,
            store,
            norm,
            encoder,
            decoder,
            codebook_idx,
            usage_counts: vec![0; cfg.codebook_size],
            file_hash: None,
        })
    }

    pub fn codebook(&self) -> Codebook {
        let t = &self.store.tensors[self.codebook_idx];
        let (k, c, _, _) = t.dim();
        let vectors = Array2::from_shape_fn((k, c), |(i, j)| t[[i, j, 0, 0]]);
        Codebook { vectors, usage_counts: self.usage_counts.clone() }
    }

    pub(crate) fn codebook_param(&self) -> usize {
        self.codebook_idx
    }

    fn pad_to_factor(&self, x: &Array2<f64>) -> Result<(Array4<f64>, (usize, usize))> {
        let f = self.cfg.downsample_factor;
        let (m, n) = x.dim();
        if m < f || n < f {
            return Err(SaiiError::Dimension(format!(
                "input {m}x{n} smaller than downsample factor {f}"
            )));
        }
        let pr = (f - m % f) % f;
        let pc = (f - n % f) % f;
        let (mp, np) = (m + pr, n + pc);
        let mut out = Array4::zeros((1, 1, mp, np));
        for i in 0..mp {
            let si = if i < m { i } else { 2 * m - 1 - i }; // reflect at the bottom edge
            for j in 0..np {
                let sj = if j < n { j } else { 2 * n - 1 - j };
                out[[0, 0, i, j]] = x[[si, sj]];
            }
        }
        Ok((out, (pr, pc)))
    }

    /// Encodes a normalized 2D field into the latent space (pre-quantization,
    /// which is where diffusion operates). Deterministic.
    pub fn encode(&self, x: &Array2<f64>, tag: LatentSpace) -> Result<LatentTensor> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SaiiError::Domain("encode input contains non-finite values".into()));
        }
        let (batch, pad) = self.pad_to_factor(x)?;
        let mut g = Graph::new();
        let xv = g.input(batch);
        let z = self.encoder.forward(&mut g, &self.store, xv);
        let zv = g.value(z);
        let (_, c, h, w) = zv.dim();
        let values = Array3::from_shape_fn((c, h, w), |(ci, i, j)| zv[[0, ci, i, j]]);
        Ok(LatentTensor { values, space_tag: tag, pad })
    }

    /// Decodes a latent back to a normalized 2D field, quantizing it to the
    /// codebook first and removing any recorded encode padding.
    pub fn decode(&self, z: &LatentTensor) -> Result<Array2<f64>> {
        let (c, _, _) = z.values.dim();
        if c != self.cfg.latent_channels {
            return Err(SaiiError::Dimension(format!(
                "latent has {c} channels, codec expects {}",
                self.cfg.latent_channels
            )));
        }
        let (z_q, _, _, _) = quantize(&z.values, &self.codebook())?;
        let (cc, h, w) = z_q.dim();
        let mut batch = Array4::zeros((1, cc, h, w));
        for ci in 0..cc {
            for i in 0..h {
                for j in 0..w {
                    batch[[0, ci, i, j]] = z_q[[ci, i, j]];
                }
            }
        }
        let mut g = Graph::new();
        let zv = g.input(batch);
        let out = self.decoder.forward(&mut g, &self.store, zv);
        let ov = g.value(out);
        let (_, _, mh, mw) = ov.dim();
        let (pr, pc) = z.pad;
        let keep_r = mh - pr;
        let keep_c = mw - pc;
        Ok(Array2::from_shape_fn((keep_r, keep_c), |(i, j)| ov[[0, 0, i, j]]))
    }

    /// Batched encoder forward on raw arrays (no graph exposure), used by the
    /// diffusion trainer to pre-encode the corpus.
    pub fn encode_array(&self, x: &Array4<f64>) -> Array4<f64> {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let z = self.encoder.forward(&mut g, &self.store, xv);
        g.value(z).clone()
    }

    /// Batched decode of already-quantized (or continuous) latents.
    pub fn decode_array(&self, z: &Array4<f64>, quantize_first: bool) -> Result<Array4<f64>> {
        let z_in = if quantize_first {
            let book = self.codebook();
            let (n, c, h, w) = z.dim();
            let mut out = Array4::zeros((n, c, h, w));
            for ni in 0..n {
                let zi = Array3::from_shape_fn((c, h, w), |(ci, i, j)| z[[ni, ci, i, j]]);
                let (zq, _, _, _) = quantize(&zi, &book)?;
                for ci in 0..c {
                    for i in 0..h {
                        for j in 0..w {
                            out[[ni, ci, i, j]] = zq[[ci, i, j]];
                        }
                    }
                }
            }
            out
        } else {
            z.clone()
        };
        let mut g = Graph::new();
        let zv = g.input(z_in);
        let out = self.decoder.forward(&mut g, &self.store, zv);
        Ok(g.value(out).clone())
    }

    pub(crate) fn encoder_net(&self) -> &EncoderNet {
        &self.encoder
    }

    pub(crate) fn decoder_net(&self) -> &DecoderNet {
        &self.decoder
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "config": self.cfg,
            "normalization": self.norm,
            "usage_counts": self.usage_counts,
        });
        let tensors: Vec<NamedTensor> = self
            .store
            .names
            .iter()
            .zip(self.store.tensors.iter())
            .map(|(n, t)| NamedTensor::from_array4(n.clone(), t))
            .collect();
        write_container(path, CODEC_FORMAT, &meta, &tensors)?;
        self.file_hash = Some(sha256_file(path)?);
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, tensors) = read_container(path, CODEC_FORMAT)?;
        let cfg: CodecConfig = serde_json::from_value(meta["config"].clone())?;
        let norm: Normalization = serde_json::from_value(meta["normalization"].clone())?;
        let usage: Vec<u64> = serde_json::from_value(meta["usage_counts"].clone())?;
        let mut codec = VqCodec::new(cfg, norm, 0)?;
        let mut by_name: std::collections::HashMap<&str, &NamedTensor> =
            tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        for (i, name) in codec.store.names.iter().enumerate() {
            let t = by_name.remove(name.as_str()).ok_or_else(|| {
                SaiiError::Checkpoint(format!("checkpoint missing tensor {name}"))
            })?;
            let arr = t.to_array4()?;
            if arr.dim() != codec.store.tensors[i].dim() {
                return Err(SaiiError::Checkpoint(format!(
                    "tensor {name}: shape {:?} vs expected {:?}",
                    arr.dim(),
                    codec.store.tensors[i].dim()
                )));
            }
            codec.store.tensors[i] = arr;
        }
        codec.usage_counts = usage;
        codec.file_hash = Some(sha256_file(path)?);
        Ok(codec)
    }

    /// Latent spatial dims for a given input shape.
    pub fn latent_dims(&self, input: (usize, usize)) -> (usize, usize) {
        let f = self.cfg.downsample_factor;
        (input.0.div_ceil(f), input.1.div_ceil(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm() -> Normalization {
        Normalization { imp_min: 2000.0, imp_max: 9000.0, seis_scale: 1.0 }
    }

    fn small_cfg() -> CodecConfig {
        CodecConfig {
            downsample_factor: 4,
            latent_channels: 3,
            codebook_size: 16,
            base_width: 8,
            ..Default::default()
        }
    }

    #[test]
    fn shape_contract_holds() {
        let codec = VqCodec::new(small_cfg(), norm(), 1).unwrap();
        let x = Array2::from_elem((64, 64), 0.1);
        let z = codec.encode(&x, LatentSpace::Impedance).unwrap();
        assert_eq!(z.values.dim(), (3, 16, 16));
        let back = codec.decode(&z).unwrap();
        assert_eq!(back.dim(), (64, 64));
    }

    #[test]
    fn large_input_shape_arithmetic() {
        let codec = VqCodec::new(small_cfg(), norm(), 1).unwrap();
        let x = Array2::zeros((256, 256));
        let z = codec.encode(&x, LatentSpace::Impedance).unwrap();
        assert_eq!(z.values.dim(), (3, 64, 64));
    }

    #[test]
    fn encode_is_deterministic() {
        let codec = VqCodec::new(small_cfg(), norm(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((32, 32), |_| rng.gen_range(-1.0..1.0));
        let a = codec.encode(&x, LatentSpace::Impedance).unwrap();
        let b = codec.encode(&x, LatentSpace::Impedance).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn same_encoder_serves_impedance_and_lowfreq() {
        let codec = VqCodec::new(small_cfg(), norm(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((32, 32), |_| rng.gen_range(-1.0..1.0));
        let smooth = x.mapv(|v| v * 0.2);
        let zi = codec.encode(&x, LatentSpace::Impedance).unwrap();
        let zl = codec.encode(&smooth, LatentSpace::LowFreq).unwrap();
        assert_eq!(zi.values.dim(), zl.values.dim());
        assert_eq!(zl.space_tag, LatentSpace::LowFreq);
    }

    #[test]
    fn non_divisible_inputs_pad_and_restore() {
        let codec = VqCodec::new(small_cfg(), norm(), 5).unwrap();
        let x = Array2::from_elem((30, 23), 0.25);
        let z = codec.encode(&x, LatentSpace::Impedance).unwrap();
        assert_eq!(z.pad, (2, 1));
        let back = codec.decode(&z).unwrap();
        assert_eq!(back.dim(), (30, 23));
    }

    #[test]
    fn rejects_non_finite_input() {
        let codec = VqCodec::new(small_cfg(), norm(), 6).unwrap();
        let mut x = Array2::zeros((16, 16));
        x[[3, 3]] = f64::NAN;
        assert!(codec.encode(&x, LatentSpace::Impedance).is_err());
    }

    #[test]
    fn rejects_wrong_latent_channels() {
        let codec = VqCodec::new(small_cfg(), norm(), 7).unwrap();
        let z = LatentTensor::new(Array3::zeros((5, 8, 8)), LatentSpace::Impedance);
        assert!(codec.decode(&z).is_err());
    }

    #[test]
    fn save_load_reproduces_encode_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codec.ckpt");
        let mut codec = VqCodec::new(small_cfg(), norm(), 8).unwrap();
        codec.save(&path).unwrap();
        let loaded = VqCodec::load(&path).unwrap();
        // params pass through f32 storage, so compare the loaded codec with a
        // second load rather than the original
        let loaded2 = VqCodec::load(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((32, 32), |_| rng.gen_range(-1.0..1.0));
        let a = loaded.encode(&x, LatentSpace::Impedance).unwrap();
        let b = loaded2.encode(&x, LatentSpace::Impedance).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(loaded.file_hash, loaded2.file_hash);
    }
}
