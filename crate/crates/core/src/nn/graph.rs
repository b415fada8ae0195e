//! Tape-based reverse-mode autodiff.
//!
//! A [`Graph`] is rebuilt for every forward pass. Each op appends a node
//! holding its output value and a backward closure that maps the output
//! gradient to parent gradients. Parameters live outside the graph in a
//! [`ParamStore`]; `backward` accumulates their gradients back into it.

use ndarray::{s, Array1, Array2, Array4};
use rayon::prelude::*;

/// Handle to a node in the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackFn = Box<dyn Fn(&Array4<f64>) -> Vec<Array4<f64>>>;

struct Node {
    value: Array4<f64>,
    parents: Vec<usize>,
    backward: Option<BackFn>,
    param_idx: Option<usize>,
    needs_grad: bool,
}

/// Named parameter tensors with their gradient accumulators.
#[derive(Debug, Default)]
pub struct ParamStore {
    pub tensors: Vec<Array4<f64>>,
    pub grads: Vec<Array4<f64>>,
    pub names: Vec<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Array4<f64>) -> usize {
        let grad = Array4::zeros(tensor.raw_dim());
        self.tensors.push(tensor);
        self.grads.push(grad);
        self.names.push(name.into());
        self.tensors.len() - 1
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.iter_mut() {
            g.fill(0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Array4<f64> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array4<f64>, parents: Vec<usize>, backward: Option<BackFn>) -> Var {
        let needs_grad = parents.iter().any(|&p| self.nodes[p].needs_grad);
        self.nodes.push(Node { value, parents, backward, param_idx: None, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf: no gradient flows into it.
    pub fn input(&mut self, value: Array4<f64>) -> Var {
        self.nodes.push(Node { value, parents: vec![], backward: None, param_idx: None, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Parameter leaf bound to `store.tensors[idx]`.
    pub fn param(&mut self, store: &ParamStore, idx: usize) -> Var {
        self.nodes.push(Node {
            value: store.tensors[idx].clone(),
            parents: vec![],
            backward: None,
            param_idx: Some(idx),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is requested even though it is not a parameter.
    /// Used by gradient checks and by optimization over inputs.
    pub fn input_with_grad(&mut self, value: Array4<f64>) -> Var {
        self.nodes.push(Node { value, parents: vec![], backward: None, param_idx: None, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g| vec![g.clone(), g.clone()])),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g| vec![g.clone(), g.mapv(|v| -v)])),
        )
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.nodes[x.0].value.mapv(|v| scale * v + shift);
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g| vec![g.mapv(|v| scale * v)])),
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.nodes[x.0].value.clone();
        let value = xv.mapv(|v| v.max(0.0));
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g| {
                let mut dx = g.clone();
                dx.zip_mut_with(&xv, |d, &v| {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                });
                vec![dx]
            })),
        )
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        let xv = self.nodes[x.0].value.clone();
        let value = xv.mapv(|v| if v >= 0.0 { v } else { alpha * v });
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g| {
                let mut dx = g.clone();
                dx.zip_mut_with(&xv, |d, &v| {
                    if v < 0.0 {
                        *d *= alpha;
                    }
                });
                vec![dx]
            })),
        )
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let xv = self.nodes[x.0].value.clone();
        let value = xv.mapv(|v| v / (1.0 + (-v).exp()));
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g| {
                let mut dx = g.clone();
                dx.zip_mut_with(&xv, |d, &v| {
                    let s = 1.0 / (1.0 + (-v).exp());
                    *d *= s * (1.0 + v * (1.0 - s));
                });
                vec![dx]
            })),
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(f64::tanh);
        let yv = value.clone();
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g| {
                let mut dx = g.clone();
                dx.zip_mut_with(&yv, |d, &y| *d *= 1.0 - y * y);
                vec![dx]
            })),
        )
    }

    // ---- shape ops ----

    /// Concatenate along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.nodes[v.0].value.view()).collect();
        let value = ndarray::concatenate(ndarray::Axis(1), &views).expect("concat shapes");
        let channels: Vec<usize> = parts.iter().map(|v| self.nodes[v.0].value.dim().1).collect();
        self.push(
            value,
            parts.iter().map(|v| v.0).collect(),
            Some(Box::new(move |g| {
                let mut out = Vec::with_capacity(channels.len());
                let mut start = 0;
                for &c in &channels {
                    out.push(g.slice(s![.., start..start + c, .., ..]).to_owned());
                    start += c;
                }
                out
            })),
        )
    }

    /// Broadcast-add a `[N, C, 1, 1]` tensor onto `[N, C, H, W]`.
    pub fn add_broadcast(&mut self, x: Var, e: Var) -> Var {
        let ev = self.nodes[e.0].value.clone();
        let xv = &self.nodes[x.0].value;
        let (n, c, _, _) = xv.dim();
        assert_eq!(ev.dim(), (n, c, 1, 1), "broadcast operand must be [N,C,1,1]");
        let mut value = xv.clone();
        for ni in 0..n {
            for ci in 0..c {
                let b = ev[[ni, ci, 0, 0]];
                value.slice_mut(s![ni, ci, .., ..]).mapv_inplace(|v| v + b);
            }
        }
        self.push(
            value,
            vec![x.0, e.0],
            Some(Box::new(move |g| {
                let (n, c, _, _) = g.dim();
                let mut de = Array4::zeros((n, c, 1, 1));
                for ni in 0..n {
                    for ci in 0..c {
                        de[[ni, ci, 0, 0]] = g.slice(s![ni, ci, .., ..]).sum();
                    }
                }
                vec![g.clone(), de]
            })),
        )
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, c, h, w) = xv.dim();
        let mut value = Array4::zeros((n, c, 2 * h, 2 * w));
        for ni in 0..n {
            for ci in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        let v = xv[[ni, ci, i, j]];
                        value[[ni, ci, 2 * i, 2 * j]] = v;
                        value[[ni, ci, 2 * i, 2 * j + 1]] = v;
                        value[[ni, ci, 2 * i + 1, 2 * j]] = v;
                        value[[ni, ci, 2 * i + 1, 2 * j + 1]] = v;
                    }
                }
            }
        }
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g| {
                let (n, c, h2, w2) = g.dim();
                let (h, w) = (h2 / 2, w2 / 2);
                let mut dx = Array4::zeros((n, c, h, w));
                for ni in 0..n {
                    for ci in 0..c {
                        for i in 0..h {
                            for j in 0..w {
                                dx[[ni, ci, i, j]] = g[[ni, ci, 2 * i, 2 * j]]
                                    + g[[ni, ci, 2 * i, 2 * j + 1]]
                                    + g[[ni, ci, 2 * i + 1, 2 * j]]
                                    + g[[ni, ci, 2 * i + 1, 2 * j + 1]];
                            }
                        }
                    }
                }
                vec![dx]
            })),
        )
    }

    /// One level of orthonormal 2D Haar analysis applied per channel:
    /// `[N, C, H, W] -> [N, 4C, H/2, W/2]` with subband order LL, LH, HL, HH.
    /// The backward pass is the exact synthesis transform.
    pub fn haar_analysis(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, c, h, w) = xv.dim();
        assert!(h % 2 == 0 && w % 2 == 0, "haar_analysis needs even dims");
        let (hh, wh) = (h / 2, w / 2);
        let mut value = Array4::zeros((n, 4 * c, hh, wh));
        for ni in 0..n {
            for ci in 0..c {
                for i in 0..hh {
                    for j in 0..wh {
                        let a = xv[[ni, ci, 2 * i, 2 * j]];
                        let b = xv[[ni, ci, 2 * i, 2 * j + 1]];
                        let cc = xv[[ni, ci, 2 * i + 1, 2 * j]];
                        let d = xv[[ni, ci, 2 * i + 1, 2 * j + 1]];
                        value[[ni, 4 * ci, i, j]] = (a + b + cc + d) / 2.0;
                        value[[ni, 4 * ci + 1, i, j]] = (a - b + cc - d) / 2.0;
                        value[[ni, 4 * ci + 2, i, j]] = (a + b - cc - d) / 2.0;
                        value[[ni, 4 * ci + 3, i, j]] = (a - b - cc + d) / 2.0;
                    }
                }
            }
        }
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g| {
                let (n, c4, hh, wh) = g.dim();
                let c = c4 / 4;
                let mut dx = Array4::zeros((n, c, 2 * hh, 2 * wh));
                for ni in 0..n {
                    for ci in 0..c {
                        for i in 0..hh {
                            for j in 0..wh {
                                let ll = g[[ni, 4 * ci, i, j]];
                                let lh = g[[ni, 4 * ci + 1, i, j]];
                                let hl = g[[ni, 4 * ci + 2, i, j]];
                                let hhb = g[[ni, 4 * ci + 3, i, j]];
                                dx[[ni, ci, 2 * i, 2 * j]] = (ll + lh + hl + hhb) / 2.0;
                                dx[[ni, ci, 2 * i, 2 * j + 1]] = (ll - lh + hl - hhb) / 2.0;
                                dx[[ni, ci, 2 * i + 1, 2 * j]] = (ll + lh - hl - hhb) / 2.0;
                                dx[[ni, ci, 2 * i + 1, 2 * j + 1]] = (ll - lh - hl + hhb) / 2.0;
                            }
                        }
                    }
                }
                vec![dx]
            })),
        )
    }

    // ---- convolution ----

    /// 2D convolution. `x: [N, C, H, W]`, `w: [O, C, KH, KW]`, optional bias
    /// `[1, O, 1, 1]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xv = self.nodes[x.0].value.clone();
        let wv = self.nodes[w.0].value.clone();
        let (n, c, h, wid) = xv.dim();
        let (o, cw, kh, kw) = wv.dim();
        assert_eq!(c, cw, "conv2d channel mismatch");
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wid + 2 * pad - kw) / stride + 1;

        let w_mat = wv.view().into_shape_with_order((o, c * kh * kw)).unwrap().to_owned();

        let outs: Vec<Array2<f64>> = (0..n)
            .into_par_iter()
            .map(|ni| {
                let cols = im2col(&xv, ni, kh, kw, stride, pad, oh, ow);
                w_mat.dot(&cols)
            })
            .collect();

        let mut value = Array4::zeros((n, o, oh, ow));
        for (ni, out) in outs.into_iter().enumerate() {
            let reshaped = out.into_shape_with_order((o, oh, ow)).unwrap();
            value.slice_mut(s![ni, .., .., ..]).assign(&reshaped);
        }
        if let Some(bv) = b {
            let bias = self.nodes[bv.0].value.clone();
            for ni in 0..n {
                for oi in 0..o {
                    let bval = bias[[0, oi, 0, 0]];
                    value.slice_mut(s![ni, oi, .., ..]).mapv_inplace(|v| v + bval);
                }
            }
        }

        let parents: Vec<usize> = match b {
            Some(bv) => vec![x.0, w.0, bv.0],
            None => vec![x.0, w.0],
        };
        let has_bias = b.is_some();
        self.push(
            value,
            parents,
            Some(Box::new(move |g| {
                let (n, o, oh, ow) = g.dim();
                let (_, c, h, wid) = xv.dim();
                let (_, _, kh, kw) = wv.dim();
                let w_mat = wv.view().into_shape_with_order((o, c * kh * kw)).unwrap().to_owned();

                let per_sample: Vec<(Array4<f64>, Array2<f64>)> = (0..n)
                    .into_par_iter()
                    .map(|ni| {
                        let g_mat = g
                            .slice(s![ni, .., .., ..])
                            .to_owned()
                            .into_shape_with_order((o, oh * ow))
                            .unwrap();
                        let cols = im2col(&xv, ni, kh, kw, stride, pad, oh, ow);
                        let dw_n = g_mat.dot(&cols.t());
                        let dcols = w_mat.t().dot(&g_mat);
                        let dx_n = col2im(&dcols, c, h, wid, kh, kw, stride, pad, oh, ow);
                        (dx_n, dw_n)
                    })
                    .collect();

                let mut dx = Array4::zeros((n, c, h, wid));
                let mut dw_mat = Array2::<f64>::zeros((o, c * kh * kw));
                for (ni, (dx_n, dw_n)) in per_sample.into_iter().enumerate() {
                    dx.slice_mut(s![ni, .., .., ..]).assign(&dx_n.slice(s![0, .., .., ..]));
                    dw_mat += &dw_n;
                }
                let dw = dw_mat.into_shape_with_order((o, c, kh, kw)).unwrap().into_dimensionality().unwrap();

                let mut grads = vec![dx, dw];
                if has_bias {
                    let mut db = Array4::zeros((1, o, 1, 1));
                    for oi in 0..o {
                        db[[0, oi, 0, 0]] = g.slice(s![.., oi, .., ..]).sum();
                    }
                    grads.push(db);
                }
                grads
            })),
        )
    }

    // ---- normalization ----

    /// Group normalization over `(C/groups, H, W)` per sample-group.
    /// `gamma`, `beta` are `[1, C, 1, 1]`.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize, eps: f64) -> Var {
        let xv = self.nodes[x.0].value.clone();
        let gv = self.nodes[gamma.0].value.clone();
        let bv = self.nodes[beta.0].value.clone();
        let (n, c, h, w) = xv.dim();
        assert_eq!(c % groups, 0, "channels must divide groups");
        let gsize = c / groups;
        let m = (gsize * h * w) as f64;

        let mut xhat = Array4::zeros((n, c, h, w));
        let mut inv_std = Array2::zeros((n, groups));
        for ni in 0..n {
            for gi in 0..groups {
                let block = xv.slice(s![ni, gi * gsize..(gi + 1) * gsize, .., ..]);
                let mu = block.sum() / m;
                let var = block.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
                let istd = 1.0 / (var + eps).sqrt();
                inv_std[[ni, gi]] = istd;
                let mut dst = xhat.slice_mut(s![ni, gi * gsize..(gi + 1) * gsize, .., ..]);
                dst.assign(&block);
                dst.mapv_inplace(|v| (v - mu) * istd);
            }
        }
        let mut value = xhat.clone();
        for ci in 0..c {
            let (ga, be) = (gv[[0, ci, 0, 0]], bv[[0, ci, 0, 0]]);
            value.slice_mut(s![.., ci, .., ..]).mapv_inplace(|v| ga * v + be);
        }

        self.push(
            value,
            vec![x.0, gamma.0, beta.0],
            Some(Box::new(move |g| {
                let (n, c, h, w) = g.dim();
                let gsize = c / groups;
                let m = (gsize * h * w) as f64;
                let mut dgamma = Array4::zeros((1, c, 1, 1));
                let mut dbeta = Array4::zeros((1, c, 1, 1));
                for ci in 0..c {
                    let gs = g.slice(s![.., ci, .., ..]);
                    let xs = xhat.slice(s![.., ci, .., ..]);
                    dbeta[[0, ci, 0, 0]] = gs.sum();
                    dgamma[[0, ci, 0, 0]] = gs.iter().zip(xs.iter()).map(|(a, b)| a * b).sum();
                }
                // dL/dxhat = g * gamma
                let mut dxhat = g.clone();
                for ci in 0..c {
                    let ga = gv[[0, ci, 0, 0]];
                    dxhat.slice_mut(s![.., ci, .., ..]).mapv_inplace(|v| v * ga);
                }
                let mut dx = Array4::zeros((n, c, h, w));
                for ni in 0..n {
                    for gi in 0..groups {
                        let sl = s![ni, gi * gsize..(gi + 1) * gsize, .., ..];
                        let dn = dxhat.slice(sl);
                        let xh = xhat.slice(sl);
                        let mean_dn = dn.sum() / m;
                        let mean_dnxh = dn.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / m;
                        let istd = inv_std[[ni, gi]];
                        let mut dst = dx.slice_mut(sl);
                        for ((d, &dni), &xhi) in dst.iter_mut().zip(dn.iter()).zip(xh.iter()) {
                            *d = istd * (dni - mean_dn - xhi * mean_dnxh);
                        }
                    }
                }
                vec![dx, dgamma, dbeta]
            })),
        )
    }

    /// Batch normalization. In training mode, normalizes with batch statistics
    /// and returns them so the caller can update running averages; in eval
    /// mode, normalizes with the provided running statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Array1<f64>,
        running_var: &Array1<f64>,
        training: bool,
        eps: f64,
    ) -> (Var, Option<(Array1<f64>, Array1<f64>)>) {
        let xv = self.nodes[x.0].value.clone();
        let gv = self.nodes[gamma.0].value.clone();
        let bv = self.nodes[beta.0].value.clone();
        let (n, c, h, w) = xv.dim();
        let m = (n * h * w) as f64;

        let (mu, var): (Array1<f64>, Array1<f64>) = if training {
            let mut mu = Array1::zeros(c);
            let mut var = Array1::zeros(c);
            for ci in 0..c {
                let sl = xv.slice(s![.., ci, .., ..]);
                let mean = sl.sum() / m;
                mu[ci] = mean;
                var[ci] = sl.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            }
            (mu, var)
        } else {
            (running_mean.clone(), running_var.clone())
        };

        let mut xhat = xv.clone();
        for ci in 0..c {
            let istd = 1.0 / (var[ci] + eps).sqrt();
            let mean = mu[ci];
            xhat.slice_mut(s![.., ci, .., ..]).mapv_inplace(|v| (v - mean) * istd);
        }
        let mut value = xhat.clone();
        for ci in 0..c {
            let (ga, be) = (gv[[0, ci, 0, 0]], bv[[0, ci, 0, 0]]);
            value.slice_mut(s![.., ci, .., ..]).mapv_inplace(|v| ga * v + be);
        }

        let stats = if training { Some((mu.clone(), var.clone())) } else { None };
        let var_c = var.clone();
        let out = self.push(
            value,
            vec![x.0, gamma.0, beta.0],
            Some(Box::new(move |g| {
                let (_, c, _, _) = g.dim();
                let mut dgamma = Array4::zeros((1, c, 1, 1));
                let mut dbeta = Array4::zeros((1, c, 1, 1));
                for ci in 0..c {
                    let gs = g.slice(s![.., ci, .., ..]);
                    let xs = xhat.slice(s![.., ci, .., ..]);
                    dbeta[[0, ci, 0, 0]] = gs.sum();
                    dgamma[[0, ci, 0, 0]] = gs.iter().zip(xs.iter()).map(|(a, b)| a * b).sum();
                }
                let mut dx = g.clone();
                if training {
                    for ci in 0..c {
                        let istd = 1.0 / (var_c[ci] + eps).sqrt();
                        let ga = gv[[0, ci, 0, 0]];
                        let gs = g.slice(s![.., ci, .., ..]);
                        let xs = xhat.slice(s![.., ci, .., ..]);
                        let mean_g = gs.sum() / m;
                        let mean_gx = gs.iter().zip(xs.iter()).map(|(a, b)| a * b).sum::<f64>() / m;
                        let mut dst = dx.slice_mut(s![.., ci, .., ..]);
                        for (d, &xhi) in dst.iter_mut().zip(xs.iter()) {
                            *d = ga * istd * (*d - mean_g - xhi * mean_gx);
                        }
                    }
                } else {
                    for ci in 0..c {
                        let scale = gv[[0, ci, 0, 0]] / (var_c[ci] + eps).sqrt();
                        dx.slice_mut(s![.., ci, .., ..]).mapv_inplace(|v| v * scale);
                    }
                }
                vec![dx, dgamma, dbeta]
            })),
        );
        (out, stats)
    }

    // ---- reductions & losses ----

    /// Mean over all elements, returned as a `[1,1,1,1]` scalar node.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let len = xv.len() as f64;
        let shape = xv.raw_dim();
        let value = Array4::from_elem((1, 1, 1, 1), xv.sum() / len);
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g| {
                let gs = g[[0, 0, 0, 0]] / len;
                vec![Array4::from_elem(shape.clone(), gs)]
            })),
        )
    }

    /// Mean squared error against a constant target.
    pub fn mse_loss(&mut self, x: Var, target: &Array4<f64>) -> Var {
        let diff = &self.nodes[x.0].value - target;
        let len = diff.len() as f64;
        let value = Array4::from_elem((1, 1, 1, 1), diff.iter().map(|v| v * v).sum::<f64>() / len);
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g| {
                let gs = g[[0, 0, 0, 0]];
                vec![diff.mapv(|v| 2.0 * v * gs / len)]
            })),
        )
    }

    /// Mean absolute error against a constant target (subgradient 0 at zero).
    pub fn l1_loss(&mut self, x: Var, target: &Array4<f64>) -> Var {
        let diff = &self.nodes[x.0].value - target;
        let len = diff.len() as f64;
        let value = Array4::from_elem((1, 1, 1, 1), diff.iter().map(|v| v.abs()).sum::<f64>() / len);
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g| {
                let gs = g[[0, 0, 0, 0]];
                vec![diff.mapv(|v| v.signum() * gs / len * if v == 0.0 { 0.0 } else { 1.0 })]
            })),
        )
    }

    /// Isotropic total variation (sum of forward-difference gradient norms)
    /// over each sample and channel, with a guarded subgradient at kinks.
    pub fn tv_iso(&mut self, x: Var) -> Var {
        let xv = self.nodes[x.0].value.clone();
        let (n, c, h, w) = xv.dim();
        let mut total = 0.0;
        for ni in 0..n {
            for ci in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        let dx = if i + 1 < h { xv[[ni, ci, i + 1, j]] - xv[[ni, ci, i, j]] } else { 0.0 };
                        let dy = if j + 1 < w { xv[[ni, ci, i, j + 1]] - xv[[ni, ci, i, j]] } else { 0.0 };
                        total += (dx * dx + dy * dy).sqrt();
                    }
                }
            }
        }
        let value = Array4::from_elem((1, 1, 1, 1), total);
        self.push(
            value,
            vec![x.0],
            Some(Box::new(move |g| {
                let gs = g[[0, 0, 0, 0]];
                let (n, c, h, w) = xv.dim();
                let mut dx_arr = Array4::zeros((n, c, h, w));
                for ni in 0..n {
                    for ci in 0..c {
                        for i in 0..h {
                            for j in 0..w {
                                let dv = if i + 1 < h { xv[[ni, ci, i + 1, j]] - xv[[ni, ci, i, j]] } else { 0.0 };
                                let dh = if j + 1 < w { xv[[ni, ci, i, j + 1]] - xv[[ni, ci, i, j]] } else { 0.0 };
                                let norm = (dv * dv + dh * dh).sqrt();
                                if norm > 1e-12 {
                                    let scale = gs / norm;
                                    if i + 1 < h {
                                        dx_arr[[ni, ci, i + 1, j]] += scale * dv;
                                        dx_arr[[ni, ci, i, j]] -= scale * dv;
                                    }
                                    if j + 1 < w {
                                        dx_arr[[ni, ci, i, j + 1]] += scale * dh;
                                        dx_arr[[ni, ci, i, j]] -= scale * dh;
                                    }
                                }
                            }
                        }
                    }
                }
                vec![dx_arr]
            })),
        )
    }

    /// Scalar node with an externally computed value and gradient with respect
    /// to `x`. Lets non-graph physics (forward modeling misfits) participate
    /// in training objectives.
    pub fn external_scalar(&mut self, x: Var, value: f64, grad_x: Array4<f64>) -> Var {
        self.push(
            Array4::from_elem((1, 1, 1, 1), value),
            vec![x.0],
            Some(Box::new(move |g| vec![grad_x.mapv(|v| v * g[[0, 0, 0, 0]])])),
        )
    }

    /// Forward takes the given values, backward passes gradients straight
    /// through to `x` (the quantization estimator).
    pub fn straight_through(&mut self, x: Var, values: Array4<f64>) -> Var {
        assert_eq!(values.dim(), self.nodes[x.0].value.dim());
        self.push(values, vec![x.0], Some(Box::new(|g| vec![g.clone()])))
    }

    /// Runs reverse-mode accumulation from `loss` (must be scalar-shaped) and
    /// adds parameter gradients into `store.grads`. Returns gradients of
    /// non-parameter leaves created with [`Graph::input_with_grad`].
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Vec<(Var, Array4<f64>)> {
        let n = self.nodes.len();
        let mut grads: Vec<Option<Array4<f64>>> = vec![None; n];
        grads[loss.0] = Some(Array4::ones(self.nodes[loss.0].value.raw_dim()));

        for idx in (0..n).rev() {
            if !self.nodes[idx].needs_grad && self.nodes[idx].param_idx.is_none() {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if let Some(pidx) = self.nodes[idx].param_idx {
                store.grads[pidx] += &g;
                continue;
            }
            if let Some(back) = &self.nodes[idx].backward {
                let parent_grads = back(&g);
                let parents = self.nodes[idx].parents.clone();
                for (p, pg) in parents.into_iter().zip(parent_grads.into_iter()) {
                    if !self.nodes[p].needs_grad {
                        continue;
                    }
                    match &mut grads[p] {
                        Some(acc) => *acc += &pg,
                        slot => *slot = Some(pg),
                    }
                }
            } else if self.nodes[idx].needs_grad {
                // non-param leaf requested via input_with_grad
                grads[idx] = Some(g);
            }
        }

        let mut leaf_grads = Vec::new();
        for (idx, slot) in grads.into_iter().enumerate() {
            if let Some(g) = slot {
                if self.nodes[idx].backward.is_none()
                    && self.nodes[idx].param_idx.is_none()
                    && self.nodes[idx].needs_grad
                {
                    leaf_grads.push((Var(idx), g));
                }
            }
        }
        leaf_grads
    }
}

fn im2col(
    x: &Array4<f64>,
    ni: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array2<f64> {
    let (_, c, h, w) = x.dim();
    let mut cols = Array2::zeros((c * kh * kw, oh * ow));
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        cols[[row, oi * ow + oj]] = x[[ni, ci, ii as usize, jj as usize]];
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    dcols: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array4<f64> {
    let mut dx = Array4::zeros((1, c, h, w));
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        dx[[0, ci, ii as usize, jj as usize]] += dcols[[row, oi * ow + oj]];
                    }
                }
            }
        }
    }
    dx
}
