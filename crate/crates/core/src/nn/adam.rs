//! Adam optimizer over a [`ParamStore`].

use super::graph::ParamStore;
use ndarray::Array4;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Array4<f64>>,
    v: Vec<Array4<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        let m = store.tensors.iter().map(|t| Array4::zeros(t.raw_dim())).collect();
        let v = store.tensors.iter().map(|t| Array4::zeros(t.raw_dim())).collect();
        Self { cfg, m, v, t: 0 }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// One update from the gradients accumulated in `store.grads`; clears them.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..store.tensors.len() {
            let g = &store.grads[i];
            self.m[i].zip_mut_with(g, |m, &gv| *m = b1 * *m + (1.0 - b1) * gv);
            self.v[i].zip_mut_with(g, |v, &gv| *v = b2 * *v + (1.0 - b2) * gv * gv);
            let lr = self.cfg.lr;
            let eps = self.cfg.eps;
            let m = &self.m[i];
            let v = &self.v[i];
            ndarray::Zip::from(&mut store.tensors[i])
                .and(m)
                .and(v)
                .for_each(|p, &mi, &vi| {
                    *p -= lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                });
        }
        store.zero_grads();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_descends_a_quadratic() {
        // minimize (p - 3)^2 elementwise
        let mut store = ParamStore::new();
        let idx = store.add("p", Array4::zeros((1, 1, 2, 2)));
        let mut opt = Adam::new(&store, AdamConfig { lr: 0.1, ..Default::default() });
        for _ in 0..300 {
            let g = store.tensors[idx].mapv(|p| 2.0 * (p - 3.0));
            store.grads[idx].assign(&g);
            opt.step(&mut store);
        }
        for &p in store.tensors[idx].iter() {
            assert!((p - 3.0).abs() < 1e-3, "got {p}");
        }
    }
}
