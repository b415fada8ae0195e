//! Linear noise schedule and the forward noising transform.

use crate::error::{Result, SaiiError};
use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

/// Beta/alpha arrays for a T-step diffusion chain. Index convention: arrays are
/// 0-based, timesteps are 1-based, so `beta[t-1]` belongs to step `t`;
/// `alpha_bar_ext(0) == 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub timesteps: usize,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// `alpha_bar` at 1-based step `t`, with the `t = 0` convention of 1.
    pub fn alpha_bar_ext(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.timesteps {
            return Err(SaiiError::Parameter(format!(
                "timestep {t} outside [1, {}]",
                self.timesteps
            )));
        }
        Ok(())
    }
}

/// Linearly spaced betas with derived alpha products. The chain must end
/// essentially at pure noise (`alpha_bar_T < 0.01`).
pub fn make_linear_schedule(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
        return Err(SaiiError::Parameter(format!(
            "need 0 < beta_start < beta_end < 1, got ({beta_start}, {beta_end})"
        )));
    }
    if timesteps < 2 {
        return Err(SaiiError::Parameter("schedule needs at least 2 timesteps".into()));
    }
    let mut beta = Vec::with_capacity(timesteps);
    for i in 0..timesteps {
        beta.push(beta_start + (beta_end - beta_start) * i as f64 / (timesteps - 1) as f64);
    }
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(timesteps);
    let mut prod = 1.0;
    for &a in &alpha {
        prod *= a;
        alpha_bar.push(prod);
    }
    if *alpha_bar.last().unwrap() >= 0.01 {
        return Err(SaiiError::Parameter(format!(
            "chain too short: alpha_bar at T is {:.4}, must be < 0.01",
            alpha_bar.last().unwrap()
        )));
    }
    Ok(NoiseSchedule { timesteps, beta, alpha, alpha_bar })
}

/// Forward noising `z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps`.
///
/// Deliberately takes no conditioning input of any kind: the conditional
/// training process shares this exact unconditional marginal.
pub fn q_sample(z0: &Array3<f64>, t: usize, eps: &Array3<f64>, schedule: &NoiseSchedule) -> Result<Array3<f64>> {
    schedule.check_step(t)?;
    if z0.dim() != eps.dim() {
        return Err(SaiiError::Dimension(format!(
            "z0 {:?} vs eps {:?}",
            z0.dim(),
            eps.dim()
        )));
    }
    let ab = schedule.alpha_bar_ext(t);
    Ok(z0 * ab.sqrt() + eps * (1.0 - ab).sqrt())
}

/// Batched forward noising with a per-sample timestep.
pub fn q_sample_batch(
    z0: &Array4<f64>,
    ts: &[usize],
    eps: &Array4<f64>,
    schedule: &NoiseSchedule,
) -> Result<Array4<f64>> {
    if z0.dim() != eps.dim() {
        return Err(SaiiError::Dimension("z0/eps shape mismatch".into()));
    }
    if ts.len() != z0.dim().0 {
        return Err(SaiiError::Dimension("one timestep per batch sample required".into()));
    }
    let mut out = Array4::zeros(z0.raw_dim());
    for (ni, &t) in ts.iter().enumerate() {
        schedule.check_step(t)?;
        let ab = schedule.alpha_bar_ext(t);
        let (s0, s1) = (ab.sqrt(), (1.0 - ab).sqrt());
        let z0n = z0.index_axis(ndarray::Axis(0), ni);
        let epsn = eps.index_axis(ndarray::Axis(0), ni);
        let mut dst = out.index_axis_mut(ndarray::Axis(0), ni);
        ndarray::Zip::from(&mut dst).and(&z0n).and(&epsn).for_each(|o, &z, &e| {
            *o = s0 * z + s1 * e;
        });
    }
    Ok(out)
}
