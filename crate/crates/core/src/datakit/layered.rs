//! Layered random impedance models: piecewise-smooth layers with lateral
//! undulation, dips, optional fault offsets, and within-layer trends.

use crate::error::{Result, SaiiError};
use crate::grid::ImpedanceGrid;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LayerStats {
    pub min_thickness: usize,
    pub max_thickness: usize,
    pub imp_min: f64,
    pub imp_max: f64,
    /// Master stochastic scale in [0, 1]: 0 collapses all lateral structure
    /// (undulation, dip, faults, impedance wobble) to laterally constant layers.
    pub variance: f64,
    /// Maximum boundary dip across the section, in samples (at variance = 1).
    pub max_dip: f64,
    /// Maximum sinusoidal boundary undulation, in samples (at variance = 1).
    pub max_undulation: f64,
    pub fault_prob: f64,
    pub max_fault_throw: usize,
}

impl Default for LayerStats {
    fn default() -> Self {
        Self {
            min_thickness: 5,
            max_thickness: 14,
            imp_min: 2500.0,
            imp_max: 9500.0,
            variance: 1.0,
            max_dip: 6.0,
            max_undulation: 3.0,
            fault_prob: 0.3,
            max_fault_throw: 5,
        }
    }
}

impl LayerStats {
    pub fn validate(&self) -> Result<()> {
        if self.min_thickness < 2 || self.max_thickness < self.min_thickness {
            return Err(SaiiError::Parameter("invalid thickness range".into()));
        }
        if !(self.imp_min > 0.0 && self.imp_min < self.imp_max) {
            return Err(SaiiError::Parameter("need 0 < imp_min < imp_max".into()));
        }
        if !(0.0..=1.0).contains(&self.variance) {
            return Err(SaiiError::Parameter("variance must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

struct Layer {
    top: f64, // boundary depth at the section center
    base_value: f64,
    trend: f64, // impedance change per sample within the layer
    dip: f64,
    undulation: f64,
    und_cycles: f64,
    und_phase: f64,
    wobble_amp: f64,
    wobble_cycles: f64,
    wobble_phase: f64,
}

/// Deterministic layered model for a given seed; values clamped to
/// `[imp_min, imp_max]`.
pub fn random_layered_model(
    depth: usize,
    traces: usize,
    stats: &LayerStats,
    seed: u64,
) -> Result<ImpedanceGrid> {
    stats.validate()?;
    if depth < 32 {
        return Err(SaiiError::Parameter(format!("depth {depth} must be >= 32")));
    }
    if traces < 2 {
        return Err(SaiiError::Parameter("need at least 2 traces".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = stats.imp_max - stats.imp_min;
    let v = stats.variance;

    // Stack of layers covering [0, depth) with generous margin for offsets.
    let mut layers: Vec<Layer> = Vec::new();
    let mut top = -(stats.max_thickness as f64);
    while top < depth as f64 + stats.max_thickness as f64 {
        let frac = ((top + stats.max_thickness as f64) / (depth as f64 + 2.0 * stats.max_thickness as f64))
            .clamp(0.0, 1.0);
        // compaction trend with depth plus a random jump
        let base = stats.imp_min
            + range * (0.15 + 0.7 * frac)
            + v * range * 0.22 * rng.gen_range(-1.0..1.0);
        layers.push(Layer {
            top,
            base_value: base,
            trend: rng.gen_range(0.0..1.0) * range * 0.004,
            dip: v * rng.gen_range(-stats.max_dip..=stats.max_dip),
            undulation: v * rng.gen_range(0.0..=stats.max_undulation),
            und_cycles: rng.gen_range(0.5..2.0),
            und_phase: rng.gen_range(0.0..std::f64::consts::TAU),
            wobble_amp: v * range * 0.02 * rng.gen_range(0.0..1.0),
            wobble_cycles: rng.gen_range(0.5..2.5),
            wobble_phase: rng.gen_range(0.0..std::f64::consts::TAU),
        });
        top += rng.gen_range(stats.min_thickness..=stats.max_thickness) as f64;
    }

    // optional single fault: vertical throw applied right of a random trace
    let fault = if v > 0.0 && rng.gen_range(0.0..1.0) < stats.fault_prob && stats.max_fault_throw > 0 {
        let at = rng.gen_range(traces / 4..3 * traces / 4);
        let throw = rng.gen_range(1..=stats.max_fault_throw) as f64;
        Some((at, throw))
    } else {
        None
    };

    let mut vals = Array2::zeros((depth, traces));
    for j in 0..traces {
        let x = j as f64 / (traces - 1) as f64;
        let offset = match fault {
            Some((at, throw)) if j >= at => throw,
            _ => 0.0,
        };
        // boundary depths for this trace
        let tops: Vec<f64> = layers
            .iter()
            .map(|l| {
                l.top
                    + l.dip * (x - 0.5)
                    + l.undulation * (std::f64::consts::TAU * (l.und_cycles * x) + l.und_phase).sin()
                    + offset
            })
            .collect();
        for i in 0..depth {
            let di = i as f64;
            // innermost layer whose top is above this depth
            let mut k = 0;
            for (li, &t) in tops.iter().enumerate() {
                if t <= di {
                    k = li;
                } else {
                    break;
                }
            }
            let l = &layers[k];
            let val = l.base_value
                + l.trend * (di - tops[k])
                + l.wobble_amp
                    * (std::f64::consts::TAU * (l.wobble_cycles * x) + l.wobble_phase).sin();
            vals[[i, j]] = val.clamp(stats.imp_min, stats.imp_max);
        }
    }
    ImpedanceGrid::new(vals, 0.002, format!("layered-seed-{seed}"))
}
