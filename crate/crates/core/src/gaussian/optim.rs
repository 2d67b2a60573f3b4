#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::gaussian::loss::LossConfig;
use crate::gaussian::primitive::{
    normalize_quat, GaussianPrimitive, ParamArray, COLOR, LOG_SCALE, OPACITY, PARAM_COUNT, ROTATION,
};
use crate::gaussian::render::RasterSettings;

/// Adam step sizes per parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    /// Metres per step.
    pub position: f64,
    pub rotation: f64,
    pub log_scale: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates { position: 2e-4, rotation: 1e-3, log_scale: 5e-3, opacity: 5e-2, color: 5e-2 }
    }
}

impl LearningRates {
    fn for_param(&self, p: usize) -> f64 {
        if p < ROTATION {
            self.position
        } else if p < LOG_SCALE {
            self.rotation
        } else if p < OPACITY {
            self.log_scale
        } else if p < COLOR {
            self.opacity
        } else {
            self.color
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Gradient steps per call to `optimize`.
    pub iterations: usize,
    pub learning_rates: LearningRates,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss: LossConfig,
    pub raster: RasterSettings,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            iterations: 400,
            learning_rates: LearningRates::default(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-15,
            loss: LossConfig::default(),
            raster: RasterSettings::default(),
        }
    }
}

/// Per-primitive Adam moments. Each primitive counts its own steps so that
/// primitives spawned late get proper bias correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: ParamArray,
    pub v: ParamArray,
    pub step: u32,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState { m: [0.0; PARAM_COUNT], v: [0.0; PARAM_COUNT], step: 0 }
    }
}

/// One Adam update. Primitives whose gradient is exactly zero are left
/// untouched, moments included. Returns whether anything changed.
pub fn adam_step(g: &mut GaussianPrimitive, state: &mut AdamState, grad: &ParamArray, cfg: &OptimizerConfig) -> bool {
    if grad.iter().all(|x| *x == 0.0) {
        return false;
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let mut p = g.params();
    for i in 0..PARAM_COUNT {
        let gi = if grad[i].is_finite() { grad[i] } else { 0.0 };
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gi;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        p[i] -= cfg.learning_rates.for_param(i) * mh / (vh.sqrt() + cfg.epsilon);
    }
    g.set_params(&p);
    g.rotation = normalize_quat(g.rotation);
    true
}
