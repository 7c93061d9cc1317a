//! SGD with momentum and LARS. LARS scales the step per parameter tensor
//! (each weight matrix and bias vector separately) by
//! trust * ||p|| / (||g|| + wd * ||p|| + 1e-12).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::mlp::ModelParams;
use crate::sphere::l2_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    SgdMomentum,
    Lars,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub momentum: f64,
    pub weight_decay: f64,
    pub trust_coeff: f64,
}

impl Default for OptimizerConfig {
    fn default() -> OptimizerConfig {
        OptimizerConfig {
            kind: OptimizerKind::Lars,
            momentum: 0.9,
            weight_decay: 1e-6,
            trust_coeff: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    /// Momentum buffers, shape-matching the parameters.
    pub buffers: ModelParams,
    pub iteration: usize,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ModelParams) -> OptimizerState {
        OptimizerState {
            config,
            buffers: params.zeros_like(),
            iteration: 0,
        }
    }
}

fn step_tensor(cfg: &OptimizerConfig, param: &mut [f64], grad: &[f64], buf: &mut [f64], lr: f64) {
    let local_rate = match cfg.kind {
        OptimizerKind::SgdMomentum => 1.0,
        OptimizerKind::Lars => {
            let p_norm = l2_norm(param);
            let g_norm = l2_norm(grad);
            cfg.trust_coeff * p_norm / (g_norm + cfg.weight_decay * p_norm + 1e-12)
        }
    };
    for i in 0..param.len() {
        buf[i] = cfg.momentum * buf[i] + grad[i] + cfg.weight_decay * param[i];
        param[i] -= lr * local_rate * buf[i];
    }
}

/// One optimizer update over every parameter tensor.
pub fn optimizer_step(
    state: &mut OptimizerState,
    params: &mut ModelParams,
    grads: &ModelParams,
    lr: f64,
) -> Result<()> {
    if !params.shape_matches(grads) || !params.shape_matches(&state.buffers) {
        return Err(Error::ShapeMismatch(
            "parameter/gradient/buffer shapes differ".into(),
        ));
    }
    let cfg = state.config;
    let layers = params.encoder.iter_mut().chain(params.head.iter_mut());
    let grad_layers = grads.encoder.iter().chain(grads.head.iter());
    let buf_layers = state
        .buffers
        .encoder
        .iter_mut()
        .chain(state.buffers.head.iter_mut());
    for ((p, g), b) in layers.zip(grad_layers).zip(buf_layers) {
        step_tensor(&cfg, &mut p.w, &g.w, &mut b.w, lr);
        step_tensor(&cfg, &mut p.b, &g.b, &mut b.b, lr);
    }
    state.iteration += 1;
    Ok(())
}
