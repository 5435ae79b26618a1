//! Adam optimizer and training configuration.

use serde::{Deserialize, Serialize};

use super::{DenseNet, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0 < b && b < 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0,1)")));
            }
        }
        Ok(())
    }
}

/// First/second moment estimates, shaped like the network parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    m: Vec<MomentPair>,
}

#[derive(Debug, Clone)]
struct MomentPair {
    m_weights: Vec<f64>,
    v_weights: Vec<f64>,
    m_bias: Vec<f64>,
    v_bias: Vec<f64>,
}

impl AdamState {
    pub fn new(net: &DenseNet) -> Self {
        AdamState {
            step: 0,
            m: net
                .layers()
                .iter()
                .map(|l| MomentPair {
                    m_weights: vec![0.0; l.weights.len()],
                    v_weights: vec![0.0; l.weights.len()],
                    m_bias: vec![0.0; l.bias.len()],
                    v_bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }
}

/// One Adam update with bias correction; increments the step counter.
pub fn adam_step(
    net: &mut DenseNet,
    grads: &Gradients,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if grads.layers.len() != net.layers().len() || state.m.len() != net.layers().len() {
        return Err(Error::contract("optimizer state does not match network"));
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = config.adam_beta1;
    let b2 = config.adam_beta2;
    let corr1 = 1.0 - b1.powi(t);
    let corr2 = 1.0 - b2.powi(t);

    for ((layer, lg), moments) in net
        .layers_mut()
        .iter_mut()
        .zip(grads.layers.iter())
        .zip(state.m.iter_mut())
    {
        if lg.d_weights.len() != layer.weights.len() || lg.d_bias.len() != layer.bias.len() {
            return Err(Error::contract("gradient shapes do not match network"));
        }
        update_slice(
            &mut layer.weights,
            &lg.d_weights,
            &mut moments.m_weights,
            &mut moments.v_weights,
            config,
            corr1,
            corr2,
        );
        update_slice(
            &mut layer.bias,
            &lg.d_bias,
            &mut moments.m_bias,
            &mut moments.v_bias,
            config,
            corr1,
            corr2,
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    config: &TrainConfig,
    corr1: f64,
    corr2: f64,
) {
    let b1 = config.adam_beta1;
    let b2 = config.adam_beta2;
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / corr1;
        let v_hat = v[i] / corr2;
        params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
    }
}
