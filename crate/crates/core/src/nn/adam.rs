use ndarray::{Array1, Array2, Zip};

use super::DenseNet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment buffers for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m_w: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.dim()))
                .collect(),
            v_w: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.dim()))
                .collect(),
            m_b: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.len()))
                .collect(),
            v_b: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.len()))
                .collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam step from the accumulated gradients, which are then cleared.
pub fn adam_update(net: &mut DenseNet, state: &mut AdamState) -> Result<()> {
    if state.m_w.len() != net.layers.len()
        || net
            .layers
            .iter()
            .zip(&state.m_w)
            .any(|(l, m)| l.weights.dim() != m.dim())
    {
        return Err(Error::Shape(
            "optimizer state does not match the network".into(),
        ));
    }
    state.step += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    };
    for (k, layer) in net.layers.iter_mut().enumerate() {
        Zip::from(&mut layer.weights)
            .and(&layer.grad_w)
            .and(&mut state.m_w[k])
            .and(&mut state.v_w[k])
            .for_each(update);
        Zip::from(&mut layer.bias)
            .and(&layer.grad_b)
            .and(&mut state.m_b[k])
            .and(&mut state.v_b[k])
            .for_each(update);
    }
    net.zero_grad();
    net.bump_generation();
    Ok(())
}
