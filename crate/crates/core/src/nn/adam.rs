use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::mlp::MlpModel;
use super::tape::ModelGrads;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    m_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_w: Vec<Array2<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn new(model: &MlpModel, config: AdamConfig) -> Self {
        let zw = || model.weights().iter().map(|w| Array2::zeros(w.raw_dim())).collect::<Vec<_>>();
        let zb = || model.biases().iter().map(|b| Array1::zeros(b.raw_dim())).collect::<Vec<_>>();
        Self {
            config,
            step_count: 0,
            m_w: zw(),
            m_b: zb(),
            v_w: zw(),
            v_b: zb(),
        }
    }

    /// One bias-corrected Adam update of `model` in place.
    ///
    /// `network` only labels errors. Gradients are validated before any
    /// parameter is touched.
    pub fn step(&mut self, model: &mut MlpModel, grads: &ModelGrads, network: usize) -> Result<()> {
        if grads.weights.len() != model.num_layers() || grads.biases.len() != model.num_layers() {
            return Err(Error::DimensionMismatch {
                context: format!("gradient layers for network {network}"),
                expected: model.num_layers(),
                actual: grads.weights.len(),
            });
        }
        for layer in 0..model.num_layers() {
            if grads.weights[layer].dim() != model.weights[layer].dim()
                || grads.biases[layer].len() != model.biases[layer].len()
            {
                return Err(Error::DimensionMismatch {
                    context: format!("gradient shape for network {network} layer {layer}"),
                    expected: model.weights[layer].len() + model.biases[layer].len(),
                    actual: grads.weights[layer].len() + grads.biases[layer].len(),
                });
            }
            let finite = grads.weights[layer].iter().all(|v| v.is_finite())
                && grads.biases[layer].iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFiniteGradient { network, layer });
            }
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for layer in 0..model.num_layers() {
            Zip::from(&mut model.weights[layer])
                .and(&mut self.m_w[layer])
                .and(&mut self.v_w[layer])
                .and(&grads.weights[layer])
                .for_each(update);
            Zip::from(&mut model.biases[layer])
                .and(&mut self.m_b[layer])
                .and(&mut self.v_b[layer])
                .and(&grads.biases[layer])
                .for_each(update);
        }
        for layer in 0..model.num_layers() {
            let finite = model.weights[layer].iter().all(|v| v.is_finite())
                && model.biases[layer].iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFiniteParameter { network, layer });
            }
        }
        Ok(())
    }
}
