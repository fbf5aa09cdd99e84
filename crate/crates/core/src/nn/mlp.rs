//! Dense multilayer perceptron used for every field network.
//!
//! Weights are stored as `(fan_out, fan_in)` matrices and inputs are batched
//! row-wise, so a layer computes `Y = X Wᵀ + b` for `X` of shape
//! `(batch, fan_in)`. Hidden layers apply the activation; the output layer is
//! linear.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn apply_inplace(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Derivative expressed through the activation output.
    pub(crate) fn grad_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    activation: Activation,
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
}

pub(crate) fn affine(x: ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    y += b;
    y
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidArchitecture(format!(
            "need at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidArchitecture(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_sizes: &[usize], activation: Activation, rng: &mut SeededRng) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            // Row-major draw order: row = output unit, column = input unit.
            let w = Array2::from_shape_simple_fn((fan_out, fan_in), || (2.0 * rng.uniform() - 1.0) * limit);
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|p| Array2::zeros((p[1], p[0])))
            .collect();
        let biases = layer_sizes.windows(2).map(|p| Array1::zeros(p[1])).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    /// Builds a model from explicit parameters, validating every shape.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        activation: Activation,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        check_sizes(&layer_sizes)?;
        let layers = layer_sizes.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::InvalidArchitecture(format!(
                "{layers} layers declared but {} weight and {} bias arrays given",
                weights.len(),
                biases.len()
            )));
        }
        for (i, pair) in layer_sizes.windows(2).enumerate() {
            if weights[i].dim() != (pair[1], pair[0]) {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {i}: weight shape {:?}, expected {:?}",
                    weights[i].dim(),
                    (pair[1], pair[0])
                )));
            }
            if biases[i].len() != pair[1] {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {i}: bias length {}, expected {}",
                    biases[i].len(),
                    pair[1]
                )));
            }
        }
        Ok(Self {
            layer_sizes,
            activation,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.layer_sizes)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp input".into(),
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        let last = self.num_layers() - 1;
        let mut h = affine(x, &self.weights[0], &self.biases[0]);
        if last > 0 {
            self.activation.apply_inplace(&mut h);
        }
        for i in 1..=last {
            h = affine(h.view(), &self.weights[i], &self.biases[i]);
            if i < last {
                self.activation.apply_inplace(&mut h);
            }
        }
        Ok(h)
    }

    /// All parameters flattened as `W0 (row-major), b0, W1, b1, ...`.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "flat parameter vector".into(),
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Σ (fan_in·fan_out + fan_out) over consecutive layer pairs.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
}
