//! Reverse-mode gradient tape over batched matrices.
//!
//! Every recorded value is a `(rows, cols)` matrix; rows are batch elements.
//! The tape only knows the handful of primitives the field losses need:
//! MLP affine layers, activations, column concatenation, scalar and per-row
//! scaling, addition/subtraction and a weighted squared-norm reduction.
//!
//! [`Tape::detach`] copies a value into a fresh leaf. Leaves never propagate
//! gradient, so anything computed upstream of a detached value receives none
//! through it.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::mlp::{affine, Activation, MlpModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetId(usize);

impl NetId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine { input: usize, net: usize, layer: usize },
    Activation { input: usize, kind: Activation },
    Concat { inputs: Vec<usize> },
    Scale { input: usize, factor: f64 },
    RowScale { input: usize, coeffs: Array1<f64> },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    SquaredNorm { input: usize, weight: f64 },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Array2<f64>,
}

/// Parameter gradients for one network, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ModelGrads {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights().iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: model.biases().iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// Flattened in the same order as [`MlpModel::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|&v| v == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }
}

/// Gradients for every network registered on a tape, indexed by [`NetId`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub nets: Vec<ModelGrads>,
}

impl Gradients {
    pub fn net(&self, id: NetId) -> &ModelGrads {
        &self.nets[id.0]
    }
}

pub struct Tape<'m> {
    nets: Vec<&'m MlpModel>,
    nodes: Vec<Node>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'m> Tape<'m> {
    pub fn new() -> Self {
        Self {
            nets: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn register(&mut self, model: &'m MlpModel) -> NetId {
        self.nets.push(model);
        NetId(self.nets.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.0 < self.nodes.len() {
            Ok(v.0)
        } else {
            Err(Error::UnknownNode(v.0))
        }
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Same numeric value, no gradient path.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let i = self.check(v)?;
        let value = self.nodes[i].value.clone();
        Ok(self.push(Op::Leaf, value))
    }

    /// Records a full MLP forward pass of network `net` on `input`.
    pub fn mlp(&mut self, net: NetId, input: Var) -> Result<Var> {
        let i = self.check(input)?;
        let model = self.nets[net.0];
        let cols = self.nodes[i].value.ncols();
        if cols != model.input_dim() {
            return Err(Error::DimensionMismatch {
                context: format!("mlp input for network {}", net.0),
                expected: model.input_dim(),
                actual: cols,
            });
        }
        let last = model.num_layers() - 1;
        let mut h = i;
        for layer in 0..=last {
            let value = affine(self.nodes[h].value.view(), &model.weights[layer], &model.biases[layer]);
            h = self.push(Op::Affine { input: h, net: net.0, layer }, value).0;
            if layer < last {
                let mut value = self.nodes[h].value.clone();
                model.activation().apply_inplace(&mut value);
                h = self
                    .push(
                        Op::Activation {
                            input: h,
                            kind: model.activation(),
                        },
                        value,
                    )
                    .0;
            }
        }
        Ok(Var(h))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let idx = parts.iter().map(|&p| self.check(p)).collect::<Result<Vec<_>>>()?;
        let rows = self.nodes[idx[0]].value.nrows();
        for &i in &idx {
            let r = self.nodes[i].value.nrows();
            if r != rows {
                return Err(Error::DimensionMismatch {
                    context: "concat rows".into(),
                    expected: rows,
                    actual: r,
                });
            }
        }
        let views: Vec<ArrayView2<f64>> = idx.iter().map(|&i| self.nodes[i].value.view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        Ok(self.push(Op::Concat { inputs: idx }, value))
    }

    pub fn scale(&mut self, v: Var, factor: f64) -> Result<Var> {
        let i = self.check(v)?;
        let value = &self.nodes[i].value * factor;
        Ok(self.push(Op::Scale { input: i, factor }, value))
    }

    /// Multiplies row `r` by `coeffs[r]`.
    pub fn row_scale(&mut self, v: Var, coeffs: Array1<f64>) -> Result<Var> {
        let i = self.check(v)?;
        let rows = self.nodes[i].value.nrows();
        if coeffs.len() != rows {
            return Err(Error::DimensionMismatch {
                context: "row_scale coefficients".into(),
                expected: rows,
                actual: coeffs.len(),
            });
        }
        let value = &self.nodes[i].value * &coeffs.view().insert_axis(Axis(1));
        Ok(self.push(Op::RowScale { input: i, coeffs }, value))
    }

    fn same_shape(&self, a: usize, b: usize, what: &str) -> Result<()> {
        let (da, db) = (self.nodes[a].value.dim(), self.nodes[b].value.dim());
        if da != db {
            let (expected, actual) = if da.0 != db.0 { (da.0, db.0) } else { (da.1, db.1) };
            return Err(Error::DimensionMismatch {
                context: what.into(),
                expected,
                actual,
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.same_shape(a, b, "add")?;
        let value = &self.nodes[a].value + &self.nodes[b].value;
        Ok(self.push(Op::Add { a, b }, value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.same_shape(a, b, "sub")?;
        let value = &self.nodes[a].value - &self.nodes[b].value;
        Ok(self.push(Op::Sub { a, b }, value))
    }

    /// `weight · Σ v²` as a `1×1` value.
    pub fn squared_norm(&mut self, v: Var, weight: f64) -> Result<Var> {
        let i = self.check(v)?;
        let total = weight * self.nodes[i].value.iter().map(|x| x * x).sum::<f64>();
        Ok(self.push(Op::SquaredNorm { input: i, weight }, Array2::from_elem((1, 1), total)))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// Backward from a `1×1` output with seed gradient 1.
    pub fn backward_scalar(&self, output: Var) -> Result<Gradients> {
        self.backward(output, Array2::from_elem((1, 1), 1.0).view())
    }

    /// Propagates `output_gradient` (shaped like `output`) back to every
    /// registered network's parameters.
    pub fn backward(&self, output: Var, output_gradient: ArrayView2<f64>) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let out = self.check(output)?;
        let shape = self.nodes[out].value.dim();
        if output_gradient.dim() != shape {
            return Err(Error::DimensionMismatch {
                context: "output gradient".into(),
                expected: shape.0 * shape.1,
                actual: output_gradient.len(),
            });
        }

        let mut grads = Gradients {
            nets: self.nets.iter().map(|m| ModelGrads::zeros_like(m)).collect(),
        };
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; out + 1];
        adj[out] = Some(output_gradient.to_owned());

        fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
            match slot {
                Some(existing) => *existing += &g,
                None => *slot = Some(g),
            }
        }

        for i in (0..=out).rev() {
            let Some(g) = adj[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Affine { input, net, layer } => {
                    let w = &self.nets[*net].weights[*layer];
                    let x = &self.nodes[*input].value;
                    let gw = g.t().dot(x);
                    grads.nets[*net].weights[*layer] += &gw;
                    grads.nets[*net].biases[*layer] += &g.sum_axis(Axis(0));
                    accumulate(&mut adj[*input], g.dot(w));
                }
                Op::Activation { input, kind } => {
                    let out_val = &self.nodes[i].value;
                    let mut gi = g;
                    gi.zip_mut_with(out_val, |gv, &o| *gv *= kind.grad_from_output(o));
                    accumulate(&mut adj[*input], gi);
                }
                Op::Concat { inputs } => {
                    let mut col = 0;
                    for &inp in inputs {
                        let w = self.nodes[inp].value.ncols();
                        accumulate(&mut adj[inp], g.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::Scale { input, factor } => accumulate(&mut adj[*input], g * *factor),
                Op::RowScale { input, coeffs } => {
                    accumulate(&mut adj[*input], g * coeffs.view().insert_axis(Axis(1)));
                }
                Op::Add { a, b } => {
                    accumulate(&mut adj[*b], g.clone());
                    accumulate(&mut adj[*a], g);
                }
                Op::Sub { a, b } => {
                    accumulate(&mut adj[*b], -&g);
                    accumulate(&mut adj[*a], g);
                }
                Op::SquaredNorm { input, weight } => {
                    let seed = g[[0, 0]] * 2.0 * weight;
                    accumulate(&mut adj[*input], &self.nodes[*input].value * seed);
                }
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use ndarray::array;

    #[test]
    fn backward_on_empty_tape_errors() {
        let tape = Tape::new();
        assert!(matches!(tape.backward_scalar(Var(0)), Err(Error::EmptyTape)));
    }

    #[test]
    fn foreign_node_rejected() {
        let mut tape = Tape::new();
        tape.constant(array![[1.0]]);
        assert!(matches!(tape.backward_scalar(Var(5)), Err(Error::UnknownNode(5))));
    }

    #[test]
    fn scalar_affine_hand_chain_rule() {
        // y = w x + b, loss y², x = 2, w = 1, b = 0
        let m = MlpModel::from_parts(vec![1, 1], Activation::Relu, vec![array![[1.0]]], vec![array![0.0]]).unwrap();
        let mut tape = Tape::new();
        let net = tape.register(&m);
        let x = tape.constant(array![[2.0]]);
        let y = tape.mlp(net, x).unwrap();
        let loss = tape.squared_norm(y, 1.0).unwrap();
        let g = tape.backward_scalar(loss).unwrap();
        assert_eq!(g.net(net).weights[0][[0, 0]], 8.0);
        assert_eq!(g.net(net).biases[0][0], 4.0);
    }

    #[test]
    fn stationary_output_gives_zero_gradient() {
        let m = MlpModel::zeros(&[3, 4, 2], Activation::Tanh).unwrap();
        let mut tape = Tape::new();
        let net = tape.register(&m);
        let x = tape.constant(array![[0.3, -0.1, 2.0]]);
        let y = tape.mlp(net, x).unwrap();
        let loss = tape.squared_norm(y, 1.0).unwrap();
        assert!(tape.backward_scalar(loss).unwrap().net(net).is_zero());
    }

    #[test]
    fn untouched_network_gets_exact_zero() {
        let mut rng = SeededRng::new(3);
        let a = MlpModel::init(&[2, 5, 2], Activation::Tanh, &mut rng).unwrap();
        let b = MlpModel::init(&[2, 5, 2], Activation::Tanh, &mut rng).unwrap();
        let mut tape = Tape::new();
        let na = tape.register(&a);
        let nb = tape.register(&b);
        let x = tape.constant(array![[0.5, -0.5]]);
        let y = tape.mlp(na, x).unwrap();
        let loss = tape.squared_norm(y, 1.0).unwrap();
        let g = tape.backward_scalar(loss).unwrap();
        assert!(!g.net(na).is_zero());
        assert!(g.net(nb).is_zero());
    }

    #[test]
    fn detached_branch_blocks_gradient() {
        let mut rng = SeededRng::new(4);
        let a = MlpModel::init(&[2, 4, 2], Activation::Tanh, &mut rng).unwrap();
        let b = MlpModel::init(&[2, 4, 2], Activation::Tanh, &mut rng).unwrap();
        let mut tape = Tape::new();
        let na = tape.register(&a);
        let nb = tape.register(&b);
        let x = tape.constant(array![[0.2, 0.7], [1.0, -0.3]]);
        let ya = tape.mlp(na, x).unwrap();
        let frozen = tape.detach(ya).unwrap();
        let yb = tape.mlp(nb, frozen).unwrap();
        let loss = tape.squared_norm(yb, 0.5).unwrap();
        let g = tape.backward_scalar(loss).unwrap();
        assert!(g.net(na).is_zero());
        assert!(!g.net(nb).is_zero());
    }
}
