//! The u1/u2/u3 field networks and the evaluation interface samplers use.
//!
//! Input layouts (columns, left to right; `d` only when step-conditioned):
//!
//! ```text
//! u1: x(2), t, [d]                       -> velocity (2)
//! u2: v(2), x(2), t, [d]                 -> acceleration (2)
//! u3: a(2), v(2), x(2), t, [d]           -> jerk (2)
//! ```

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{param_count, Activation, Checkpoint, MlpModel, NetworkRecord, CHECKPOINT_FORMAT_VERSION};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Order {
    #[serde(rename = "1")]
    First = 1,
    #[serde(rename = "2")]
    Second = 2,
    #[serde(rename = "3")]
    Third = 3,
}

impl Order {
    pub fn from_int(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            3 => Ok(Order::Third),
            other => Err(Error::BadOrder(other as usize)),
        }
    }

    pub fn as_int(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![100, 100],
            activation: Activation::Relu,
        }
    }
}

impl Architecture {
    /// Full layer sizes for field network `k` (1-based).
    pub fn layer_sizes(&self, k: usize, step_conditioned: bool) -> Vec<usize> {
        let mut sizes = vec![input_dim(k, step_conditioned)];
        sizes.extend(&self.hidden);
        sizes.push(2);
        sizes
    }

    pub fn param_count(&self, order: Order, step_conditioned: bool) -> usize {
        (1..=order.as_int())
            .map(|k| param_count(&self.layer_sizes(k, step_conditioned)))
            .sum()
    }
}

/// Input width of field network `k` (1-based).
pub fn input_dim(k: usize, step_conditioned: bool) -> usize {
    2 * k + 1 + usize::from(step_conditioned)
}

/// `[t]` or `[t, d]` columns.
pub fn time_columns(t: ArrayView1<f64>, d: ArrayView1<f64>, step_conditioned: bool) -> Array2<f64> {
    let n = t.len();
    let cols = if step_conditioned { 2 } else { 1 };
    Array2::from_shape_fn((n, cols), |(i, j)| if j == 0 { t[i] } else { d[i] })
}

/// Anything that can supply velocity, acceleration and jerk fields.
///
/// `t` and `d` carry one entry per row of `x`.
pub trait FieldSet {
    fn order(&self) -> Order;

    fn velocity(&self, x: ArrayView2<f64>, t: ArrayView1<f64>, d: ArrayView1<f64>) -> Result<Array2<f64>>;

    fn acceleration(
        &self,
        v: ArrayView2<f64>,
        x: ArrayView2<f64>,
        t: ArrayView1<f64>,
        d: ArrayView1<f64>,
    ) -> Result<Array2<f64>>;

    fn jerk(
        &self,
        a: ArrayView2<f64>,
        v: ArrayView2<f64>,
        x: ArrayView2<f64>,
        t: ArrayView1<f64>,
        d: ArrayView1<f64>,
    ) -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldModels {
    pub u1: MlpModel,
    pub u2: Option<MlpModel>,
    pub u3: Option<MlpModel>,
    pub step_conditioned: bool,
}

const NAMES: [&str; 3] = ["u1", "u2", "u3"];

impl FieldModels {
    /// Initializes u1..u_order from one stream, in that order.
    pub fn init(arch: &Architecture, order: Order, step_conditioned: bool, rng: &mut SeededRng) -> Result<Self> {
        let mut make = |k| MlpModel::init(&arch.layer_sizes(k, step_conditioned), arch.activation, rng);
        let u1 = make(1)?;
        let u2 = if order >= Order::Second { Some(make(2)?) } else { None };
        let u3 = if order >= Order::Third { Some(make(3)?) } else { None };
        Ok(Self {
            u1,
            u2,
            u3,
            step_conditioned,
        })
    }

    pub fn order(&self) -> Order {
        match (&self.u2, &self.u3) {
            (Some(_), Some(_)) => Order::Third,
            (Some(_), None) => Order::Second,
            _ => Order::First,
        }
    }

    /// Drops networks above `order`.
    pub fn truncated(&self, order: Order) -> Self {
        Self {
            u1: self.u1.clone(),
            u2: if order >= Order::Second { self.u2.clone() } else { None },
            u3: if order >= Order::Third { self.u3.clone() } else { None },
            step_conditioned: self.step_conditioned,
        }
    }

    pub fn networks(&self) -> Vec<(&'static str, &MlpModel)> {
        let mut out = vec![(NAMES[0], &self.u1)];
        if let Some(m) = &self.u2 {
            out.push((NAMES[1], m));
        }
        if let Some(m) = &self.u3 {
            out.push((NAMES[2], m));
        }
        out
    }

    pub fn networks_mut(&mut self) -> Vec<&mut MlpModel> {
        let mut out = vec![&mut self.u1];
        if let Some(m) = self.u2.as_mut() {
            out.push(m);
        }
        if let Some(m) = self.u3.as_mut() {
            out.push(m);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.networks().iter().map(|(_, m)| m.param_count()).sum()
    }

    pub fn to_checkpoint(&self, rng_seed: u64, step_count: u64) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            rng_seed,
            step_count,
            step_conditioned: self.step_conditioned,
            networks: self
                .networks()
                .into_iter()
                .map(|(n, m)| NetworkRecord::from_model(n, m))
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |name: &str| ck.network(name).map(NetworkRecord::to_model).transpose();
        let u1 = get("u1")?.ok_or_else(|| Error::Checkpoint("missing network `u1`".into()))?;
        let u2 = get("u2")?;
        let u3 = get("u3")?;
        if u3.is_some() && u2.is_none() {
            return Err(Error::Checkpoint("`u3` present without `u2`".into()));
        }
        let models = Self {
            u1,
            u2,
            u3,
            step_conditioned: ck.step_conditioned,
        };
        for (k, (name, m)) in models.networks().into_iter().enumerate() {
            let expected = input_dim(k + 1, models.step_conditioned);
            if m.input_dim() != expected || m.output_dim() != 2 {
                return Err(Error::Checkpoint(format!(
                    "network `{name}` has shape {:?}; expected input {expected} and output 2",
                    m.layer_sizes()
                )));
            }
        }
        Ok(models)
    }

    fn cond(&self, t: ArrayView1<f64>, d: ArrayView1<f64>) -> Array2<f64> {
        time_columns(t, d, self.step_conditioned)
    }

    fn missing(name: &str) -> Error {
        Error::InvalidLossConfig(format!("field network `{name}` is not present"))
    }
}

fn hcat(parts: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
    concatenate(Axis(1), parts).map_err(|_| Error::DimensionMismatch {
        context: "field input rows".into(),
        expected: parts[0].nrows(),
        actual: parts.iter().map(|p| p.nrows()).find(|&r| r != parts[0].nrows()).unwrap_or(0),
    })
}

impl FieldSet for FieldModels {
    fn order(&self) -> Order {
        FieldModels::order(self)
    }

    fn velocity(&self, x: ArrayView2<f64>, t: ArrayView1<f64>, d: ArrayView1<f64>) -> Result<Array2<f64>> {
        let cond = self.cond(t, d);
        let input = hcat(&[x.view(), cond.view()])?;
        self.u1.forward_batch(input.view())
    }

    fn acceleration(
        &self,
        v: ArrayView2<f64>,
        x: ArrayView2<f64>,
        t: ArrayView1<f64>,
        d: ArrayView1<f64>,
    ) -> Result<Array2<f64>> {
        let u2 = self.u2.as_ref().ok_or_else(|| Self::missing("u2"))?;
        let cond = self.cond(t, d);
        let input = hcat(&[v.view(), x.view(), cond.view()])?;
        u2.forward_batch(input.view())
    }

    fn jerk(
        &self,
        a: ArrayView2<f64>,
        v: ArrayView2<f64>,
        x: ArrayView2<f64>,
        t: ArrayView1<f64>,
        d: ArrayView1<f64>,
    ) -> Result<Array2<f64>> {
        let u3 = self.u3.as_ref().ok_or_else(|| Self::missing("u3"))?;
        let cond = self.cond(t, d);
        let input = hcat(&[a.view(), v.view(), x.view(), cond.view()])?;
        u3.forward_batch(input.view())
    }
}

/// Rows of `points` as an `(n, 2)` matrix.
pub fn points_to_matrix(points: &[[f64; 2]]) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), 2), |(i, j)| points[i][j])
}

pub fn matrix_to_points(m: ArrayView2<f64>) -> Vec<[f64; 2]> {
    m.rows().into_iter().map(|r| [r[0], r[1]]).collect()
}

pub fn filled(n: usize, v: f64) -> Array1<f64> {
    Array1::from_elem(n, v)
}
