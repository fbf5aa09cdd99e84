//! Interpolation schedules `x_t = α_t x0 + β_t x1` with closed-form
//! derivatives through third order.
//!
//! # Variance-preserving schedule
//!
//! With `s = 1 − t` and `E(t) = −¼ a s² − ½ b s`:
//!
//! ```text
//! α   = exp(E)          E'  = ½ a s + ½ b      E'' = −½ a      E''' = 0
//! α'  = α E'
//! α'' = α (E'² + E'')
//! α'''= α (E'³ + 3 E' E'')
//! ```
//!
//! `β = √g` with `g = 1 − α²`, so `g' = −2αα'`, `g'' = −2(α'² + αα'')`,
//! `g''' = −2(3α'α'' + αα''')` and, differentiating `β² = g` repeatedly,
//!
//! ```text
//! β'   = g' / (2β)
//! β''  = (g'' − 2β'²) / (2β)
//! β''' = (g''' − 6β'β'') / (2β)
//! ```
//!
//! These are singular where `β → 0`, which only happens at `t = 1`.
//!
//! # Smoothstep schedule
//!
//! `β = 3t² − 2t³`, `α = 1 − β`: `β' = 6t − 6t²`, `β'' = 6 − 12t`, `β''' = −12`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SINGULAR_BETA: f64 = 1e-12;

/// Which end of a schedule the source distribution occupies.
///
/// The variance-preserving schedule puts `x1` at `t = 0` (α₀ ≈ 0) and `x0` at
/// `t = 1`; smoothstep is the other way round. Samplers always integrate
/// `t: 0 → 1`, so the source cloud is placed in whichever slot sits at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceSlot {
    X0,
    X1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule {
    Vp { a: f64, b: f64 },
    Smoothstep,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::vp_default()
    }
}

/// `(α^(k), β^(k))` for k = 0..=3.
pub type Coefficients = [(f64, f64); 4];

impl Schedule {
    pub fn vp_default() -> Self {
        Schedule::Vp { a: 19.9, b: 0.1 }
    }

    pub fn source_slot(&self) -> SourceSlot {
        match self {
            Schedule::Vp { .. } => SourceSlot::X1,
            Schedule::Smoothstep => SourceSlot::X0,
        }
    }

    /// `(x0, x1)` assignment for a (source, target) pair.
    pub fn assign<T>(&self, source: T, target: T) -> (T, T) {
        match self.source_slot() {
            SourceSlot::X0 => (source, target),
            SourceSlot::X1 => (target, source),
        }
    }

    /// α and β differentiated `order` times at `t`.
    pub fn eval(&self, t: f64, order: usize) -> Result<(f64, f64)> {
        if order > 3 {
            return Err(Error::BadOrder(order));
        }
        Ok(self.eval_up_to(t, order)?[order])
    }

    /// All derivative orders `0..=max_order`; entries past `max_order` are zero.
    pub fn eval_up_to(&self, t: f64, max_order: usize) -> Result<Coefficients> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::TimeOutOfRange { t });
        }
        if max_order > 3 {
            return Err(Error::BadOrder(max_order));
        }
        match *self {
            Schedule::Smoothstep => {
                let beta = [3.0 * t * t - 2.0 * t * t * t, 6.0 * t - 6.0 * t * t, 6.0 - 12.0 * t, -12.0];
                let mut out = [(0.0, 0.0); 4];
                out[0] = (1.0 - beta[0], beta[0]);
                for k in 1..=3 {
                    out[k] = (-beta[k], beta[k]);
                }
                Ok(out)
            }
            Schedule::Vp { a, b } => {
                let s = 1.0 - t;
                let e = -0.25 * a * s * s - 0.5 * b * s;
                let e1 = 0.5 * a * s + 0.5 * b;
                let e2 = -0.5 * a;
                let al0 = e.exp();
                let al1 = al0 * e1;
                let al2 = al0 * (e1 * e1 + e2);
                let al3 = al0 * (e1 * e1 * e1 + 3.0 * e1 * e2);
                let g = 1.0 - al0 * al0;
                let b0 = g.max(0.0).sqrt();
                let mut out = [(al0, b0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)];
                if max_order == 0 {
                    return Ok(out);
                }
                if b0 < SINGULAR_BETA {
                    return Err(Error::Singular { t, beta: b0 });
                }
                let g1 = -2.0 * al0 * al1;
                let g2 = -2.0 * (al1 * al1 + al0 * al2);
                let g3 = -2.0 * (3.0 * al1 * al2 + al0 * al3);
                let b1 = g1 / (2.0 * b0);
                let b2 = (g2 - 2.0 * b1 * b1) / (2.0 * b0);
                let b3 = (g3 - 6.0 * b1 * b2) / (2.0 * b0);
                out[1] = (al1, b1);
                out[2] = (al2, b2);
                out[3] = (al3, b3);
                Ok(out)
            }
        }
    }
}

/// A point on the interpolation path with its exact time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    pub x_t: [f64; 2],
    pub dx: [f64; 2],
    pub ddx: [f64; 2],
    pub dddx: [f64; 2],
}

fn combine((a, b): (f64, f64), x0: [f64; 2], x1: [f64; 2]) -> [f64; 2] {
    [a * x0[0] + b * x1[0], a * x0[1] + b * x1[1]]
}

pub fn make_path_point(schedule: &Schedule, x0: [f64; 2], x1: [f64; 2], t: f64) -> Result<PathPoint> {
    let c = schedule.eval_up_to(t, 3)?;
    Ok(PathPoint {
        t,
        x_t: combine(c[0], x0, x1),
        dx: combine(c[1], x0, x1),
        ddx: combine(c[2], x0, x1),
        dddx: combine(c[3], x0, x1),
    })
}
