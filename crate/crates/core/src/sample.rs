//! Taylor-step samplers.
//!
//! One step of order `k` from `x` at time `t` with step `h` and conditioning
//! step `d` is
//!
//! ```text
//! v = u1(x, t, d)
//! a = u2(v, x, t, d)                 (k ≥ 2)
//! j = u3(a, v, x, t, d)              (k = 3)
//! x' = x + h·v + (h²/2)·a + (h³/6)·j
//! ```
//!
//! evaluated left to right, so a vanishing higher-order field leaves the
//! lower-order update bit-identical.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{filled, points_to_matrix, FieldSet, Order};

/// Δt used by the piecewise step when `d` is below the finest step.
pub const DELTA_T_FLOOR: f64 = 1.0 / 128.0;

const TIME_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub order: Order,
    pub steps: usize,
    pub delta_t_floor: f64,
}

impl SamplerConfig {
    pub fn new(order: Order, steps: usize) -> Self {
        Self {
            order,
            steps,
            delta_t_floor: DELTA_T_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config {
                path: "sampler.steps".into(),
                message: "must be >= 1".into(),
            });
        }
        Ok(())
    }

    /// The `d` fed to the networks: the largest dyadic value not above `1/M`,
    /// or 0 when `1/M` is finer than `delta_t_floor`.
    pub fn conditioning_step(&self) -> f64 {
        let h = 1.0 / self.steps as f64;
        if h < self.delta_t_floor {
            return 0.0;
        }
        let mut c = 1.0;
        while c > h * (1.0 + 1e-12) {
            c *= 0.5;
        }
        c
    }
}

/// Result of one Taylor step: the new state and the velocity used.
pub struct TaylorStep {
    pub next: Array2<f64>,
    pub velocity: Array2<f64>,
}

/// Per-row Taylor step of the given order. `t` and `d` condition the fields;
/// `h` is the step actually taken.
pub fn taylor_step<F: FieldSet + ?Sized>(
    fields: &F,
    order: Order,
    x: ArrayView2<f64>,
    t: ArrayView1<f64>,
    d: ArrayView1<f64>,
    h: ArrayView1<f64>,
) -> Result<TaylorStep> {
    if order > fields.order() {
        return Err(Error::BadOrder(order.as_int()));
    }
    let v = fields.velocity(x, t, d)?;
    let mut next = x.to_owned();
    Zip::from(next.rows_mut())
        .and(v.rows())
        .and(h)
        .for_each(|mut row, vr, &hh| {
            Zip::from(&mut row).and(&vr).for_each(|xi, &vi| *xi += hh * vi);
        });
    if order >= Order::Second {
        let a = fields.acceleration(v.view(), x, t, d)?;
        Zip::from(next.rows_mut())
            .and(a.rows())
            .and(h)
            .for_each(|mut row, ar, &hh| {
                let c2 = hh * hh / 2.0;
                Zip::from(&mut row).and(&ar).for_each(|xi, &ai| *xi += c2 * ai);
            });
        if order >= Order::Third {
            let j = fields.jerk(a.view(), v.view(), x, t, d)?;
            Zip::from(next.rows_mut())
                .and(j.rows())
                .and(h)
                .for_each(|mut row, jr, &hh| {
                    let c3 = hh * hh * hh / 6.0;
                    Zip::from(&mut row).and(&jr).for_each(|xi, &ji| *xi += c3 * ji);
                });
        }
    }
    Ok(TaylorStep { next, velocity: v })
}

/// Piecewise high-order update of every row from `t` by step size `d`, using the
/// field set's full order. For `d ≥ delta_t_floor` the networks are queried
/// at `d` and the state moves by `d`; below it they are queried at `d = 0`
/// and the state moves by `delta_t_floor`.
pub fn homo_step_batch<F: FieldSet + ?Sized>(
    fields: &F,
    x: ArrayView2<f64>,
    t: f64,
    d: f64,
    delta_t_floor: f64,
) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange { t });
    }
    let (step, cond) = if d >= delta_t_floor { (d, d) } else { (delta_t_floor, 0.0) };
    if t + step > 1.0 + TIME_TOLERANCE {
        return Err(Error::StepOvershoot { t, step });
    }
    let n = x.nrows();
    let out = taylor_step(
        fields,
        fields.order(),
        x,
        filled(n, t).view(),
        filled(n, cond).view(),
        filled(n, step).view(),
    )?;
    Ok(out.next)
}

pub fn homo_step<F: FieldSet + ?Sized>(fields: &F, x: [f64; 2], t: f64, d: f64) -> Result<[f64; 2]> {
    let next = homo_step_batch(fields, points_to_matrix(&[x]).view(), t, d, DELTA_T_FLOOR)?;
    Ok([next[[0, 0]], next[[0, 1]]])
}

/// Integrates every row of `x_init` from `t = 0` to `t = 1` in `cfg.steps`
/// uniform steps. Returns all `steps + 1` states when `record` is set,
/// otherwise only the final state.
pub fn sample_batch<F: FieldSet + ?Sized>(
    fields: &F,
    cfg: &SamplerConfig,
    x_init: ArrayView2<f64>,
    record: bool,
) -> Result<Vec<Array2<f64>>> {
    cfg.validate()?;
    let m = cfg.steps;
    let n = x_init.nrows();
    let h = 1.0 / m as f64;
    let cond = filled(n, cfg.conditioning_step());
    let hs = filled(n, h);
    let mut states = Vec::with_capacity(if record { m + 1 } else { 1 });
    let mut x = x_init.to_owned();
    if record {
        states.push(x.clone());
    }
    for step in 0..m {
        let t = step as f64 / m as f64;
        let ts: Array1<f64> = filled(n, t);
        x = taylor_step(fields, cfg.order, x.view(), ts.view(), cond.view(), hs.view())?.next;
        if record {
            states.push(x.clone());
        }
    }
    if !record {
        states.push(x);
    }
    Ok(states)
}

/// Single-point trajectory of length `steps + 1`.
pub fn sample<F: FieldSet + ?Sized>(fields: &F, cfg: &SamplerConfig, x_init: [f64; 2]) -> Result<Vec<[f64; 2]>> {
    let states = sample_batch(fields, cfg, points_to_matrix(&[x_init]).view(), true)?;
    Ok(states.iter().map(|s| [s[[0, 0]], s[[0, 1]]]).collect())
}

/// Writes recorded states as CSV `point_id,step,t,x,y`.
pub fn write_trajectory_csv<W: Write>(mut w: W, states: &[Array2<f64>]) -> Result<()> {
    writeln!(w, "point_id,step,t,x,y")?;
    let m = states.len().saturating_sub(1).max(1);
    let n = states.first().map_or(0, |s| s.nrows());
    for p in 0..n {
        for (k, s) in states.iter().enumerate() {
            let t = k as f64 / m as f64;
            writeln!(w, "{p},{k},{t:.16e},{:.16e},{:.16e}", s[[p, 0]], s[[p, 1]])?;
        }
    }
    Ok(())
}
