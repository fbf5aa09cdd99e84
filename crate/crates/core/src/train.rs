//! Batch assembly, the composite M1/M2/M3/SC loss and the training loop.
//!
//! A batch is split into a leading true-target block and a trailing
//! self-consistency block (see [`LossConfig::split`]).
//!
//! True-target rows are queried at step `2d = 0` and regress
//!
//! ```text
//! M1: ‖u1(x_t, t, 0) − ẋ_t‖²
//! M2: ‖u2(u1(x_t, t, 0), x_t, t, 0) − ẍ_t‖²
//! M3: ‖u3(u2(..), u1(..), x_t, t, 0) − x⃛_t‖²
//! ```
//!
//! u1's prediction enters u2 and u3 detached unless
//! [`LossConfig::detach_velocity_input`] is off, in which case M2 and M3 also
//! train θ1.
//! Self-consistency rows build
//!
//! ```text
//! s      = u1(x_t, t, d)
//! x_{t+d} = x_t + d·s + (d²/2)·u2(s, x_t, t, d) + (d³/6)·u3(..)   (as far as the models go)
//! target = stopgrad((s + u1(x_{t+d}, t + d, d)) / 2)
//! SC:      ‖u1(x_t, t, 2d) − target‖²
//! ```
//!
//! Each term is reduced over its own block (sum or mean).

use std::io::Write;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::config::TrainRun;
use crate::datasets::{sample_dataset, PointCloud};
use crate::error::{Error, Result};
use crate::fields::{time_columns, FieldModels, FieldSet, Order};
use crate::losses::{LossConfig, Reduction};
use crate::nn::{AdamState, Gradients, MlpModel, NetId, Tape, Var};
use crate::rng::SeededRng;
use crate::sample::taylor_step;
use crate::trajectory::Schedule;

/// Draws `(d, t)`: `d` uniform over `step_set`, `t` uniform over the grid
/// `{0, d, 2d, ...}` restricted to `t + 2d ≤ 1`. Steps with `2d > 1` have no
/// admissible grid point and return `t = 0`.
pub fn sample_step_and_time(rng: &mut SeededRng, step_set: &[f64]) -> (f64, f64) {
    let d = step_set[rng.below(step_set.len())];
    if 2.0 * d > 1.0 {
        return (d, 0.0);
    }
    let slots = (1.0 / d).round() as usize - 1;
    let t = rng.below(slots) as f64 * d;
    (d, t)
}

/// Steps usable for self-consistency: those with `2d ≤ 1`.
pub fn self_consistency_steps(cfg: &LossConfig) -> Vec<f64> {
    cfg.step_set().into_iter().filter(|&d| 2.0 * d <= 1.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub x0: Array2<f64>,
    pub x1: Array2<f64>,
    pub t: Array1<f64>,
    pub d: Array1<f64>,
    pub is_true_target: Vec<bool>,
    pub x_t: Array2<f64>,
    /// Rows `0..n_true` only.
    pub dx_true: Array2<f64>,
    pub ddx_true: Array2<f64>,
    pub dddx_true: Array2<f64>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn n_true(&self) -> usize {
        self.dx_true.nrows()
    }

    pub fn n_sc(&self) -> usize {
        self.len() - self.n_true()
    }

    /// Builds a batch from explicit endpoint pairs. Rows `0..n_true` are
    /// true-target rows and get `d = 0`.
    pub fn from_pairs(
        schedule: &Schedule,
        x0: Array2<f64>,
        x1: Array2<f64>,
        t: Array1<f64>,
        mut d: Array1<f64>,
        n_true: usize,
    ) -> Result<Self> {
        let n = t.len();
        if x0.nrows() != n || x1.nrows() != n || d.len() != n || n_true > n {
            return Err(Error::DimensionMismatch {
                context: "batch rows".into(),
                expected: n,
                actual: x0.nrows().max(x1.nrows()).max(d.len()),
            });
        }
        let mut x_t = Array2::zeros((n, 2));
        let mut dx = Array2::zeros((n_true, 2));
        let mut ddx = Array2::zeros((n_true, 2));
        let mut dddx = Array2::zeros((n_true, 2));
        for i in 0..n {
            let max_order = if i < n_true { 3 } else { 0 };
            let c = schedule.eval_up_to(t[i], max_order)?;
            for j in 0..2 {
                let (a, b) = (x0[[i, j]], x1[[i, j]]);
                x_t[[i, j]] = c[0].0 * a + c[0].1 * b;
                if i < n_true {
                    dx[[i, j]] = c[1].0 * a + c[1].1 * b;
                    ddx[[i, j]] = c[2].0 * a + c[2].1 * b;
                    dddx[[i, j]] = c[3].0 * a + c[3].1 * b;
                }
            }
        }
        d.slice_mut(s![..n_true]).fill(0.0);
        Ok(Self {
            x0,
            x1,
            t,
            d,
            is_true_target: (0..n).map(|i| i < n_true).collect(),
            x_t,
            dx_true: dx,
            ddx_true: ddx,
            dddx_true: dddx,
        })
    }
}

/// Draws one training batch: source and target points uniformly with
/// replacement, placed in the `(x0, x1)` slots the schedule dictates.
pub fn assemble_batch(
    rng: &mut SeededRng,
    source: &PointCloud,
    target: &PointCloud,
    schedule: &Schedule,
    cfg: &LossConfig,
    batch_size: usize,
) -> Result<TrainBatch> {
    let (n_true, _) = cfg.split(batch_size);
    let steps = self_consistency_steps(cfg);
    let mut x0 = Array2::zeros((batch_size, 2));
    let mut x1 = Array2::zeros((batch_size, 2));
    let mut t = Array1::zeros(batch_size);
    let mut d = Array1::zeros(batch_size);
    for i in 0..batch_size {
        let src = source.points[rng.below(source.len())];
        let tgt = target.points[rng.below(target.len())];
        let (a, b) = schedule.assign(src, tgt);
        let (di, ti) = sample_step_and_time(rng, &steps);
        x0.row_mut(i).assign(&ArrayView1::from(&a));
        x1.row_mut(i).assign(&ArrayView1::from(&b));
        t[i] = ti;
        d[i] = di;
    }
    TrainBatch::from_pairs(schedule, x0, x1, t, d, n_true)
}

/// Detached self-consistency target for every row, evaluated without a tape.
pub fn self_consistency_target<F: FieldSet + ?Sized>(
    fields: &F,
    x_t: ArrayView2<f64>,
    t: ArrayView1<f64>,
    d: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    for (&ti, &di) in t.iter().zip(d.iter()) {
        if ti + di > 1.0 + 1e-12 {
            return Err(Error::StepOvershoot { t: ti, step: di });
        }
    }
    let first = taylor_step(fields, fields.order(), x_t, t, d, d)?;
    let t_next = &t + &d;
    let s_next = fields.velocity(first.next.view(), t_next.view(), d)?;
    Ok((&first.velocity + &s_next) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub sc: f64,
}

impl std::fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "total={} m1={} m2={} m3={} sc={}",
            self.total, self.m1, self.m2, self.m3, self.sc
        )
    }
}

/// Loss value with per-network gradients (`u1`, `u2`, `u3` order; absent
/// networks omitted).
pub struct LossWithGrads {
    pub loss: LossBreakdown,
    pub grads: Vec<crate::nn::ModelGrads>,
}

struct Registered {
    ids: Vec<NetId>,
}

impl Registered {
    fn u(&self, k: usize) -> NetId {
        self.ids[k - 1]
    }
}

fn term_weight(reduction: Reduction, n: usize) -> f64 {
    match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / n as f64,
    }
}

fn mlp_on(tape: &mut Tape<'_>, net: NetId, parts: &[Var]) -> Result<Var> {
    let input = tape.concat(parts)?;
    tape.mlp(net, input)
}

fn record_loss<'m>(
    tape: &mut Tape<'m>,
    models: &'m FieldModels,
    batch: &TrainBatch,
    cfg: &LossConfig,
) -> Result<(Option<Var>, LossBreakdown, Registered)> {
    let terms = cfg.terms;
    let order = models.order();
    if terms.model_order() > order {
        return Err(Error::InvalidLossConfig(format!(
            "loss `{terms}` needs order-{} fields, models provide order {}",
            terms.model_order().as_int(),
            order.as_int()
        )));
    }
    let n_true = batch.n_true();
    let n_sc = batch.n_sc();
    let fraction = cfg.true_target_fraction;
    if terms.any_matching() && n_true == 0 {
        let term = if terms.m1 { "M1" } else if terms.m2 { "M2" } else { "M3" };
        return Err(Error::EmptySubBatch { term, fraction });
    }
    if terms.sc && n_sc == 0 {
        return Err(Error::EmptySubBatch { term: "SC", fraction });
    }

    let reg = Registered {
        ids: models.networks().into_iter().map(|(_, m)| tape.register(m)).collect(),
    };
    let cond_on = models.step_conditioned;
    let mut parts: Vec<Var> = Vec::new();
    let mut breakdown = LossBreakdown::default();

    if terms.any_matching() {
        let rows = s![..n_true, ..];
        let x = tape.constant(batch.x_t.slice(rows).to_owned());
        let zeros = Array1::zeros(n_true);
        let cond = tape.constant(time_columns(batch.t.slice(s![..n_true]), zeros.view(), cond_on));
        let w = term_weight(cfg.reduction, n_true);

        let v = mlp_on(tape, reg.u(1), &[x, cond])?;
        if terms.m1 {
            let target = tape.constant(batch.dx_true.clone());
            let r = tape.sub(v, target)?;
            let l = tape.squared_norm(r, w)?;
            breakdown.m1 = tape.scalar(l);
            parts.push(l);
        }
        if terms.m2 || terms.m3 {
            let v = if cfg.detach_velocity_input { tape.detach(v)? } else { v };
            let a = mlp_on(tape, reg.u(2), &[v, x, cond])?;
            if terms.m2 {
                let target = tape.constant(batch.ddx_true.clone());
                let r = tape.sub(a, target)?;
                let l = tape.squared_norm(r, w)?;
                breakdown.m2 = tape.scalar(l);
                parts.push(l);
            }
            if terms.m3 {
                let j = mlp_on(tape, reg.u(3), &[a, v, x, cond])?;
                let target = tape.constant(batch.dddx_true.clone());
                let r = tape.sub(j, target)?;
                let l = tape.squared_norm(r, w)?;
                breakdown.m3 = tape.scalar(l);
                parts.push(l);
            }
        }
    }

    if terms.sc {
        let x_sc = batch.x_t.slice(s![n_true.., ..]).to_owned();
        let t_sc = batch.t.slice(s![n_true..]).to_owned();
        let d_sc = batch.d.slice(s![n_true..]).to_owned();
        let x = tape.constant(x_sc);
        let cond = tape.constant(time_columns(t_sc.view(), d_sc.view(), cond_on));

        // Inner Taylor step, recorded then detached.
        let s_t = mlp_on(tape, reg.u(1), &[x, cond])?;
        let hv = tape.row_scale(s_t, d_sc.clone())?;
        let mut x_next = tape.add(x, hv)?;
        if order >= Order::Second {
            let a = mlp_on(tape, reg.u(2), &[s_t, x, cond])?;
            let ha = tape.row_scale(a, d_sc.mapv(|h| h * h / 2.0))?;
            x_next = tape.add(x_next, ha)?;
            if order >= Order::Third {
                let j = mlp_on(tape, reg.u(3), &[a, s_t, x, cond])?;
                let hj = tape.row_scale(j, d_sc.mapv(|h| h * h * h / 6.0))?;
                x_next = tape.add(x_next, hj)?;
            }
        }
        let t_next = &t_sc + &d_sc;
        let cond_next = tape.constant(time_columns(t_next.view(), d_sc.view(), cond_on));
        let s_next = mlp_on(tape, reg.u(1), &[x_next, cond_next])?;
        let sum = tape.add(s_t, s_next)?;
        let avg = tape.scale(sum, 0.5)?;
        let target = tape.detach(avg)?;

        let two_d = &d_sc * 2.0;
        let cond_2d = tape.constant(time_columns(t_sc.view(), two_d.view(), cond_on));
        let pred = mlp_on(tape, reg.u(1), &[x, cond_2d])?;
        let r = tape.sub(pred, target)?;
        let l = tape.squared_norm(r, term_weight(cfg.reduction, n_sc))?;
        breakdown.sc = tape.scalar(l);
        parts.push(l);
    }

    let mut total = None;
    for p in parts {
        total = Some(match total {
            None => p,
            Some(acc) => tape.add(acc, p)?,
        });
    }
    breakdown.total = total.map_or(0.0, |v| tape.scalar(v));
    Ok((total, breakdown, reg))
}

/// Composite loss value and per-term breakdown.
pub fn homo_loss(models: &FieldModels, batch: &TrainBatch, cfg: &LossConfig) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    Ok(record_loss(&mut tape, models, batch, cfg)?.1)
}

/// Composite loss with gradients for every network in `models`.
pub fn homo_loss_and_grads(models: &FieldModels, batch: &TrainBatch, cfg: &LossConfig) -> Result<LossWithGrads> {
    let mut tape = Tape::new();
    let (total, loss, reg) = record_loss(&mut tape, models, batch, cfg)?;
    let total = total.ok_or_else(|| Error::InvalidLossConfig("no loss terms enabled".into()))?;
    let Gradients { nets } = tape.backward_scalar(total)?;
    debug_assert_eq!(nets.len(), reg.ids.len());
    Ok(LossWithGrads { loss, grads: nets })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss: LossBreakdown,
}

/// Writes the history as CSV `step,total,m1,m2,m3,sc` (disabled terms are 0).
pub fn write_loss_csv<W: Write>(mut w: W, history: &[LossRecord]) -> Result<()> {
    writeln!(w, "step,total,m1,m2,m3,sc")?;
    for r in history {
        let l = &r.loss;
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.step, l.total, l.m1, l.m2, l.m3, l.sc
        )?;
    }
    Ok(())
}

/// Training clouds and stream layout derived from a run's seed.
///
/// Streams: `split(1)` training clouds, `split(2)` initialization,
/// `split(3)` batches, `split(4)` evaluation clouds.
pub struct RunStreams {
    pub data: SeededRng,
    pub init: SeededRng,
    pub batches: SeededRng,
    pub eval: SeededRng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        let root = SeededRng::new(seed);
        Self {
            data: root.split(1),
            init: root.split(2),
            batches: root.split(3),
            eval: root.split(4),
        }
    }
}

/// Everything a finished (or aborted) training run produced.
pub struct TrainOutcome {
    pub models: FieldModels,
    pub history: Vec<LossRecord>,
    pub source: PointCloud,
    pub target: PointCloud,
    /// Set when the run stopped early; `models` then hold the last finite state.
    pub failure: Option<Error>,
}

pub fn init_models(run: &TrainRun) -> Result<FieldModels> {
    let mut init = RunStreams::new(run.seed).init;
    FieldModels::init(
        &run.architecture,
        run.loss.terms.model_order(),
        run.loss.step_conditioned(),
        &mut init,
    )
}

/// Runs exactly `run.optimizer.steps` updates, stopping early only on a
/// numeric failure, which is reported in [`TrainOutcome::failure`].
pub fn train_outcome(run: &TrainRun) -> Result<TrainOutcome> {
    run.validate()?;
    let spec = run.dataset.resolve()?;
    let streams = RunStreams::new(run.seed);
    let (source, target) = sample_dataset(&spec, &streams.data)?;
    let mut models = init_models(run)?;
    let adam = run.optimizer.adam();
    let mut states: Vec<AdamState> = models.networks().iter().map(|(_, m)| AdamState::new(m, adam)).collect();
    let mut rng = streams.batches;
    let mut history = Vec::with_capacity(run.optimizer.steps);
    let mut failure = None;

    for step in 0..run.optimizer.steps {
        let batch = assemble_batch(&mut rng, &source, &target, &run.schedule, &run.loss, run.optimizer.batch_size)?;
        let LossWithGrads { loss, grads } = homo_loss_and_grads(&models, &batch, &run.loss)?;
        if !loss.total.is_finite() {
            failure = Some(Error::NonFiniteLoss {
                step,
                breakdown: loss.to_string(),
            });
            break;
        }
        history.push(LossRecord { step, loss });
        let snapshot = models.clone();
        let applied = models
            .networks_mut()
            .into_iter()
            .zip(states.iter_mut())
            .zip(&grads)
            .enumerate()
            .try_for_each(|(k, ((m, st), g)): (usize, ((&mut MlpModel, &mut AdamState), _))| st.step(m, g, k + 1));
        if let Err(e) = applied {
            models = snapshot;
            failure = Some(e);
            break;
        }
    }
    Ok(TrainOutcome {
        models,
        history,
        source,
        target,
        failure,
    })
}

/// Trains and returns models plus loss history; numeric failures are errors.
pub fn train(run: &TrainRun) -> Result<(FieldModels, Vec<LossRecord>)> {
    let out = train_outcome(run)?;
    match out.failure {
        Some(e) => Err(e),
        None => Ok((out.models, out.history)),
    }
}

/// Stacks the rows of several `(n, 2)` blocks.
pub fn vstack(blocks: &[ArrayView2<f64>]) -> Array2<f64> {
    ndarray::concatenate(Axis(0), blocks).expect("column counts agree")
}
