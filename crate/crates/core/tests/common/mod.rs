//! Reference implementations shared by the integration tests. Nothing here
//! calls the library's forward pass, tape or sampler.
#![allow(dead_code)]

use homoflow::fields::{Architecture, FieldModels, FieldSet, Order};
use homoflow::losses::{LossConfig, LossTerms, Reduction};
use homoflow::nn::{Activation, MlpModel};
use homoflow::rng::SeededRng;
use homoflow::train::{sample_step_and_time, self_consistency_steps, TrainBatch};
use homoflow::trajectory::Schedule;
use homoflow::Result;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Plain-loop forward pass.
pub fn ref_forward(m: &MlpModel, input: &[f64]) -> Vec<f64> {
    let layers = m.num_layers();
    let mut h = input.to_vec();
    for l in 0..layers {
        let w = &m.weights()[l];
        let b = &m.biases()[l];
        let mut out = vec![0.0; w.nrows()];
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = b[i];
            for (j, hj) in h.iter().enumerate() {
                s += w[[i, j]] * hj;
            }
            *o = if l + 1 < layers {
                match m.activation() {
                    Activation::Relu => s.max(0.0),
                    Activation::Tanh => s.tanh(),
                }
            } else {
                s
            };
        }
        h = out;
    }
    h
}

fn cond(t: f64, d: f64, step_conditioned: bool) -> Vec<f64> {
    if step_conditioned {
        vec![t, d]
    } else {
        vec![t]
    }
}

fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn sq(a: &[f64], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn row(m: &Array2<f64>, i: usize) -> [f64; 2] {
    [m[[i, 0]], m[[i, 1]]]
}

/// Quantities the loss treats as constants, evaluated once at the current
/// parameters.
pub struct Frozen {
    pub sc_target: Vec<[f64; 2]>,
    pub v_true: Vec<[f64; 2]>,
}

pub fn ref_sc_target(models: &FieldModels, x: [f64; 2], t: f64, d: f64) -> [f64; 2] {
    let sc = models.step_conditioned;
    let c = cond(t, d, sc);
    let s = ref_forward(&models.u1, &cat(&[&x, &c]));
    let mut next = [x[0] + d * s[0], x[1] + d * s[1]];
    if let Some(u2) = &models.u2 {
        let a = ref_forward(u2, &cat(&[&s, &x, &c]));
        for k in 0..2 {
            next[k] += d * d / 2.0 * a[k];
        }
        if let Some(u3) = &models.u3 {
            let j = ref_forward(u3, &cat(&[&a, &s, &x, &c]));
            for k in 0..2 {
                next[k] += d * d * d / 6.0 * j[k];
            }
        }
    }
    let s2 = ref_forward(&models.u1, &cat(&[&next, &cond(t + d, d, sc)]));
    [(s[0] + s2[0]) / 2.0, (s[1] + s2[1]) / 2.0]
}

pub fn freeze(models: &FieldModels, batch: &TrainBatch) -> Frozen {
    let sc = models.step_conditioned;
    let n_true = batch.n_true();
    let v_true = (0..n_true)
        .map(|i| {
            let v = ref_forward(&models.u1, &cat(&[&row(&batch.x_t, i), &cond(batch.t[i], 0.0, sc)]));
            [v[0], v[1]]
        })
        .collect();
    let sc_target = (n_true..batch.len())
        .map(|i| ref_sc_target(models, row(&batch.x_t, i), batch.t[i], batch.d[i]))
        .collect();
    Frozen { sc_target, v_true }
}

/// Composite loss with the frozen quantities held fixed.
pub fn ref_loss(models: &FieldModels, batch: &TrainBatch, cfg: &LossConfig, frozen: &Frozen) -> f64 {
    let sc = models.step_conditioned;
    let terms = cfg.terms;
    let n_true = batch.n_true();
    let n_sc = batch.len() - n_true;
    let weight = |n: usize| match cfg.reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / n as f64,
    };
    let (mut m1, mut m2, mut m3, mut l_sc) = (0.0, 0.0, 0.0, 0.0);
    if terms.any_matching() {
        for i in 0..n_true {
            let x = row(&batch.x_t, i);
            let c = cond(batch.t[i], 0.0, sc);
            let v = ref_forward(&models.u1, &cat(&[&x, &c]));
            m1 += sq(&v, row(&batch.dx_true, i));
            if terms.m2 || terms.m3 {
                let v_in: Vec<f64> = if cfg.detach_velocity_input {
                    frozen.v_true[i].to_vec()
                } else {
                    v.clone()
                };
                let a = ref_forward(models.u2.as_ref().unwrap(), &cat(&[&v_in, &x, &c]));
                m2 += sq(&a, row(&batch.ddx_true, i));
                if terms.m3 {
                    let j = ref_forward(models.u3.as_ref().unwrap(), &cat(&[&a, &v_in, &x, &c]));
                    m3 += sq(&j, row(&batch.dddx_true, i));
                }
            }
        }
    }
    if terms.sc {
        for k in 0..n_sc {
            let i = n_true + k;
            let pred = ref_forward(
                &models.u1,
                &cat(&[&row(&batch.x_t, i), &cond(batch.t[i], 2.0 * batch.d[i], sc)]),
            );
            l_sc += sq(&pred, frozen.sc_target[k]);
        }
    }
    let wt = if n_true > 0 { weight(n_true) } else { 0.0 };
    let mut total = 0.0;
    if terms.m1 {
        total += wt * m1;
    }
    if terms.m2 {
        total += wt * m2;
    }
    if terms.m3 {
        total += wt * m3;
    }
    if terms.sc {
        total += weight(n_sc) * l_sc;
    }
    total
}

fn net_mut(models: &mut FieldModels, k: usize) -> &mut MlpModel {
    match k {
        0 => &mut models.u1,
        1 => models.u2.as_mut().unwrap(),
        _ => models.u3.as_mut().unwrap(),
    }
}

/// Central finite differences of [`ref_loss`], one flat vector per network.
pub fn fd_gradients(models: &FieldModels, batch: &TrainBatch, cfg: &LossConfig, h: f64) -> Vec<Vec<f64>> {
    let frozen = freeze(models, batch);
    let mut work = models.clone();
    let n_nets = models.networks().len();
    let mut out = Vec::with_capacity(n_nets);
    for k in 0..n_nets {
        let base = net_mut(&mut work, k).params_flat();
        let mut g = vec![0.0; base.len()];
        for p in 0..base.len() {
            let mut plus = base.clone();
            plus[p] += h;
            net_mut(&mut work, k).set_params_flat(&plus).unwrap();
            let lp = ref_loss(&work, batch, cfg, &frozen);
            let mut minus = base.clone();
            minus[p] -= h;
            net_mut(&mut work, k).set_params_flat(&minus).unwrap();
            let lm = ref_loss(&work, batch, cfg, &frozen);
            g[p] = (lp - lm) / (2.0 * h);
        }
        net_mut(&mut work, k).set_params_flat(&base).unwrap();
        out.push(g);
    }
    out
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)` over the concatenation of all networks.
pub fn relative_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let fa: Vec<f64> = a.iter().flatten().copied().collect();
    let fb: Vec<f64> = b.iter().flatten().copied().collect();
    let diff: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x - y).collect();
    let scale = norm(&fa).max(norm(&fb));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub const ALL_LABELS: [&str; 12] = [
    "M1",
    "M2",
    "SC",
    "M1+M2",
    "M1+SC",
    "M2+SC",
    "M1+M2+SC",
    "M3",
    "M1+M3",
    "M1+M2+M3",
    "M1+M2+M3+SC",
    "M3+SC",
];

/// A small random (models, batch, loss config) triple.
pub struct Triple {
    pub models: FieldModels,
    pub batch: TrainBatch,
    pub cfg: LossConfig,
}

pub fn random_triple(seed: u64) -> Triple {
    let mut rng = SeededRng::new(seed).split(77);
    let label = ALL_LABELS[rng.below(ALL_LABELS.len())];
    let terms: LossTerms = label.parse().unwrap();
    let mut cfg = LossConfig::with_terms(terms);
    cfg.reduction = if rng.below(2) == 0 { Reduction::Sum } else { Reduction::Mean };
    cfg.detach_velocity_input = rng.below(2) == 0;
    cfg.true_target_fraction = 0.4 + 0.4 * rng.uniform();
    let depth = 1 + rng.below(2);
    let hidden: Vec<usize> = (0..depth).map(|_| 3 + rng.below(14)).collect();
    let activation = if rng.below(2) == 0 { Activation::Tanh } else { Activation::Relu };
    let arch = Architecture { hidden, activation };
    let models = FieldModels::init(&arch, terms.model_order(), terms.sc, &mut rng).unwrap();
    let schedule = if rng.below(2) == 0 { Schedule::vp_default() } else { Schedule::Smoothstep };
    let n = 4 + rng.below(9);
    let (n_true, _) = cfg.split(n);
    let steps = self_consistency_steps(&cfg);
    let mut x0 = Array2::zeros((n, 2));
    let mut x1 = Array2::zeros((n, 2));
    let mut t = Array1::zeros(n);
    let mut d = Array1::zeros(n);
    for i in 0..n {
        for j in 0..2 {
            x0[[i, j]] = 2.0 * rng.normal();
            x1[[i, j]] = 2.0 * rng.normal();
        }
        let (di, ti) = sample_step_and_time(&mut rng, &steps);
        d[i] = di;
        t[i] = ti;
    }
    let batch = TrainBatch::from_pairs(&schedule, x0, x1, t, d, n_true).unwrap();
    Triple { models, batch, cfg }
}

/// `u1 = c1 + c2·t + c3·t²/2`, `u2 = c2 + c3·t + eps·d`, `u3 = c3`, ignoring `x`.
pub struct PolyField {
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    pub c3: [f64; 2],
    pub eps: f64,
    pub order: Order,
}

impl PolyField {
    /// Exact position at time `t` when `eps = 0`.
    pub fn exact(&self, x0: [f64; 2], t: f64) -> [f64; 2] {
        let f = |k: usize| x0[k] + self.c1[k] * t + self.c2[k] * t * t / 2.0 + self.c3[k] * t * t * t / 6.0;
        [f(0), f(1)]
    }
}

fn fill(n: usize, f: impl Fn(usize, usize) -> f64) -> Array2<f64> {
    Array2::from_shape_fn((n, 2), |(i, j)| f(i, j))
}

impl FieldSet for PolyField {
    fn order(&self) -> Order {
        self.order
    }
    fn velocity(&self, x: ArrayView2<f64>, t: ArrayView1<f64>, _d: ArrayView1<f64>) -> Result<Array2<f64>> {
        Ok(fill(x.nrows(), |i, k| self.c1[k] + self.c2[k] * t[i] + self.c3[k] * t[i] * t[i] / 2.0))
    }
    fn acceleration(
        &self,
        v: ArrayView2<f64>,
        _x: ArrayView2<f64>,
        t: ArrayView1<f64>,
        d: ArrayView1<f64>,
    ) -> Result<Array2<f64>> {
        Ok(fill(v.nrows(), |i, k| self.c2[k] + self.c3[k] * t[i] + self.eps * d[i]))
    }
    fn jerk(
        &self,
        a: ArrayView2<f64>,
        _v: ArrayView2<f64>,
        _x: ArrayView2<f64>,
        _t: ArrayView1<f64>,
        _d: ArrayView1<f64>,
    ) -> Result<Array2<f64>> {
        Ok(fill(a.nrows(), |_, k| self.c3[k]))
    }
}

/// Brute-force symmetric mean nearest-neighbour distance.
pub fn brute_force_distance(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let one_way = |from: &[[f64; 2]], to: &[[f64; 2]]| {
        let mut total = 0.0;
        for p in from {
            let mut best = f64::INFINITY;
            for q in to {
                let dist = ((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1])).sqrt();
                if dist < best {
                    best = dist;
                }
            }
            total += best;
        }
        total / from.len() as f64
    };
    0.5 * (one_way(a, b) + one_way(b, a))
}

/// Independent SplitMix-style generator matching the documented stream.
pub struct RefRng {
    key: u64,
    counter: u64,
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn ref_mix(z: u64) -> u64 {
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RefRng {
    pub fn new(seed: u64) -> Self {
        Self { key: ref_mix(seed), counter: 0 }
    }
    pub fn split(&self, label: u64) -> Self {
        Self {
            key: ref_mix(self.key ^ ref_mix(label.wrapping_add(GAMMA))),
            counter: 0,
        }
    }
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        ref_mix(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / 9_007_199_254_740_992.0
    }
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        (r * th.cos(), r * th.sin())
    }
}
