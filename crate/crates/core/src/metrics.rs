//! Distribution-matching metric, parameter and FLOP accounting, report tables.

use serde::{Deserialize, Serialize};

use crate::datasets::PointCloud;
use crate::error::{Error, Result};
use crate::fields::{Architecture, Order};
use crate::losses::LossTerms;

fn mean_nearest(from: &[[f64; 2]], to: &[[f64; 2]]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|p| {
            to.iter()
                .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / from.len() as f64
}

/// Symmetric mean nearest-neighbor distance (exact, brute force).
pub fn euclidean_distance_loss(generated: &PointCloud, target: &PointCloud) -> Result<f64> {
    euclidean_distance_points(&generated.points, &target.points)
}

pub fn euclidean_distance_points(generated: &[[f64; 2]], target: &[[f64; 2]]) -> Result<f64> {
    if generated.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(0.5 * (mean_nearest(generated, target) + mean_nearest(target, generated)))
}

/// Trainable parameters of the networks `terms` needs.
pub fn count_params(terms: &LossTerms, arch: &Architecture) -> usize {
    arch.param_count(terms.model_order(), terms.sc)
}

/// `2 · fan_in · fan_out` summed over the affine layers of one forward pass.
pub fn affine_flops(layer_sizes: &[usize]) -> u64 {
    layer_sizes.windows(2).map(|w| 2 * (w[0] * w[1]) as u64).sum()
}

/// Rough forward-pass FLOPs of one training step.
///
/// Every element is charged the matching chain (u1, then u2, u3 as far as
/// the enabled terms reach) when any matching term is on, and the
/// self-consistency chain (u1 and higher fields for the inner Taylor step,
/// u1 at `t + d`, u1 at step `2d`) when SC is on. Backward passes are not
/// counted.
pub fn estimate_flops(terms: &LossTerms, arch: &Architecture, batch: usize) -> u64 {
    let sc = terms.sc;
    let f = |k: usize| affine_flops(&arch.layer_sizes(k, sc));
    let mut per_element = 0;
    if terms.any_matching() {
        let reach = if terms.m3 {
            3
        } else if terms.m2 {
            2
        } else {
            1
        };
        per_element += (1..=reach).map(f).sum::<u64>();
    }
    if sc {
        let order = terms.model_order();
        per_element += (1..=order.as_int()).map(f).sum::<u64>() + 2 * f(1);
    }
    per_element * batch as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub loss_config: String,
    pub euclidean_distance: f64,
    pub seed: u64,
    pub param_count: usize,
    pub flop_estimate: u64,
}

impl MetricReport {
    pub fn new(dataset: &str, terms: &LossTerms, arch: &Architecture, batch: usize, seed: u64, distance: f64) -> Self {
        Self {
            dataset: dataset.to_owned(),
            loss_config: terms.to_string(),
            euclidean_distance: distance,
            seed,
            param_count: count_params(terms, arch),
            flop_estimate: estimate_flops(terms, arch, batch),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Median distance of one (dataset, loss config) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub dataset: String,
    pub loss_config: String,
    pub median: f64,
    pub per_seed: Vec<(u64, f64)>,
}

/// Groups reports by (dataset, loss config), keeping first-seen order.
pub fn summarize(reports: &[MetricReport]) -> Vec<CellSummary> {
    let mut out: Vec<CellSummary> = Vec::new();
    for r in reports {
        let pos = out
            .iter()
            .position(|c| c.dataset == r.dataset && c.loss_config == r.loss_config);
        let cell = match pos {
            Some(i) => &mut out[i],
            None => {
                out.push(CellSummary {
                    dataset: r.dataset.clone(),
                    loss_config: r.loss_config.clone(),
                    median: 0.0,
                    per_seed: Vec::new(),
                });
                out.last_mut().expect("just pushed")
            }
        };
        cell.per_seed.push((r.seed, r.euclidean_distance));
    }
    for c in &mut out {
        let vals: Vec<f64> = c.per_seed.iter().map(|p| p.1).collect();
        c.median = median(&vals).unwrap_or(f64::NAN);
    }
    out
}

/// Fixed four decimals, scientific notation for very large values.
pub fn format_value(v: f64) -> String {
    if v.is_finite() && v.abs() >= 1e5 {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

/// Loss configs as rows, datasets as columns, medians in the cells.
pub fn render_table(summaries: &[CellSummary]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut configs: Vec<&str> = Vec::new();
    for c in summaries {
        if !datasets.contains(&c.dataset.as_str()) {
            datasets.push(&c.dataset);
        }
        if !configs.contains(&c.loss_config.as_str()) {
            configs.push(&c.loss_config);
        }
    }
    let first = configs.iter().map(|c| c.len()).chain([11]).max().unwrap_or(11);
    let widths: Vec<usize> = datasets.iter().map(|d| d.len().max(10)).collect();
    let mut s = format!("{:<first$}", "Loss config");
    for (d, w) in datasets.iter().zip(&widths) {
        s.push_str(&format!("  {d:>w$}"));
    }
    s.push('\n');
    s.push_str(&"-".repeat(first + widths.iter().map(|w| w + 2).sum::<usize>()));
    s.push('\n');
    for cfg in &configs {
        s.push_str(&format!("{cfg:<first$}"));
        for (d, w) in datasets.iter().zip(&widths) {
            let cell = summaries
                .iter()
                .find(|c| c.dataset == *d && c.loss_config == *cfg)
                .map_or_else(|| "-".to_owned(), |c| format_value(c.median));
            s.push_str(&format!("  {cell:>w$}"));
        }
        s.push('\n');
    }
    s
}

/// Whether M1+M2+SC has the lowest median among SC, M1+SC and M1+M2+SC for
/// `dataset`. `None` if any of the three is missing.
pub fn second_order_ranks_best(summaries: &[CellSummary], dataset: &str) -> Option<bool> {
    let get = |label: &str| {
        summaries
            .iter()
            .find(|c| c.dataset == dataset && c.loss_config == label)
            .map(|c| c.median)
    };
    let best = get("M1+M2+SC")?;
    let sc = get("SC")?;
    let m1sc = get("M1+SC")?;
    Some(best < sc && best < m1sc)
}

/// Highest order any config in `summaries` trains.
pub fn max_order(summaries: &[CellSummary]) -> Order {
    summaries
        .iter()
        .filter_map(|c| c.loss_config.parse::<LossTerms>().ok())
        .map(|t| t.model_order())
        .max()
        .unwrap_or(Order::First)
}
