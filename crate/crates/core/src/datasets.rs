//! Seeded 2-D source/target generators.
//!
//! Every generator draws the source cloud from `rng.split(0)` and the target
//! cloud from `rng.split(1)`, so either side can be regenerated alone.
//!
//! Parameterizations (noise standard deviation `σ = √variance`):
//!
//! * `gaussian_modes`: `mode_count` centers at angles `2πi/k` on circles of
//!   `source_radius` / `target_radius`; each point is `center + σ·(z0, z1)`
//!   with one Box–Muller pair per point, modes generated in index order.
//! * `circle`: ring points `(R + σz)(cos θ, sin θ)`, `θ = 2πu`; source radius
//!   `source_radius`, target radius `target_radius`.
//! * `irregular_ring`: source ring as above, target radius
//!   `R(θ) = target_radius·(1 + ring_amplitude·sin(ring_lobes·θ))`.
//! * `spiral`, `spin`, `round_spin`: source ring; target Archimedean spiral
//!   `r(θ) = spiral_inner_radius + spiral_growth/(2π·rounds)·θ`,
//!   `θ = 2π·rounds·u`, plus isotropic noise `σ·(z0, z1)`.
//! * `dot_circle`: source is `dot_points` samples of `N(0, variance·I)` then
//!   `total_points − dot_points` ring points at `source_radius`; target is a
//!   spiral with `rounds` turns.
//!
//! For ring kinds a point consumes one uniform (θ) then one Box–Muller pair
//! of which only the cosine branch is used.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossTerms;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudLabel {
    Source,
    Target,
    Generated,
}

impl fmt::Display for CloudLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CloudLabel::Source => "source",
            CloudLabel::Target => "target",
            CloudLabel::Generated => "generated",
        })
    }
}

impl FromStr for CloudLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(CloudLabel::Source),
            "target" => Ok(CloudLabel::Target),
            "generated" => Ok(CloudLabel::Generated),
            other => Err(Error::InvalidDataset(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 2]>,
    pub label: CloudLabel,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 2]>, label: CloudLabel) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidDataset("non-finite coordinate".into()));
        }
        Ok(Self { points, label })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with header `x,y,label` and 17 significant digits per float.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,label")?;
        for p in &self.points {
            writeln!(w, "{:.16e},{:.16e},{}", p[0], p[1], self.label)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses the CSV format written by [`PointCloud::write_csv`]. All rows
    /// must share one label.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "x,y,label" => {}
            other => {
                return Err(Error::InvalidDataset(format!(
                    "expected header `x,y,label`, found {other:?}"
                )))
            }
        }
        let mut points = Vec::new();
        let mut label = None;
        for (i, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(Error::InvalidDataset(format!("row {}: expected 3 columns", i + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidDataset(format!("row {}: {e}", i + 1)))
            };
            points.push([parse(cols[0])?, parse(cols[1])?]);
            let l: CloudLabel = cols[2].parse()?;
            match label {
                None => label = Some(l),
                Some(prev) if prev != l => {
                    return Err(Error::InvalidDataset(format!("row {}: mixed labels", i + 1)))
                }
                _ => {}
            }
        }
        PointCloud::new(points, label.unwrap_or(CloudLabel::Generated))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    GaussianModes,
    Circle,
    IrregularRing,
    Spiral,
    Spin,
    RoundSpin,
    DotCircle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub mode_count: usize,
    pub source_radius: f64,
    pub target_radius: f64,
    /// Per-coordinate variance of the Gaussian noise.
    pub variance: f64,
    /// Points per mode (`gaussian_modes` only).
    pub points_per_mode: usize,
    /// Points per cloud for every other kind.
    pub total_points: usize,
    pub rounds: usize,
    pub ring_amplitude: f64,
    pub ring_lobes: f64,
    pub spiral_inner_radius: f64,
    pub spiral_growth: f64,
    pub dot_points: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::gaussian_modes(8, 6.0, 13.0, 100)
    }
}

impl DatasetSpec {
    fn base(kind: DatasetKind) -> Self {
        Self {
            kind,
            mode_count: 8,
            source_radius: 5.0,
            target_radius: 12.0,
            variance: 0.3,
            points_per_mode: 100,
            total_points: 600,
            rounds: 1,
            ring_amplitude: 0.25,
            ring_lobes: 3.0,
            spiral_inner_radius: 1.0,
            spiral_growth: 11.0,
            dot_points: 300,
        }
    }

    pub fn gaussian_modes(modes: usize, source_radius: f64, target_radius: f64, per_mode: usize) -> Self {
        Self {
            mode_count: modes,
            source_radius,
            target_radius,
            points_per_mode: per_mode,
            ..Self::base(DatasetKind::GaussianModes)
        }
    }

    pub fn circle(points: usize) -> Self {
        Self {
            total_points: points,
            ..Self::base(DatasetKind::Circle)
        }
    }

    pub fn irregular_ring(points: usize) -> Self {
        Self {
            target_radius: 10.0,
            total_points: points,
            ..Self::base(DatasetKind::IrregularRing)
        }
    }

    pub fn spiral(points: usize) -> Self {
        Self {
            total_points: points,
            ..Self::base(DatasetKind::Spiral)
        }
    }

    pub fn spin(points: usize) -> Self {
        Self {
            total_points: points,
            ..Self::base(DatasetKind::Spin)
        }
    }

    pub fn round_spin(rounds: usize, points: usize) -> Self {
        Self {
            rounds,
            total_points: points,
            ..Self::base(DatasetKind::RoundSpin)
        }
    }

    pub fn dot_circle(dot_points: usize, ring_points: usize, target_points: usize) -> Self {
        // Source and target share `total_points`; uneven splits are not modeled.
        debug_assert_eq!(dot_points + ring_points, target_points);
        Self {
            source_radius: 10.0,
            rounds: 2,
            dot_points,
            total_points: target_points,
            ..Self::base(DatasetKind::DotCircle)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDataset(m));
        if !(self.variance > 0.0) || !self.variance.is_finite() {
            return bad(format!("variance must be > 0, got {}", self.variance));
        }
        if self.source_radius < 0.0 || self.target_radius < 0.0 {
            return bad("radii must be non-negative".into());
        }
        match self.kind {
            DatasetKind::GaussianModes => {
                if self.mode_count == 0 || self.points_per_mode == 0 {
                    return bad("mode_count and points_per_mode must be > 0".into());
                }
            }
            _ => {
                if self.total_points == 0 {
                    return bad("total_points must be > 0".into());
                }
            }
        }
        if matches!(self.kind, DatasetKind::Spiral | DatasetKind::Spin | DatasetKind::RoundSpin | DatasetKind::DotCircle)
            && self.rounds == 0
        {
            return bad("rounds must be > 0".into());
        }
        if self.kind == DatasetKind::DotCircle && (self.dot_points == 0 || self.dot_points >= self.total_points) {
            return bad("dot_points must be in (0, total_points)".into());
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }
}

fn ring_point(rng: &mut SeededRng, radius_at: impl Fn(f64) -> f64, sigma: f64) -> [f64; 2] {
    let theta = 2.0 * PI * rng.uniform();
    let r = radius_at(theta) + sigma * rng.normal();
    [r * theta.cos(), r * theta.sin()]
}

fn spiral_point(rng: &mut SeededRng, spec: &DatasetSpec) -> [f64; 2] {
    let turns = 2.0 * PI * spec.rounds as f64;
    let theta = turns * rng.uniform();
    let r = spec.spiral_inner_radius + spec.spiral_growth / turns * theta;
    let (z0, z1) = rng.normal_pair();
    let s = spec.sigma();
    [r * theta.cos() + s * z0, r * theta.sin() + s * z1]
}

fn gaussian_modes(rng: &mut SeededRng, spec: &DatasetSpec, radius: f64) -> Vec<[f64; 2]> {
    let k = spec.mode_count;
    let s = spec.sigma();
    let mut pts = Vec::with_capacity(k * spec.points_per_mode);
    for i in 0..k {
        let angle = 2.0 * PI * i as f64 / k as f64;
        let (cx, cy) = (radius * angle.cos(), radius * angle.sin());
        for _ in 0..spec.points_per_mode {
            let (z0, z1) = rng.normal_pair();
            pts.push([cx + s * z0, cy + s * z1]);
        }
    }
    pts
}

fn source_points(rng: &mut SeededRng, spec: &DatasetSpec) -> Vec<[f64; 2]> {
    let s = spec.sigma();
    let n = spec.total_points;
    match spec.kind {
        DatasetKind::GaussianModes => gaussian_modes(rng, spec, spec.source_radius),
        DatasetKind::DotCircle => {
            let mut pts = Vec::with_capacity(n);
            for _ in 0..spec.dot_points {
                let (z0, z1) = rng.normal_pair();
                pts.push([s * z0, s * z1]);
            }
            for _ in spec.dot_points..n {
                pts.push(ring_point(rng, |_| spec.source_radius, s));
            }
            pts
        }
        _ => (0..n).map(|_| ring_point(rng, |_| spec.source_radius, s)).collect(),
    }
}

fn target_points(rng: &mut SeededRng, spec: &DatasetSpec) -> Vec<[f64; 2]> {
    let s = spec.sigma();
    let n = spec.total_points;
    match spec.kind {
        DatasetKind::GaussianModes => gaussian_modes(rng, spec, spec.target_radius),
        DatasetKind::Circle => (0..n).map(|_| ring_point(rng, |_| spec.target_radius, s)).collect(),
        DatasetKind::IrregularRing => (0..n)
            .map(|_| {
                ring_point(
                    rng,
                    |th| spec.target_radius * (1.0 + spec.ring_amplitude * (spec.ring_lobes * th).sin()),
                    s,
                )
            })
            .collect(),
        DatasetKind::Spiral | DatasetKind::Spin | DatasetKind::RoundSpin | DatasetKind::DotCircle => {
            (0..n).map(|_| spiral_point(rng, spec)).collect()
        }
    }
}

/// Draws `(source, target)` clouds for `spec`.
pub fn sample_dataset(spec: &DatasetSpec, rng: &SeededRng) -> Result<(PointCloud, PointCloud)> {
    spec.validate()?;
    let src = source_points(&mut rng.split(0), spec);
    let tgt = target_points(&mut rng.split(1), spec);
    Ok((
        PointCloud::new(src, CloudLabel::Source)?,
        PointCloud::new(tgt, CloudLabel::Target)?,
    ))
}

/// A named dataset with its training settings and loss-config grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: &'static str,
    pub dataset: DatasetSpec,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub loss_configs: Vec<LossTerms>,
}

fn terms(labels: &[&str]) -> Vec<LossTerms> {
    labels.iter().map(|l| l.parse().expect("static label")).collect()
}

const GAUSSIAN_GRID: [&str; 7] = ["M1", "M2", "SC", "M1+M2", "M2+SC", "M1+SC", "M1+M2+SC"];
const COMPLEX_GRID: [&str; 4] = ["M1+M2", "M1+SC", "M2+SC", "M1+M2+SC"];
const THIRD_ORDER_GRID: [&str; 4] = ["SC", "M1+SC", "M1+M2+SC", "M1+M2+M3+SC"];

pub fn list_experiments() -> Vec<Experiment> {
    let exp = |name, dataset, batch_size, steps, grid: &[&str]| Experiment {
        name,
        dataset,
        batch_size,
        learning_rate: 0.005,
        steps,
        loss_configs: terms(grid),
    };
    vec![
        exp("four_mode", DatasetSpec::gaussian_modes(4, 5.0, 14.0, 200), 800, 1000, &GAUSSIAN_GRID),
        exp("five_mode", DatasetSpec::gaussian_modes(5, 6.0, 13.0, 200), 1000, 1000, &GAUSSIAN_GRID),
        exp("eight_mode", DatasetSpec::gaussian_modes(8, 6.0, 13.0, 100), 1600, 1000, &GAUSSIAN_GRID),
        exp("circle", DatasetSpec::circle(400), 800, 1000, &COMPLEX_GRID),
        exp("irregular_ring", DatasetSpec::irregular_ring(600), 1000, 1000, &COMPLEX_GRID),
        exp("spiral", DatasetSpec::spiral(300), 1600, 1000, &COMPLEX_GRID),
        exp("spin", DatasetSpec::spin(600), 1600, 1000, &COMPLEX_GRID),
        exp("two_round_spin", DatasetSpec::round_spin(2, 400), 800, 1000, &THIRD_ORDER_GRID),
        exp("three_round_spin", DatasetSpec::round_spin(3, 400), 1000, 2000, &THIRD_ORDER_GRID),
        exp("dot_circle", DatasetSpec::dot_circle(300, 300, 600), 1600, 10_000, &THIRD_ORDER_GRID),
    ]
}

pub fn experiment(name: &str) -> Result<Experiment> {
    list_experiments()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownDataset(name.to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_mode_counts_and_mode_means() {
        let spec = DatasetSpec::gaussian_modes(8, 6.0, 13.0, 100);
        let (src, tgt) = sample_dataset(&spec, &SeededRng::new(0)).unwrap();
        assert_eq!((src.len(), tgt.len()), (800, 800));
        let bound = 3.0 * (0.3f64 / 100.0).sqrt();
        for (cloud, r) in [(&src, 6.0), (&tgt, 13.0)] {
            for (i, chunk) in cloud.points.chunks(100).enumerate() {
                let a = 2.0 * PI * i as f64 / 8.0;
                let mx = chunk.iter().map(|p| p[0]).sum::<f64>() / 100.0;
                let my = chunk.iter().map(|p| p[1]).sum::<f64>() / 100.0;
                assert!((mx - r * a.cos()).abs() < bound, "mode {i} x mean {mx}");
                assert!((my - r * a.sin()).abs() < bound, "mode {i} y mean {my}");
            }
        }
    }

    #[test]
    fn vanishing_variance_collapses_to_centers() {
        let mut spec = DatasetSpec::gaussian_modes(4, 5.0, 14.0, 10);
        spec.variance = 1e-12;
        let (src, _) = sample_dataset(&spec, &SeededRng::new(1)).unwrap();
        for (i, chunk) in src.points.chunks(10).enumerate() {
            let a = 2.0 * PI * i as f64 / 4.0;
            for p in chunk {
                assert!((p[0] - 5.0 * a.cos()).abs() < 1e-4);
                assert!((p[1] - 5.0 * a.sin()).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn same_seed_same_clouds() {
        for e in list_experiments() {
            let a = sample_dataset(&e.dataset, &SeededRng::new(17)).unwrap();
            let b = sample_dataset(&e.dataset, &SeededRng::new(17)).unwrap();
            assert_eq!(a, b, "{}", e.name);
        }
    }

    fn noiseless(mut spec: DatasetSpec) -> (PointCloud, PointCloud, DatasetSpec) {
        spec.variance = 1e-18;
        let (s, t) = sample_dataset(&spec, &SeededRng::new(5)).unwrap();
        (s, t, spec)
    }

    #[test]
    fn ring_points_lie_on_rings() {
        let (s, t, _) = noiseless(DatasetSpec::circle(200));
        assert!(s.points.iter().all(|p| (p[0].hypot(p[1]) - 5.0).abs() < 1e-6));
        assert!(t.points.iter().all(|p| (p[0].hypot(p[1]) - 12.0).abs() < 1e-6));
    }

    #[test]
    fn irregular_ring_follows_radius_profile() {
        let (_, t, spec) = noiseless(DatasetSpec::irregular_ring(200));
        for p in &t.points {
            let th = p[1].atan2(p[0]);
            let r = spec.target_radius * (1.0 + 0.25 * (3.0 * th).sin());
            assert!((p[0].hypot(p[1]) - r).abs() < 1e-6);
        }
    }

    #[test]
    fn spiral_points_lie_on_archimedean_curve() {
        for spec in [DatasetSpec::spiral(300), DatasetSpec::round_spin(2, 300), DatasetSpec::round_spin(3, 300)] {
            let (_, t, spec) = noiseless(spec);
            let turns = 2.0 * PI * spec.rounds as f64;
            for p in &t.points {
                let r = p[0].hypot(p[1]);
                // Recover θ from r, then check the angle matches modulo 2π.
                let theta = (r - spec.spiral_inner_radius) * turns / spec.spiral_growth;
                assert!((-1e-9..=turns + 1e-9).contains(&theta));
                let d = (theta.cos() - p[0] / r).hypot(theta.sin() - p[1] / r);
                assert!(d < 1e-6);
            }
        }
    }

    #[test]
    fn dot_circle_split() {
        let (s, t, _) = noiseless(DatasetSpec::dot_circle(300, 300, 600));
        assert_eq!((s.len(), t.len()), (600, 600));
        assert!(s.points[..300].iter().all(|p| p[0].hypot(p[1]) < 1e-6));
        assert!(s.points[300..].iter().all(|p| (p[0].hypot(p[1]) - 10.0).abs() < 1e-6));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = DatasetSpec::default();
        spec.variance = 0.0;
        assert!(sample_dataset(&spec, &SeededRng::new(0)).is_err());
        let mut spec = DatasetSpec::default();
        spec.points_per_mode = 0;
        assert!(spec.validate().is_err());
        assert!(serde_json::from_str::<DatasetSpec>(r#"{"kind":"torus"}"#).is_err());
    }

    #[test]
    fn experiment_table() {
        let e = experiment("eight_mode").unwrap();
        assert_eq!((e.batch_size, e.learning_rate, e.steps), (1600, 0.005, 1000));
        assert_eq!((e.dataset.mode_count, e.dataset.points_per_mode), (8, 100));
        assert_eq!((e.dataset.source_radius, e.dataset.target_radius), (6.0, 13.0));

        let e = experiment("five_mode").unwrap();
        assert_eq!((e.dataset.source_radius, e.dataset.target_radius), (6.0, 13.0));
        assert_eq!((e.dataset.points_per_mode, e.batch_size), (200, 1000));

        let e = experiment("dot_circle").unwrap();
        let (s, t) = sample_dataset(&e.dataset, &SeededRng::new(0)).unwrap();
        assert_eq!((e.dataset.dot_points, s.len() - e.dataset.dot_points, t.len()), (300, 300, 600));
        assert_eq!(e.dataset.rounds, 2);

        assert_eq!(list_experiments().len(), 10);
        assert!(experiment("nope").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let (src, _) = sample_dataset(&DatasetSpec::gaussian_modes(2, 1.0, 2.0, 3), &SeededRng::new(2)).unwrap();
        let text = src.to_csv_string();
        assert!(text.starts_with("x,y,label\n"));
        assert_eq!(PointCloud::from_csv_str(&text).unwrap(), src);
    }
}
