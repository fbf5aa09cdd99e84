//! Command-line front end: `train`, `sample`, `eval`, `reproduce`,
//! `count-params`, `print-config`.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numeric failure,
//! 1 anything else (I/O).

pub mod reference;
pub mod svg;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::TrainRun;
use crate::datasets::{experiment, sample_dataset, CloudLabel, PointCloud};
use crate::error::{Error, Result};
use crate::fields::{matrix_to_points, points_to_matrix, Architecture, FieldModels, Order};
use crate::losses::LossTerms;
use crate::metrics::{
    count_params, estimate_flops, euclidean_distance_loss, format_value, render_table, second_order_ranks_best,
    summarize, CellSummary, MetricReport,
};
use crate::nn::Checkpoint;
use crate::pipeline::{execute, RunResult};
use crate::sample::{sample_batch, write_trajectory_csv, SamplerConfig};
use crate::train::{write_loss_csv, RunStreams};

#[derive(Debug, Parser)]
#[command(name = "homoflow", version, about = "High-order shortcut flow matching on 2-D point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one run, or every cell of a sweep, and write its artifacts.
    Train(TrainArgs),
    /// Push source points through a trained model.
    Sample(SampleArgs),
    /// Distance between a generated and a target point-cloud CSV.
    Eval(EvalArgs),
    /// Run a comparison grid (t1, t2 or t3) and print the median table.
    Reproduce(ReproduceArgs),
    /// Parameter and FLOP counts per loss config.
    CountParams(CountParamsArgs),
    /// Print a complete run config with every default filled in.
    PrintConfig(PrintConfigArgs),
}

fn parse_order(s: &str) -> std::result::Result<Order, String> {
    let k: u8 = s.parse().map_err(|_| format!("`{s}` is not 1, 2 or 3"))?;
    Order::from_int(k).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from a named experiment's stock settings instead of a file.
    #[arg(long, conflicts_with = "config")]
    pub experiment: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: `out_dir` from the config, else runs/<name>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Sampler order used for evaluation.
    #[arg(long, value_parser = parse_order)]
    pub order: Option<Order>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// model.json written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Source points CSV (`x,y,label`).
    #[arg(long, conflicts_with = "dataset")]
    pub source: Option<PathBuf>,
    /// Draw source points from a named dataset instead.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sampler steps M.
    #[arg(long, default_value_t = 16)]
    pub steps: usize,
    #[arg(long, value_parser = parse_order)]
    pub order: Option<Order>,
    #[arg(long, default_value = "generated.csv")]
    pub out: PathBuf,
    /// Also write every intermediate state.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// t1 (Gaussian mixtures), t2 (complex shapes) or t3 (third order).
    #[arg(value_parser = ["t1", "t2", "t3"])]
    pub table: String,
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Override every experiment's training steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only these datasets of the table.
    #[arg(long, value_delimiter = ',')]
    pub datasets: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct CountParamsArgs {
    /// Loss configs, e.g. `M1+M2+SC` (repeatable).
    #[arg(long)]
    pub loss: Vec<LossTerms>,
    #[arg(long, value_delimiter = ',', default_value = "100,100")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct PrintConfigArgs {
    #[arg(long, default_value = "eight_mode")]
    pub experiment: String,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. }
        | Error::UnknownDataset(_)
        | Error::InvalidDataset(_)
        | Error::InvalidLossConfig(_)
        | Error::InvalidArchitecture(_)
        | Error::EmptySubBatch { .. }
        | Error::EmptyCloud
        | Error::BadOrder(_)
        | Error::Checkpoint(_)
        | Error::Json(_) => 2,
        Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. } | Error::NonFiniteParameter { .. } => 3,
        _ => 1,
    }
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Sample(a) => cmd_sample(&a).map(|_| 0),
        Command::Eval(a) => cmd_eval(&a).map(|_| 0),
        Command::Reproduce(a) => cmd_reproduce(&a).map(|_| 0),
        Command::CountParams(a) => cmd_count_params(&a).map(|_| 0),
        Command::PrintConfig(a) => {
            print!("{}", TrainRun::for_experiment(&a.experiment)?.to_json()?);
            Ok(0)
        }
    }
}

/// Worker pool for sweep cells: `HOMOFLOW_THREADS` if set, else CPU count.
pub fn worker_pool() -> rayon::ThreadPool {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let n = std::env::var("HOMOFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(cpus);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("thread pool")
}

fn read_config(path: &Path) -> Result<TrainRun> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    TrainRun::from_json(&text)
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// What one cell produced, as kept for aggregation.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub dir: PathBuf,
    pub dataset: String,
    pub loss_config: LossTerms,
    pub seed: u64,
    pub report: Option<MetricReport>,
    pub failure: Option<String>,
}

impl CellOutcome {
    /// Distance used for aggregation; failed cells count as +inf.
    pub fn distance(&self) -> f64 {
        self.report.as_ref().map_or(f64::INFINITY, |r| r.euclidean_distance)
    }
}

#[derive(Serialize)]
struct FailureRecord<'a> {
    error: String,
    completed_steps: usize,
    loss_config: &'a str,
    seed: u64,
}

/// Writes every artifact of a finished run into `dir`.
///
/// `model.json`, `loss.csv`, `config.json` and `scatter.svg` are always
/// written; `generated.csv` and `metrics.json` on success, `failure.json`
/// after a numeric failure. `run.log` holds the only timestamps.
pub fn write_artifacts(dir: &Path, run: &TrainRun, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), run.to_json()?)?;
    let ck = result.models.to_checkpoint(run.seed, result.history.len() as u64);
    fs::write(dir.join("model.json"), ck.to_json()?)?;
    write_loss_csv(BufWriter::new(fs::File::create(dir.join("loss.csv"))?), &result.history)?;
    let mut clouds = vec![&result.eval_source, &result.eval_target];
    if let Some(g) = &result.generated {
        g.write_csv(BufWriter::new(fs::File::create(dir.join("generated.csv"))?))?;
        clouds.push(g);
    }
    svg::emit_scatter_svg(&clouds, &dir.join("scatter.svg"))?;
    if let Some(r) = &result.report {
        fs::write(dir.join("metrics.json"), r.to_json()?)?;
    }
    if let Some(e) = &result.failure {
        let label = run.loss.terms.to_string();
        let rec = FailureRecord {
            error: e.to_string(),
            completed_steps: result.history.len(),
            loss_config: &label,
            seed: run.seed,
        };
        let mut s = serde_json::to_string_pretty(&rec)?;
        s.push('\n');
        fs::write(dir.join("failure.json"), s)?;
    }
    Ok(())
}

/// Trains, samples, scores and writes one cell.
pub fn run_cell(run: &TrainRun, dir: &Path) -> Result<CellOutcome> {
    let started = unix_seconds();
    let clock = Instant::now();
    let result = execute(run)?;
    write_artifacts(dir, run, &result)?;
    let log = format!(
        "started_unix {started:.3}\nfinished_unix {:.3}\nelapsed_s {:.3}\n",
        unix_seconds(),
        clock.elapsed().as_secs_f64()
    );
    fs::write(dir.join("run.log"), log)?;
    Ok(CellOutcome {
        dir: dir.to_owned(),
        dataset: run.dataset.label(),
        loss_config: run.loss.terms,
        seed: run.seed,
        report: result.report,
        failure: result.failure.map(|e| e.to_string()),
    })
}

/// Runs cells on the worker pool; results come back in input order.
pub fn run_cells(cells: &[(TrainRun, PathBuf)]) -> Result<Vec<CellOutcome>> {
    worker_pool().install(|| {
        cells
            .par_iter()
            .map(|(run, dir)| {
                let out = run_cell(run, dir)?;
                let status = match (&out.report, &out.failure) {
                    (Some(r), _) => format_value(r.euclidean_distance),
                    (None, Some(f)) => format!("failed: {f}"),
                    (None, None) => "no report".into(),
                };
                eprintln!("[{}] {} seed {}: {status}", out.dataset, out.loss_config, out.seed);
                Ok(out)
            })
            .collect()
    })
}

/// Medians per (dataset, loss config); failed cells enter as +inf.
pub fn summarize_cells(cells: &[CellOutcome], arch: &Architecture) -> Vec<CellSummary> {
    let reports: Vec<MetricReport> = cells
        .iter()
        .map(|c| {
            c.report
                .clone()
                .unwrap_or_else(|| MetricReport::new(&c.dataset, &c.loss_config, arch, 1, c.seed, f64::INFINITY))
        })
        .collect();
    summarize(&reports)
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    cells: Vec<CellRecord>,
    medians: &'a [CellSummary],
}

#[derive(Serialize)]
struct CellRecord {
    dataset: String,
    loss_config: String,
    seed: u64,
    euclidean_distance: Option<f64>,
    failure: Option<String>,
}

fn write_summary(dir: &Path, cells: &[CellOutcome], medians: &[CellSummary], table: &str) -> Result<()> {
    let summary = SweepSummary {
        cells: cells
            .iter()
            .map(|c| CellRecord {
                dataset: c.dataset.clone(),
                loss_config: c.loss_config.to_string(),
                seed: c.seed,
                euclidean_distance: c.report.as_ref().map(|r| r.euclidean_distance),
                failure: c.failure.clone(),
            })
            .collect(),
        medians,
    };
    let mut s = serde_json::to_string_pretty(&summary)?;
    s.push('\n');
    fs::write(dir.join("summary.json"), s)?;
    fs::write(dir.join("table.txt"), table)?;
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let mut run = match (&a.config, &a.experiment) {
        (Some(p), _) => read_config(p)?,
        (None, Some(name)) => TrainRun::for_experiment(name)?,
        (None, None) => TrainRun::default(),
    };
    if let Some(seed) = a.seed {
        run.seed = seed;
        if let Some(sw) = run.sweep.as_mut() {
            sw.seeds = vec![seed];
        }
    }
    if let Some(steps) = a.steps {
        run.optimizer.steps = steps;
    }
    if let Some(order) = a.order {
        run.sampler.order = Some(order);
    }
    run.validate()?;
    let out = a
        .out
        .clone()
        .or_else(|| run.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&run.name));

    if run.sweep.is_none() {
        let cell = run_cell(&run, &out)?;
        return Ok(match (&cell.report, &cell.failure) {
            (Some(r), _) => {
                println!("{}", format_value(r.euclidean_distance));
                0
            }
            (None, Some(f)) => {
                eprintln!("numeric failure: {f}");
                3
            }
            (None, None) => 1,
        });
    }

    let cells: Vec<(TrainRun, PathBuf)> = run
        .cells()
        .into_iter()
        .map(|c| {
            let dir = out.join(c.cell_name());
            (c, dir)
        })
        .collect();
    fs::create_dir_all(&out)?;
    let outcomes = run_cells(&cells)?;
    let medians = summarize_cells(&outcomes, &run.architecture);
    let table = render_table(&medians);
    write_summary(&out, &outcomes, &medians, &table)?;
    print!("{table}");
    Ok(if outcomes.iter().any(|c| c.failure.is_some()) { 3 } else { 0 })
}

fn read_cloud(path: &Path) -> Result<PointCloud> {
    PointCloud::from_csv_str(&fs::read_to_string(path)?)
}

fn cmd_sample(a: &SampleArgs) -> Result<()> {
    let ck = Checkpoint::from_json(&fs::read_to_string(&a.model)?)?;
    let models = FieldModels::from_checkpoint(&ck)?;
    let order = a.order.unwrap_or_else(|| models.order());
    if order > models.order() {
        return Err(Error::Config {
            path: "--order".into(),
            message: format!("model provides order {} only", models.order().as_int()),
        });
    }
    let source = match (&a.source, &a.dataset) {
        (Some(p), _) => read_cloud(p)?,
        (None, Some(name)) => sample_dataset(&experiment(name)?.dataset, &RunStreams::new(a.seed).eval)?.0,
        (None, None) => {
            return Err(Error::Config {
                path: "--source".into(),
                message: "give --source or --dataset".into(),
            })
        }
    };
    let cfg = SamplerConfig::new(order, a.steps);
    cfg.validate()?;
    let fields = models.truncated(order);
    let states = sample_batch(&fields, &cfg, points_to_matrix(&source.points).view(), a.trajectory.is_some())?;
    let last = states.last().expect("final state");
    let generated = PointCloud::new(matrix_to_points(last.view()), CloudLabel::Generated)?;
    generated.write_csv(BufWriter::new(fs::File::create(&a.out)?))?;
    if let Some(p) = &a.trajectory {
        write_trajectory_csv(BufWriter::new(fs::File::create(p)?), &states)?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let d = euclidean_distance_loss(&read_cloud(&a.generated)?, &read_cloud(&a.target)?)?;
    println!("{d}");
    Ok(())
}

fn cmd_count_params(a: &CountParamsArgs) -> Result<()> {
    let arch = Architecture {
        hidden: a.hidden.clone(),
        ..Architecture::default()
    };
    let labels: Vec<LossTerms> = if a.loss.is_empty() {
        ["M1", "M2", "SC", "M1+M2", "M1+SC", "M2+SC", "M1+M2+SC", "M1+M2+M3+SC"]
            .iter()
            .map(|s| s.parse().expect("static label"))
            .collect()
    } else {
        a.loss.clone()
    };
    println!("{:<14}{:>12}{:>16}", "Loss config", "Params", "FLOPs");
    for t in labels {
        println!(
            "{:<14}{:>12}{:>16}",
            t.to_string(),
            count_params(&t, &arch),
            estimate_flops(&t, &arch, a.batch)
        );
    }
    Ok(())
}

/// Per-dataset ordering report against the reference table.
pub fn ordering_summary(table: &reference::ReferenceTable, medians: &[CellSummary]) -> String {
    let mut s = String::from("Ordering vs reference:\n");
    for ds in table.datasets {
        if !medians.iter().any(|c| c.dataset == *ds) {
            continue;
        }
        let (agree, total) = reference::pairwise_agreement(table, medians, ds);
        s.push_str(&format!(
            "  {ds}: {} | pairwise agreement {agree}/{total}",
            reference::ranking(medians, ds).join(" < ")
        ));
        if let Some(best) = second_order_ranks_best(medians, ds) {
            let verdict = if best { "yes" } else { "no" };
            s.push_str(&format!(" | M1+M2+SC best of SC, M1+SC, M1+M2+SC: {verdict}"));
        }
        s.push('\n');
    }
    s
}

fn cmd_reproduce(a: &ReproduceArgs) -> Result<()> {
    let table = reference::table(&a.table).expect("validated by clap");
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("reproduce_{}", a.table)));
    let datasets: Vec<&str> = match &a.datasets {
        None => table.datasets.to_vec(),
        Some(list) => {
            for d in list {
                if !table.datasets.contains(&d.as_str()) {
                    return Err(Error::Config {
                        path: "--datasets".into(),
                        message: format!("`{d}` is not part of {}", a.table),
                    });
                }
            }
            table.datasets.iter().copied().filter(|d| list.iter().any(|l| l == d)).collect()
        }
    };
    let mut cells = Vec::new();
    for ds in &datasets {
        let base = TrainRun::for_experiment(ds)?;
        for terms in experiment(ds)?.loss_configs {
            for seed in 0..a.seeds {
                let mut run = base.clone();
                run.loss.terms = terms;
                run.seed = seed;
                if let Some(n) = a.steps {
                    run.optimizer.steps = n;
                }
                let dir = out.join(ds).join(run.cell_name());
                cells.push((run, dir));
            }
        }
    }
    fs::create_dir_all(&out)?;
    let outcomes = run_cells(&cells)?;
    let medians = summarize_cells(&outcomes, &Architecture::default());
    let rendered = format!(
        "Median distance over {} seed(s), {}\n\n{}\n{}",
        a.seeds,
        table.title,
        render_table(&medians),
        ordering_summary(table, &medians)
    );
    write_summary(&out, &outcomes, &medians, &rendered)?;
    print!("{rendered}");
    Ok(())
}
