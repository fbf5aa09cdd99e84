//! One complete run: train, sample from a fresh source cloud, score against a
//! fresh target cloud.

use crate::config::TrainRun;
use crate::datasets::{sample_dataset, CloudLabel, PointCloud};
use crate::error::{Error, Result};
use crate::fields::{matrix_to_points, points_to_matrix, FieldModels};
use crate::metrics::{euclidean_distance_loss, MetricReport};
use crate::sample::{sample_batch, SamplerConfig};
use crate::train::{train_outcome, LossRecord, RunStreams};

pub struct RunResult {
    pub models: FieldModels,
    pub history: Vec<LossRecord>,
    /// Training clouds.
    pub source: PointCloud,
    pub target: PointCloud,
    /// Evaluation clouds and samples (absent after a numeric failure).
    pub eval_source: PointCloud,
    pub eval_target: PointCloud,
    pub generated: Option<PointCloud>,
    pub report: Option<MetricReport>,
    pub failure: Option<Error>,
}

/// Pushes every point of `source` through the sampler.
pub fn generate(models: &FieldModels, cfg: &SamplerConfig, source: &PointCloud) -> Result<PointCloud> {
    let fields = models.truncated(cfg.order);
    let states = sample_batch(&fields, cfg, points_to_matrix(&source.points).view(), false)?;
    let last = states.last().expect("sampler returns the final state");
    PointCloud::new(matrix_to_points(last.view()), CloudLabel::Generated)
}

pub fn execute(run: &TrainRun) -> Result<RunResult> {
    let outcome = train_outcome(run)?;
    let spec = run.dataset.resolve()?;
    let (eval_source, eval_target) = sample_dataset(&spec, &RunStreams::new(run.seed).eval)?;
    let mut result = RunResult {
        models: outcome.models,
        history: outcome.history,
        source: outcome.source,
        target: outcome.target,
        eval_source,
        eval_target,
        generated: None,
        report: None,
        failure: outcome.failure,
    };
    if result.failure.is_some() {
        return Ok(result);
    }
    let cfg = run.sampler_config();
    let generated = match generate(&result.models, &cfg, &result.eval_source) {
        Ok(g) => g,
        Err(e @ Error::InvalidDataset(_)) => {
            // Non-finite samples.
            result.failure = Some(e);
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    let distance = euclidean_distance_loss(&generated, &result.eval_target)?;
    result.report = Some(MetricReport::new(
        &run.dataset.label(),
        &run.loss.terms,
        &run.architecture,
        run.optimizer.batch_size,
        run.seed,
        distance,
    ));
    result.generated = Some(generated);
    Ok(result)
}
