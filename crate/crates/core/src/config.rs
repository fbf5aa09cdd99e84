//! Run configuration (JSON).
//!
//! ```json
//! {
//!   "name": "eight_mode",
//!   "dataset": "eight_mode",            // experiment name or inline DatasetSpec object
//!   "schedule": { "kind": "vp", "a": 19.9, "b": 0.1 },
//!   "loss": { "terms": "M1+M2+SC", "true_target_fraction": 0.75,
//!             "reduction": "sum", "step_depth": 7,
//!             "detach_velocity_input": true },
//!   "optimizer": { "learning_rate": 0.005, "beta1": 0.9, "beta2": 0.999,
//!                  "epsilon": 1e-8, "steps": 1000, "batch_size": 1600 },
//!   "architecture": { "hidden": [100, 100], "activation": "relu" },
//!   "sampler": { "steps": 16, "order": null },
//!   "seed": 0,
//!   "out_dir": null,
//!   "sweep": null                       // or { "seeds": [...], "loss_configs": [...] }
//! }
//! ```
//!
//! Every key is optional; missing keys take the defaults shown.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::datasets::{experiment, DatasetSpec};
use crate::error::{Error, Result};
use crate::fields::{Architecture, Order};
use crate::losses::{LossConfig, LossTerms};
use crate::nn::AdamConfig;
use crate::sample::SamplerConfig;
use crate::trajectory::Schedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    Named(String),
    Inline(DatasetSpec),
}

impl DatasetRef {
    pub fn resolve(&self) -> Result<DatasetSpec> {
        let spec = match self {
            DatasetRef::Named(name) => experiment(name)?.dataset,
            DatasetRef::Inline(spec) => spec.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn label(&self) -> String {
        match self {
            DatasetRef::Named(name) => name.clone(),
            DatasetRef::Inline(spec) => format!("{:?}", spec.kind).to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            steps: 1000,
            batch_size: 1600,
        }
    }
}

impl OptimizerSettings {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub steps: usize,
    /// Defaults to the highest order the trained loss terms provide.
    pub order: Option<Order>,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self { steps: 16, order: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub seeds: Vec<u64>,
    pub loss_configs: Vec<LossTerms>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    pub name: String,
    pub dataset: DatasetRef,
    pub schedule: Schedule,
    pub loss: LossConfig,
    pub optimizer: OptimizerSettings,
    pub architecture: Architecture,
    pub sampler: SamplerSettings,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub sweep: Option<Sweep>,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self::for_experiment("eight_mode").expect("built-in experiment")
    }
}

impl TrainRun {
    /// Stock settings of a named experiment with the default
    /// M1+M2+SC loss.
    pub fn for_experiment(name: &str) -> Result<Self> {
        let exp = experiment(name)?;
        Ok(Self {
            name: name.to_owned(),
            dataset: DatasetRef::Named(name.to_owned()),
            schedule: Schedule::vp_default(),
            loss: LossConfig::default(),
            optimizer: OptimizerSettings {
                learning_rate: exp.learning_rate,
                steps: exp.steps,
                batch_size: exp.batch_size,
                ..OptimizerSettings::default()
            },
            architecture: Architecture::default(),
            sampler: SamplerSettings::default(),
            seed: 0,
            out_dir: None,
            sweep: None,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let run: TrainRun = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        run.validate()?;
        Ok(run)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |path: &str, message: String| Error::Config {
            path: path.into(),
            message,
        };
        self.dataset.resolve().map_err(|e| cfg("dataset", e.to_string()))?;
        self.loss.validate().map_err(|e| cfg("loss", e.to_string()))?;
        if self.optimizer.batch_size == 0 {
            return Err(cfg("optimizer.batch_size", "must be >= 1".into()));
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(cfg("optimizer.learning_rate", "must be > 0".into()));
        }
        if self.sampler.steps == 0 {
            return Err(cfg("sampler.steps", "must be >= 1".into()));
        }
        if let Some(order) = self.sampler.order {
            if order > self.loss.terms.model_order() {
                return Err(cfg(
                    "sampler.order",
                    format!("order {} needs networks the loss `{}` does not train", order.as_int(), self.loss.terms),
                ));
            }
        }
        if self.architecture.hidden.contains(&0) {
            return Err(cfg("architecture.hidden", "widths must be positive".into()));
        }
        if let Some(sw) = &self.sweep {
            if sw.seeds.is_empty() || sw.loss_configs.is_empty() {
                return Err(cfg("sweep", "seeds and loss_configs must be non-empty".into()));
            }
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let order = self.sampler.order.unwrap_or_else(|| self.loss.terms.model_order());
        SamplerConfig::new(order, self.sampler.steps)
    }

    /// Expands a sweep into one run per (loss config, seed) cell, in
    /// loss-major order. A run without a sweep expands to itself.
    pub fn cells(&self) -> Vec<TrainRun> {
        match &self.sweep {
            None => vec![self.clone()],
            Some(sw) => sw
                .loss_configs
                .iter()
                .flat_map(|terms| {
                    sw.seeds.iter().map(move |&seed| TrainRun {
                        loss: LossConfig {
                            terms: *terms,
                            ..self.loss.clone()
                        },
                        seed,
                        sweep: None,
                        ..self.clone()
                    })
                })
                .collect(),
        }
    }

    /// Directory name for a sweep cell.
    pub fn cell_name(&self) -> String {
        format!("{}_seed{}", self.loss.terms.to_string().replace('+', "-"), self.seed)
    }
}
