//! Loss-term selection (`M1`, `M2`, `M3`, `SC`) and its configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fields::Order;

/// Which loss terms are active. Written and parsed as labels like `M1+M2+SC`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LossTerms {
    pub m1: bool,
    pub m2: bool,
    pub m3: bool,
    pub sc: bool,
}

impl LossTerms {
    pub fn any_matching(&self) -> bool {
        self.m1 || self.m2 || self.m3
    }

    /// Highest field order that must exist: u3 for M3, u2 for M2.
    pub fn model_order(&self) -> Order {
        if self.m3 {
            Order::Third
        } else if self.m2 {
            Order::Second
        } else {
            Order::First
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.any_matching() || self.sc) {
            return Err(Error::InvalidLossConfig("at least one loss term must be enabled".into()));
        }
        Ok(())
    }
}

impl fmt::Display for LossTerms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.m1, "M1"), (self.m2, "M2"), (self.m3, "M3"), (self.sc, "SC")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for LossTerms {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut t = LossTerms::default();
        for part in s.split('+').map(str::trim) {
            let slot = match part.to_ascii_uppercase().as_str() {
                "M1" => &mut t.m1,
                "M2" => &mut t.m2,
                "M3" => &mut t.m3,
                "SC" => &mut t.sc,
                other => {
                    return Err(Error::InvalidLossConfig(format!("unknown loss term `{other}` in `{s}`")))
                }
            };
            if *slot {
                return Err(Error::InvalidLossConfig(format!("duplicate term `{part}` in `{s}`")));
            }
            *slot = true;
        }
        t.validate()?;
        Ok(t)
    }
}

impl Serialize for LossTerms {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LossTerms {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Mean,
    #[default]
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub terms: LossTerms,
    /// Share of each batch that receives true-path targets (the rest is used
    /// for self-consistency) when both kinds of term are enabled.
    pub true_target_fraction: f64,
    pub reduction: Reduction,
    /// Finest step is `2^-step_depth`; the step set is `{2^-step_depth, ..., 1/2, 1}`.
    pub step_depth: u32,
    /// Feed u2 and u3 a detached copy of u1's prediction, so the M2 and M3
    /// terms do not train u1.
    pub detach_velocity_input: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            terms: "M1+M2+SC".parse().expect("static label"),
            true_target_fraction: 0.75,
            reduction: Reduction::Sum,
            step_depth: 7,
            detach_velocity_input: true,
        }
    }
}

impl LossConfig {
    pub fn with_terms(terms: LossTerms) -> Self {
        Self {
            terms,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.terms.validate()?;
        if !(self.true_target_fraction > 0.0 && self.true_target_fraction <= 1.0) {
            return Err(Error::InvalidLossConfig(format!(
                "true_target_fraction must be in (0, 1], got {}",
                self.true_target_fraction
            )));
        }
        if self.step_depth == 0 || self.step_depth > 30 {
            return Err(Error::InvalidLossConfig(format!(
                "step_depth must be in 1..=30, got {}",
                self.step_depth
            )));
        }
        Ok(())
    }

    /// Ascending dyadic steps `2^-step_depth, ..., 1/2, 1`.
    pub fn step_set(&self) -> Vec<f64> {
        (0..=self.step_depth).rev().map(|k| 0.5f64.powi(k as i32)).collect()
    }

    pub fn finest_step(&self) -> f64 {
        0.5f64.powi(self.step_depth as i32)
    }

    /// Step conditioning is on exactly when self-consistency is trained.
    pub fn step_conditioned(&self) -> bool {
        self.terms.sc
    }

    /// `(true-target count, self-consistency count)` for a batch.
    ///
    /// Configurations without SC spend the whole batch on true targets and
    /// SC-only configurations spend it all on self-consistency; otherwise
    /// the split follows `true_target_fraction`.
    pub fn split(&self, batch_size: usize) -> (usize, usize) {
        let k = if !self.terms.sc {
            batch_size
        } else if !self.terms.any_matching() {
            0
        } else {
            ((self.true_target_fraction * batch_size as f64).round() as usize).min(batch_size)
        };
        (k, batch_size - k)
    }
}
