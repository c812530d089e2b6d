//! Experiment configuration, read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::env::{CorruptionSpec, NoiseSpec};
use crate::error::{Error, Result};
use crate::estimator::{KappaVariant, MomentMode, ScheduleParams};
use crate::policy::PolicyKind;

/// Which of `(C, nu_t)` the learner knows; unknown ones are replaced by bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ParamMode {
    #[default]
    Known,
    UnknownC {
        c_bar: f64,
    },
    UnknownNu {
        nu: f64,
    },
    UnknownBoth {
        c_bar: f64,
        nu: f64,
    },
}

/// Optional replacements for the default schedule constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_variant: Option<KappaVariant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// One policy name or a list of them.
    #[serde(deserialize_with = "one_or_many")]
    pub algo: Vec<PolicyKind>,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub d: usize,
    #[serde(rename = "K")]
    pub arms: usize,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub corruption: CorruptionSpec,
    #[serde(default)]
    pub param_mode: ParamMode,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub overrides: ScheduleOverrides,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn one_or_many<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<PolicyKind>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(PolicyKind),
        Many(Vec<PolicyKind>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(k) => vec![k],
        OneOrMany::Many(v) => v,
    })
}

impl ExperimentConfig {
    /// The desk-scale setup: d = 10, K = 20, T = 5000, seeds 0..10.
    pub fn desk_scale(algo: PolicyKind, noise: NoiseSpec, budget: f64) -> Self {
        Self {
            algo: vec![algo],
            horizon: 5000,
            d: 10,
            arms: 20,
            noise,
            corruption: if budget > 0.0 {
                CorruptionSpec::ThetaFlip { budget }
            } else {
                CorruptionSpec::None
            },
            param_mode: ParamMode::Known,
            seeds: (0..10).collect(),
            overrides: ScheduleOverrides::default(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("T must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.algo.is_empty() {
            return Err(Error::Config("algo must name at least one policy".into()));
        }
        if self.d == 0 || self.arms == 0 {
            return Err(Error::Config("d and K must be at least 1".into()));
        }
        if let Some(s) = &self.noise.nu_schedule {
            if s.len() < self.horizon {
                return Err(Error::Config(format!(
                    "nu_schedule has {} entries for T = {}",
                    s.len(),
                    self.horizon
                )));
            }
        }
        self.schedule_params()?.validate()
    }

    /// Schedule for the learner: defaults, then overrides, then the
    /// known/unknown substitutions of `param_mode`.
    pub fn schedule_params(&self) -> Result<ScheduleParams> {
        let (epsilon, _) = self.noise.declared()?;
        let mut p = ScheduleParams::theorem_defaults(
            self.horizon,
            self.d,
            epsilon,
            self.corruption.budget(),
        );
        let o = &self.overrides;
        if let Some(v) = o.alpha {
            p.alpha = v;
        }
        if let Some(v) = o.lambda {
            p.lambda = v;
        }
        if let Some(v) = o.sigma_min {
            p.sigma_min = v;
        }
        if let Some(v) = o.delta {
            p.delta = v;
        }
        if let Some(v) = o.kappa_variant {
            p.kappa_variant = v;
        }
        match self.param_mode {
            ParamMode::Known => {}
            ParamMode::UnknownC { c_bar } => p.corruption_budget = c_bar,
            ParamMode::UnknownNu { nu } => p.moment = MomentMode::GlobalBound { nu },
            ParamMode::UnknownBoth { c_bar, nu } => {
                p.corruption_budget = c_bar;
                p.moment = MomentMode::GlobalBound { nu };
            }
        }
        Ok(p)
    }

    /// OFUL's `R`: the declared bound under finite variance, else 1.
    pub fn oful_noise_scale(&self) -> Result<f64> {
        let (epsilon, nu) = self.noise.declared()?;
        Ok(if epsilon >= 1.0 { nu } else { 1.0 })
    }
}
