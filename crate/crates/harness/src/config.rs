//! Run configuration as read from (and written back to) TOML.

use std::path::{Path, PathBuf};
use std::time::Duration;

use adaptive_smbo::acquisition::AcquisitionParams;
use adaptive_smbo::adaptive::{GaConfig, RewardConfig, RunSettings};
use adaptive_smbo::optimizer::{GenomeId, OptimizerConfig};
use adaptive_smbo::space::{Dimension, ParamSpace};
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::objective::{BoundObjective, Builtin, ExternalObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Only {
    Adaptive,
    Base,
    #[default]
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<Builtin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

fn default_timeout() -> f64 {
    600.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub epsilon: f64,
    pub c: f64,
    pub b: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        let d = RewardConfig::default();
        RewardSection { epsilon: d.epsilon, c: d.c, b: d.b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Store measured evaluation times; off keeps logs byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), record_wall_time: false }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_pool() -> Vec<GenomeId> {
    GenomeId::universe()
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_rounds: usize,
    #[serde(default = "default_one")]
    pub n_suggest: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub maximize: bool,
    #[serde(default)]
    pub only: Only,
    #[serde(default = "default_pool")]
    pub pool: Vec<GenomeId>,
    pub objective: ObjectiveConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub space: Vec<Dimension>,
    #[serde(default)]
    pub reward: RewardSection,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub acquisition: AcquisitionParams,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("invalid run config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        toml::to_string(self).context("serializing run config")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        self.settings().reward.validate()?;
        self.acquisition.validate()?;
        if self.pool.is_empty() {
            bail!("pool must not be empty");
        }
        match (&self.objective.builtin, &self.objective.command) {
            (Some(_), Some(_)) => bail!("objective takes either `builtin` or `command`, not both"),
            (None, None) => bail!("objective needs `builtin` or `command`"),
            (None, Some(cmd)) if cmd.is_empty() => bail!("objective command is empty"),
            _ => {}
        }
        if !(self.objective.timeout_s.is_finite() && self.objective.timeout_s > 0.0) {
            bail!("timeout_s must be positive");
        }
        if self.objective.command.is_some() && self.space.is_empty() {
            bail!("an external objective needs an explicit [[space]]");
        }
        let space = self.param_space()?;
        if let Some(b) = self.objective.builtin {
            b.check_space(&space)?;
        }
        Ok(())
    }

    pub fn param_space(&self) -> anyhow::Result<ParamSpace> {
        if self.space.is_empty() {
            match self.objective.builtin {
                Some(b) => Ok(b.default_space()),
                None => bail!("no search space configured"),
            }
        } else {
            Ok(ParamSpace::new(self.space.clone())?)
        }
    }

    pub fn bind_objective(&self) -> anyhow::Result<BoundObjective> {
        let space = self.param_space()?;
        Ok(match (&self.objective.builtin, &self.objective.command) {
            (Some(builtin), _) => BoundObjective::Builtin { builtin: *builtin, space },
            (None, Some(command)) => BoundObjective::External(ExternalObjective {
                command: command.clone(),
                timeout: Duration::from_secs_f64(self.objective.timeout_s),
                space,
            }),
            (None, None) => bail!("objective needs `builtin` or `command`"),
        })
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            reward: RewardConfig {
                epsilon: self.reward.epsilon,
                c: self.reward.c,
                b: self.reward.b,
                n_rounds: self.n_rounds,
                n_suggest: self.n_suggest,
            },
            ga: self.ga,
            params: self.acquisition,
            optimizer: self.optimizer.clone(),
            maximize: self.maximize,
        }
    }
}
