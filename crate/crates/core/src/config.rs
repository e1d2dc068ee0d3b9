//! Run configuration: every knob of a pipeline run with full-scale defaults.

use crate::error::{Error, Result};
use crate::orchestrator::ActionMode;
use crate::ppo::PpoHyper;
use crate::raster::{ObsMode, RasterConfig};
use crate::reward::{RewardKind, RewardParams};
use crate::scenario::{Role, ScenarioConfig, VICTIM_1};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Episode count, per-episode tick limit and optional cap on total ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    pub episodes: usize,
    pub max_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_cap: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseBudgets {
    pub baseline: Budget,
    pub adversary: Budget,
    pub retraining: Budget,
}

impl Default for PhaseBudgets {
    fn default() -> Self {
        Self {
            baseline: Budget {
                episodes: 610,
                max_steps: 2000,
                step_cap: Some(300_672),
            },
            adversary: Budget {
                episodes: 101,
                max_steps: 2000,
                step_cap: Some(57_728),
            },
            retraining: Budget {
                episodes: 306,
                max_steps: 2000,
                step_cap: Some(133_888),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    /// Episodes collected under the same parameters before updates are considered.
    pub episodes_per_round: usize,
    pub checkpoint_every: usize,
    /// Victim the adversary trains against.
    pub adversary_opponent: String,
    /// Adversary variants trained (and retrained against) by the full pipeline.
    pub adversary_kinds: Vec<RewardKind>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            episodes_per_round: 1,
            checkpoint_every: 25,
            adversary_opponent: VICTIM_1.into(),
            adversary_kinds: vec![RewardKind::AdvCollision, RewardKind::AdvOffroad],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub episodes: usize,
    pub max_steps: usize,
    pub action_mode: ActionMode,
    /// Episode index drawn for each condition's trajectory plot.
    pub plot_episode: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            episodes: 50,
            max_steps: 2000,
            action_mode: ActionMode::Sample,
            plot_episode: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Threads for concurrent world instances.
    pub workers: usize,
    pub scenario: ScenarioConfig,
    pub raster: RasterConfig,
    pub reward: RewardParams,
    pub ppo: PpoHyper,
    pub phases: PhaseBudgets,
    pub train: TrainOptions,
    pub eval: EvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            workers: 1,
            scenario: ScenarioConfig::default(),
            raster: RasterConfig::default(),
            reward: RewardParams::default(),
            ppo: PpoHyper::default(),
            phases: PhaseBudgets::default(),
            train: TrainOptions::default(),
            eval: EvalOptions::default(),
        }
    }
}

/// Tick limit for training episodes in the desk-scale preset.
pub const DEMO_TRAIN_MAX_STEPS: usize = 100;

impl RunConfig {
    /// Desk-scale preset: lite21 observations and reduced budgets.
    pub fn demo() -> Self {
        let budget = |episodes| Budget {
            episodes,
            max_steps: DEMO_TRAIN_MAX_STEPS,
            step_cap: None,
        };
        Self {
            raster: RasterConfig {
                resolution_mode: ObsMode::Lite21,
                ..RasterConfig::default()
            },
            phases: PhaseBudgets {
                baseline: budget(120),
                adversary: budget(40),
                retraining: budget(60),
            },
            eval: EvalOptions {
                episodes: 20,
                max_steps: 400,
                ..EvalOptions::default()
            },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.raster.validate()?;
        self.ppo.validate()?;
        if !(self.reward.beta.is_finite() && self.reward.beta >= 0.0) {
            return Err(Error::Config(format!(
                "reward.beta = {} must be finite and non-negative",
                self.reward.beta
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        for (key, b) in [
            ("phases.baseline", &self.phases.baseline),
            ("phases.adversary", &self.phases.adversary),
            ("phases.retraining", &self.phases.retraining),
        ] {
            if b.episodes == 0 {
                return Err(Error::Config(format!("{key}.episodes must be positive")));
            }
            if b.max_steps == 0 {
                return Err(Error::Config(format!("{key}.max_steps must be positive")));
            }
            if b.step_cap == Some(0) {
                return Err(Error::Config(format!("{key}.step_cap must be positive")));
            }
        }
        if self.train.episodes_per_round == 0 {
            return Err(Error::Config("train.episodes_per_round must be positive".into()));
        }
        let opponent = self.scenario.agent(&self.train.adversary_opponent);
        if opponent.is_none_or(|a| a.role != Role::Victim) {
            return Err(Error::Config(format!(
                "train.adversary_opponent = `{}` is not a victim in the scenario",
                self.train.adversary_opponent
            )));
        }
        if self.train.adversary_kinds.is_empty()
            || self.train.adversary_kinds.contains(&RewardKind::Victim)
        {
            return Err(Error::Config(
                "train.adversary_kinds must list adv_collision and/or adv_offroad".into(),
            ));
        }
        if self.eval.episodes == 0 || self.eval.max_steps == 0 {
            return Err(Error::Config("eval.episodes and eval.max_steps must be positive".into()));
        }
        if self.eval.plot_episode >= self.eval.episodes {
            return Err(Error::Config(format!(
                "eval.plot_episode = {} must be below eval.episodes = {}",
                self.eval.plot_episode, self.eval.episodes
            )));
        }
        if self.scenario.ids_with_role(Role::Victim).is_empty() {
            return Err(Error::Config("scenario.agents needs at least one victim".into()));
        }
        if self.scenario.ids_with_role(Role::Adversary).len() > 1 {
            return Err(Error::Config("scenario.agents may hold at most one adversary".into()));
        }
        Ok(())
    }
}

/// Reads and validates a TOML run configuration.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
