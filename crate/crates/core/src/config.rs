//! Run configuration.
//!
//! Config files are flat TOML: one `key = value` per line, no tables. Every
//! key is optional and unknown keys are rejected. Defaults:
//!
//! ```toml
//! system = "pendulum"        # spring_mass | pendulum | kepler
//! learner = "hanil"          # hnn_scratch | hnn_pretrained | naive_maml | naive_anil | hamaml | hanil | hanil_inv
//! seed = 0
//! n_tasks = 10000
//! n_points = 50
//! inner_steps = 5
//! inner_lr = 0.002
//! episodes = 100
//! task_batch = 10
//! outer_lr = 0.001
//! second_order = true
//! outer_optimizer = "adam"   # adam | sgd
//! mode = "points"            # points | trajectories
//! k = 50
//! n_systems = 10
//! adapt_steps = 10
//! adapt_lr = 0.002
//! adapt_optimizer = "adam"   # adam | sgd
//! rollout_span = 20.0
//! rollout_adapt_steps = 50
//! strict_serial = false
//! ```
//!
//! Command-line flags override file values; the resolved configuration is
//! written next to every output.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::AdaptConfig;
use crate::experiment::DeskConfig;
use crate::metalearn::{build_learner, InnerConfig, Learner, LearnerKind, Optimizer, OuterConfig};
use crate::physics::SystemKind;
use crate::taskgen::ObservationMode;

pub const CONFIG_FILE: &str = "config.toml";
pub const VERSION_FILE: &str = "VERSION";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemKind,
    pub learner: LearnerKind,
    pub seed: u64,
    pub n_tasks: usize,
    pub n_points: usize,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub episodes: usize,
    pub task_batch: usize,
    pub outer_lr: f64,
    pub second_order: bool,
    pub outer_optimizer: Optimizer,
    pub mode: ObservationMode,
    pub k: usize,
    pub n_systems: usize,
    pub adapt_steps: usize,
    pub adapt_lr: f64,
    pub adapt_optimizer: Optimizer,
    pub rollout_span: f64,
    pub rollout_adapt_steps: usize,
    pub strict_serial: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let inner = InnerConfig::default();
        let outer = OuterConfig::default();
        Self {
            system: SystemKind::Pendulum,
            learner: LearnerKind::Hanil,
            seed: 0,
            n_tasks: crate::taskgen::META_TRAIN_TASKS,
            n_points: crate::taskgen::POINTS_PER_SET,
            inner_steps: inner.steps,
            inner_lr: inner.lr,
            episodes: outer.episodes,
            task_batch: outer.task_batch,
            outer_lr: outer.lr,
            second_order: outer.second_order,
            outer_optimizer: outer.optimizer,
            mode: ObservationMode::Points,
            k: 50,
            n_systems: crate::taskgen::META_TEST_SYSTEMS,
            adapt_steps: crate::eval::ADAPT_STEPS,
            adapt_lr: crate::eval::ADAPT_LR,
            adapt_optimizer: Optimizer::Adam,
            rollout_span: crate::eval::ROLLOUT_SPAN,
            rollout_adapt_steps: crate::eval::CURVE_STEPS,
            strict_serial: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format {
            path: CONFIG_FILE.into(),
            detail: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.inner().validate()?;
        self.outer().validate()?;
        if self.n_tasks == 0 || self.n_points == 0 || self.k == 0 || self.n_systems == 0 {
            return Err(Error::invalid(
                "n_tasks, n_points, k and n_systems must be at least 1",
            ));
        }
        if self.adapt_lr.is_nan()
            || self.adapt_lr <= 0.0
            || self.rollout_span.is_nan()
            || self.rollout_span <= 0.0
        {
            return Err(Error::invalid("adapt_lr and rollout_span must be positive"));
        }
        Ok(())
    }

    pub fn outer(&self) -> OuterConfig {
        OuterConfig {
            episodes: self.episodes,
            task_batch: self.task_batch,
            lr: self.outer_lr,
            second_order: self.second_order,
            optimizer: self.outer_optimizer,
        }
    }

    /// Inner-loop settings; the update set comes from the learner.
    pub fn inner(&self) -> InnerConfig {
        InnerConfig {
            steps: self.inner_steps,
            lr: self.inner_lr,
            ..build_learner(self.learner, self.system).inner
        }
    }

    pub fn learner_for(&self, kind: LearnerKind) -> Learner {
        let base = build_learner(kind, self.system);
        Learner {
            inner: InnerConfig {
                steps: self.inner_steps,
                lr: self.inner_lr,
                ..base.inner
            },
            ..base
        }
    }

    pub fn build_learner(&self) -> Learner {
        self.learner_for(self.learner)
    }

    pub fn desk(&self) -> DeskConfig {
        DeskConfig {
            system: self.system,
            n_tasks: self.n_tasks,
            n_points: self.n_points,
            outer: self.outer(),
            mode: self.mode,
            k: self.k,
            n_systems: self.n_systems,
            adapt: self.adapt(),
            seed: self.seed,
        }
    }

    pub fn adapt(&self) -> AdaptConfig {
        AdaptConfig {
            steps: self.adapt_steps,
            lr: self.adapt_lr,
            optimizer: self.adapt_optimizer,
        }
    }

    /// Writes the resolved configuration and the build version into `dir`.
    pub fn write_provenance(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), self.to_toml())?;
        fs::write(dir.join(VERSION_FILE), format!("{}\n", crate::VERSION))?;
        Ok(())
    }
}
