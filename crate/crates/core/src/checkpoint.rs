//! Versioned JSON checkpoints.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "learner": "hanil",
//!   "system": "pendulum",
//!   "spec": {"input_dim": 2, "hidden_dims": [64, 64, 64], "output_dim": 1, "activation": "softplus"},
//!   "inner": {"steps": 5, "lr": 0.002, "update_set": "last"},
//!   "params": [...],
//!   "trainer": {"params": [...], "adam": {"m": [...], "v": [...], "t": 100}, "episode": 100, "seed": 0}
//! }
//! ```
//!
//! `params` follows the canonical layout: per layer, the `fan_in × fan_out`
//! weight matrix in row-major order, then the bias. `trainer` is present only
//! for meta-trained learners and holds what `--resume` needs. Floats are
//! written in shortest round-trip form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metalearn::{build_learner, InnerConfig, Learner, LearnerKind, TrainerState};
use crate::network::{NetworkSpec, ParamVector};
use crate::physics::SystemKind;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub learner: LearnerKind,
    pub system: SystemKind,
    pub spec: NetworkSpec,
    pub inner: InnerConfig,
    pub params: ParamVector,
    pub trainer: Option<TrainerState>,
}

impl Checkpoint {
    pub fn new(
        learner: &Learner,
        system: SystemKind,
        params: ParamVector,
        trainer: Option<TrainerState>,
    ) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            learner: learner.kind,
            system,
            spec: learner.spec.clone(),
            inner: learner.inner,
            params,
            trainer,
        }
    }

    /// The learner this checkpoint belongs to, with its stored spec and
    /// inner configuration.
    pub fn learner(&self) -> Learner {
        Learner {
            spec: self.spec.clone(),
            inner: self.inner,
            ..build_learner(self.learner, self.system)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let detail = if self.format_version != CHECKPOINT_VERSION {
            Some(format!(
                "unsupported format version {}",
                self.format_version
            ))
        } else if self.spec.validate().is_err() {
            Some("invalid network spec".to_string())
        } else if self.spec.input_dim != 2 * self.system.dof() {
            Some(format!(
                "network input {} does not fit {}",
                self.spec.input_dim, self.system
            ))
        } else if self.params.len() != self.spec.param_count() {
            Some(format!(
                "{} parameters for a spec of {}",
                self.params.len(),
                self.spec.param_count()
            ))
        } else if self.trainer.as_ref().is_some_and(|t| {
            t.adam.len() != self.params.len() || t.params.len() != self.params.len()
        }) {
            Some("trainer state does not match the parameters".to_string())
        } else {
            None
        };
        match detail {
            Some(detail) => Err(Error::Format {
                path: "checkpoint".into(),
                detail,
            }),
            None => build_learner(self.learner, self.system)
                .loss
                .check_spec(&self.spec),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        ck.validate().map_err(|e| match e {
            Error::Format { detail, .. } => Error::Format {
                path: path.display().to_string(),
                detail,
            },
            other => other,
        })?;
        Ok(ck)
    }

    /// Rejects use of the checkpoint for a different learner or system.
    pub fn expect(&self, learner: LearnerKind, system: SystemKind) -> Result<()> {
        if self.learner != learner || self.system != system {
            return Err(Error::invalid(format!(
                "checkpoint holds {} on {}, but {} on {} was requested",
                self.learner, self.system, learner, system
            )));
        }
        Ok(())
    }
}
