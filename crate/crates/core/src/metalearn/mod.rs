//! Field losses, gradient-based meta-learning and the learner variants.
//!
//! Losses average over the points of a batch; meta-losses sum over the tasks
//! of a batch. Inner loops use plain gradient descent, outer loops use Adam.

mod adam;
mod loss;
mod maml;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{LayerSelection, NetworkSpec};
use crate::physics::SystemKind;

pub use adam::{adam_update, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use loss::{
    field_loss, hnn_loss, loss_and_grad, mean_squared_norm, naive_loss, predicted_field,
    symplectic_field, FieldModel, LossKind,
};
pub use maml::{
    adapt_params, episode_batch, inner_adapt, inner_adapt_with, meta_grad, meta_step, pretrain,
    pretrain_with, task_meta_grad, InnerConfig, Optimizer, OuterConfig, PretrainConfig,
    TrainerState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    HnnScratch,
    HnnPretrained,
    NaiveMaml,
    NaiveAnil,
    Hamaml,
    Hanil,
    HanilInv,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 7] = [
        LearnerKind::HnnScratch,
        LearnerKind::HnnPretrained,
        LearnerKind::NaiveMaml,
        LearnerKind::NaiveAnil,
        LearnerKind::Hamaml,
        LearnerKind::Hanil,
        LearnerKind::HanilInv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::HnnScratch => "hnn_scratch",
            LearnerKind::HnnPretrained => "hnn_pretrained",
            LearnerKind::NaiveMaml => "naive_maml",
            LearnerKind::NaiveAnil => "naive_anil",
            LearnerKind::Hamaml => "hamaml",
            LearnerKind::Hanil => "hanil",
            LearnerKind::HanilInv => "hanil_inv",
        }
    }
}

impl std::fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| Error::invalid(format!("unknown learner '{s}'")))
    }
}

/// How a learner obtains its initialization before meta-testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Training {
    /// Fresh random initialization.
    None,
    /// Plain Adam on the pooled meta-train set.
    Pretrain,
    /// Bi-level meta-training.
    Meta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub kind: LearnerKind,
    pub loss: LossKind,
    pub spec: NetworkSpec,
    pub inner: InnerConfig,
    pub training: Training,
}

impl Learner {
    pub fn meta_trained(&self) -> bool {
        self.training == Training::Meta
    }

    /// Layers adapted at meta-test time: the inner-loop update set for
    /// meta-learned variants, every layer otherwise.
    pub fn adapt_selection(&self) -> LayerSelection {
        match self.training {
            Training::Meta => self.inner.update_set,
            Training::None | Training::Pretrain => LayerSelection::All,
        }
    }
}

pub fn build_learner(kind: LearnerKind, system: SystemKind) -> Learner {
    let dim = 2 * system.dof();
    let (loss, update_set, training) = match kind {
        LearnerKind::HnnScratch => (LossKind::Hamiltonian, LayerSelection::All, Training::None),
        LearnerKind::HnnPretrained => (
            LossKind::Hamiltonian,
            LayerSelection::All,
            Training::Pretrain,
        ),
        LearnerKind::NaiveMaml => (LossKind::Naive, LayerSelection::All, Training::Meta),
        LearnerKind::NaiveAnil => (LossKind::Naive, LayerSelection::Last, Training::Meta),
        LearnerKind::Hamaml => (LossKind::Hamiltonian, LayerSelection::All, Training::Meta),
        LearnerKind::Hanil => (LossKind::Hamiltonian, LayerSelection::Last, Training::Meta),
        LearnerKind::HanilInv => (
            LossKind::Hamiltonian,
            LayerSelection::AllButFirst,
            Training::Meta,
        ),
    };
    let spec = match loss {
        LossKind::Hamiltonian => NetworkSpec::hamiltonian(dim),
        LossKind::Naive => NetworkSpec::naive(dim),
    };
    Learner {
        kind,
        loss,
        spec,
        inner: InnerConfig {
            update_set,
            ..InnerConfig::default()
        },
        training,
    }
}

#[cfg(test)]
mod tests;
