//! End-to-end runs: obtain a learner's initialization from a meta-train pool
//! and score it on freshly sampled systems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{adapt_and_eval, AdaptConfig, EvalReport};
use crate::metalearn::{
    pretrain_with, Learner, OuterConfig, PretrainConfig, TrainerState, Training,
};
use crate::network::{init_params, ParamVector};
use crate::physics::SystemKind;
use crate::taskgen::{make_meta_test_suite, make_meta_train, ObservationMode, Task};

/// Initialization of a learner after its training phase, with the loss
/// recorded at each episode (meta-training) or step (pretraining).
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub params: ParamVector,
    pub losses: Vec<f64>,
}

/// Initial parameters for `learner`, seeded by `seed`.
pub fn initial_params(learner: &Learner, seed: u64) -> ParamVector {
    init_params(&learner.spec, seed)
}

/// Runs the learner's training phase on `pool`. `on_step(index, loss)` is
/// called after each meta-training episode or pretraining step.
pub fn prepare_with<F>(
    learner: &Learner,
    pool: &[Task],
    outer: &OuterConfig,
    seed: u64,
    mut on_step: F,
) -> Result<Prepared>
where
    F: FnMut(usize, f64) -> Result<()>,
{
    outer.validate()?;
    let start = initial_params(learner, seed);
    match learner.training {
        Training::None => Ok(Prepared {
            params: start,
            losses: Vec::new(),
        }),
        Training::Pretrain => {
            let cfg = PretrainConfig::matching(&learner.inner, outer);
            let (params, losses) = pretrain_with(
                learner.loss,
                &learner.spec,
                &start,
                pool,
                &cfg,
                seed,
                on_step,
            )?;
            Ok(Prepared { params, losses })
        }
        Training::Meta => {
            let mut state = TrainerState::new(start, seed);
            let mut losses = Vec::with_capacity(outer.episodes);
            while state.episode < outer.episodes {
                let loss =
                    state.episode(learner.loss, &learner.spec, pool, &learner.inner, outer)?;
                on_step(state.episode - 1, loss)?;
                losses.push(loss);
            }
            Ok(Prepared {
                params: state.params,
                losses,
            })
        }
    }
}

pub fn prepare(
    learner: &Learner,
    pool: &[Task],
    outer: &OuterConfig,
    seed: u64,
) -> Result<Prepared> {
    prepare_with(learner, pool, outer, seed, |_, _| Ok(()))
}

/// One cell of a results table: training scale plus meta-test protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskConfig {
    pub system: SystemKind,
    pub n_tasks: usize,
    pub n_points: usize,
    pub outer: OuterConfig,
    pub mode: ObservationMode,
    pub k: usize,
    pub n_systems: usize,
    pub adapt: AdaptConfig,
    pub seed: u64,
}

impl DeskConfig {
    pub fn new(system: SystemKind, seed: u64) -> Self {
        Self {
            system,
            n_tasks: 1000,
            n_points: crate::taskgen::POINTS_PER_SET,
            outer: OuterConfig::default(),
            mode: ObservationMode::Points,
            k: 50,
            n_systems: crate::taskgen::META_TEST_SYSTEMS,
            adapt: AdaptConfig::default(),
            seed,
        }
    }
}

/// Trains every learner in `learners` on one shared pool and evaluates them
/// on one shared suite of new systems.
pub fn desk_table(cfg: &DeskConfig, learners: &[Learner]) -> Result<Vec<EvalReport>> {
    if learners
        .iter()
        .any(|l| l.spec.input_dim != 2 * cfg.system.dof())
    {
        return Err(Error::invalid("learner built for a different system"));
    }
    let pool = make_meta_train(cfg.system, cfg.n_tasks, cfg.n_points, cfg.seed)?;
    let sets = make_meta_test_suite(cfg.system, cfg.mode, cfg.k, cfg.n_systems, cfg.seed)?;
    learners
        .iter()
        .map(|l| {
            let prepared = prepare(l, &pool, &cfg.outer, cfg.seed)?;
            adapt_and_eval(l, &prepared.params, &sets, &cfg.adapt)
        })
        .collect()
}
