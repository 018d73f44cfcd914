use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::loss::{field_loss, loss_and_grad, LossKind};
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::network::{gather, param_leaves, LayerNodes, LayerSelection, NetworkSpec, ParamVector};
use crate::taskgen::{task_rng, Dataset, Task};

/// Stream bases for batch sampling, disjoint from the task-generation streams.
const EPISODE_STREAM_BASE: u64 = 1 << 41;
const PRETRAIN_STREAM_BASE: u64 = 1 << 42;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub steps: usize,
    pub lr: f64,
    pub update_set: LayerSelection,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            steps: 5,
            lr: 0.002,
            update_set: LayerSelection::All,
        }
    }
}

impl InnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "inner learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    /// Plain gradient descent; used to check linearity and resumption.
    Sgd,
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        })
    }
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(Error::invalid(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterConfig {
    pub episodes: usize,
    pub task_batch: usize,
    pub lr: f64,
    pub second_order: bool,
    pub optimizer: Optimizer,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            task_batch: 10,
            lr: 0.001,
            second_order: true,
            optimizer: Optimizer::Adam,
        }
    }
}

impl OuterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.task_batch == 0 {
            return Err(Error::invalid("episodes and task_batch must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "outer learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

fn diverged(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) | Error::Domain { .. } => Error::AdaptationDiverged { step },
        other => other,
    }
}

/// `steps` gradient-descent steps at rate `lr` on `loss`, touching only
/// `selected` layers; every other layer keeps its node id. With
/// `second_order` the result stays differentiable in `layers` through the
/// inner gradients, otherwise those gradients enter as constants.
pub fn inner_adapt_with<F>(
    g: &mut Graph,
    layers: &[LayerNodes],
    selected: &[usize],
    steps: usize,
    lr: f64,
    second_order: bool,
    mut loss: F,
) -> Result<Vec<LayerNodes>>
where
    F: FnMut(&mut Graph, &[LayerNodes]) -> Result<NodeId>,
{
    let mut current = layers.to_vec();
    for step in 0..steps {
        let l = loss(g, &current).map_err(diverged(step))?;
        if !g.scalar(l).is_finite() {
            return Err(Error::AdaptationDiverged { step });
        }
        let wrt: Vec<NodeId> = selected
            .iter()
            .flat_map(|&i| [current[i].weight, current[i].bias])
            .collect();
        let grads = g.backward(l, &wrt).map_err(diverged(step))?;
        let mut update = |param: NodeId, grad: NodeId| -> Result<NodeId> {
            let grad = if second_order { grad } else { g.detach(grad)? };
            let delta = g.scale(grad, lr)?;
            g.sub(param, delta)
        };
        let mut next = current.clone();
        for (&i, pair) in selected.iter().zip(grads.chunks(2)) {
            next[i] = LayerNodes {
                weight: update(current[i].weight, pair[0]).map_err(diverged(step))?,
                bias: update(current[i].bias, pair[1]).map_err(diverged(step))?,
            };
        }
        current = next;
    }
    Ok(current)
}

/// Inner loop of the meta-learners: full-batch gradient descent on the field
/// loss over `data`, restricted to `cfg.update_set`.
pub fn inner_adapt(
    g: &mut Graph,
    kind: LossKind,
    spec: &NetworkSpec,
    layers: &[LayerNodes],
    data: &Dataset,
    cfg: &InnerConfig,
    second_order: bool,
) -> Result<Vec<LayerNodes>> {
    cfg.validate()?;
    let selected = cfg.update_set.layers(spec)?;
    inner_adapt_with(
        g,
        layers,
        &selected,
        cfg.steps,
        cfg.lr,
        second_order,
        |g, cur| field_loss(kind, spec, g, cur, data),
    )
}

/// Numeric convenience wrapper around [`inner_adapt`].
pub fn adapt_params(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParamVector,
    data: &Dataset,
    cfg: &InnerConfig,
) -> Result<ParamVector> {
    let mut g = Graph::new();
    let layers = param_leaves(&mut g, spec, params)?;
    let adapted = inner_adapt(&mut g, kind, spec, &layers, data, cfg, false)?;
    ParamVector::new(spec, gather(&g, &adapted))
}

/// Test loss after adaptation and its gradient with respect to the
/// pre-adaptation parameters.
pub fn task_meta_grad(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParamVector,
    task: &Task,
    inner: &InnerConfig,
    second_order: bool,
) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let layers = param_leaves(&mut g, spec, params)?;
    let adapted = inner_adapt(
        &mut g,
        kind,
        spec,
        &layers,
        &task.train,
        inner,
        second_order,
    )?;
    let loss = field_loss(kind, spec, &mut g, &adapted, &task.test)?;
    let wrt: Vec<NodeId> = layers.iter().flat_map(|l| [l.weight, l.bias]).collect();
    let grads = g.backward(loss, &wrt)?;
    let grad_layers: Vec<LayerNodes> = grads
        .chunks(2)
        .map(|c| LayerNodes {
            weight: c[0],
            bias: c[1],
        })
        .collect();
    Ok((g.scalar(loss), gather(&g, &grad_layers)))
}

/// Σᵢ test loss and its meta-gradient over a task batch. Tasks are
/// processed concurrently; the sum runs in batch order.
pub fn meta_grad(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParamVector,
    tasks: &[&Task],
    inner: &InnerConfig,
    second_order: bool,
) -> Result<(f64, Vec<f64>)> {
    if tasks.is_empty() {
        return Err(Error::invalid("empty task batch"));
    }
    let parts: Vec<(f64, Vec<f64>)> = tasks
        .par_iter()
        .map(|t| task_meta_grad(kind, spec, params, t, inner, second_order))
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for (l, gr) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&gr) {
            *a += b;
        }
    }
    if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::MetaGradientDiverged);
    }
    Ok((loss, grad))
}

fn apply_outer(
    outer: &OuterConfig,
    adam: &mut AdamState,
    params: &mut ParamVector,
    grad: &[f64],
) -> Result<()> {
    match outer.optimizer {
        Optimizer::Adam => adam.step(params.as_mut_slice(), grad, outer.lr),
        Optimizer::Sgd => {
            for (p, g) in params.as_mut_slice().iter_mut().zip(grad) {
                *p -= outer.lr * g;
            }
            Ok(())
        }
    }
}

/// One outer update. Returns the summed test loss before the update.
pub fn meta_step(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &mut ParamVector,
    tasks: &[&Task],
    inner: &InnerConfig,
    outer: &OuterConfig,
    adam: &mut AdamState,
) -> Result<f64> {
    outer.validate()?;
    let (loss, grad) = meta_grad(kind, spec, params, tasks, inner, outer.second_order)?;
    apply_outer(outer, adam, params, &grad)?;
    Ok(loss)
}

/// Indices of the tasks used in `episode`. Depends only on the seed and the
/// episode number, so a resumed run sees the same batches.
pub fn episode_batch(seed: u64, episode: usize, pool: usize, batch: usize) -> Vec<usize> {
    sample(
        &mut task_rng(seed, EPISODE_STREAM_BASE + episode as u64),
        pool,
        batch.min(pool),
    )
    .into_vec()
}

/// Meta-training state that survives checkpointing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub params: ParamVector,
    pub adam: AdamState,
    pub episode: usize,
    pub seed: u64,
}

impl TrainerState {
    pub fn new(params: ParamVector, seed: u64) -> Self {
        let adam = AdamState::new(params.len());
        Self {
            params,
            adam,
            episode: 0,
            seed,
        }
    }

    /// Runs one episode on a batch drawn from `pool`; returns its meta-loss.
    pub fn episode(
        &mut self,
        kind: LossKind,
        spec: &NetworkSpec,
        pool: &[Task],
        inner: &InnerConfig,
        outer: &OuterConfig,
    ) -> Result<f64> {
        if pool.is_empty() {
            return Err(Error::invalid("empty task pool"));
        }
        let batch: Vec<&Task> =
            episode_batch(self.seed, self.episode, pool.len(), outer.task_batch)
                .into_iter()
                .map(|i| &pool[i])
                .collect();
        let loss = meta_step(
            kind,
            spec,
            &mut self.params,
            &batch,
            inner,
            outer,
            &mut self.adam,
        )?;
        self.episode += 1;
        Ok(loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub steps: usize,
    pub task_batch: usize,
    pub lr: f64,
}

impl PretrainConfig {
    /// Matches the number of loss evaluations of a meta-training run.
    pub fn matching(inner: &InnerConfig, outer: &OuterConfig) -> Self {
        Self {
            steps: outer.episodes * (inner.steps + 1),
            task_batch: outer.task_batch,
            lr: outer.lr,
        }
    }
}

/// Adam on the loss pooled over the train points of `task_batch` tasks per
/// step, with no inner loop. Returns the final parameters and the loss
/// before each step.
pub fn pretrain(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParamVector,
    pool: &[Task],
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<(ParamVector, Vec<f64>)> {
    pretrain_with(kind, spec, params, pool, cfg, seed, |_, _| Ok(()))
}

/// [`pretrain`] calling `on_step(step, loss)` after every step.
pub fn pretrain_with<F>(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParamVector,
    pool: &[Task],
    cfg: &PretrainConfig,
    seed: u64,
    mut on_step: F,
) -> Result<(ParamVector, Vec<f64>)>
where
    F: FnMut(usize, f64) -> Result<()>,
{
    if pool.is_empty() {
        return Err(Error::invalid("empty task pool"));
    }
    let all: Vec<usize> = (0..spec.num_layers()).collect();
    let mut params = params.clone();
    let mut adam = AdamState::new(params.len());
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let idx = sample(
            &mut task_rng(seed, PRETRAIN_STREAM_BASE + step as u64),
            pool.len(),
            cfg.task_batch.min(pool.len()),
        );
        let parts: Vec<&Dataset> = idx.iter().map(|i| &pool[i].train).collect();
        let data = Dataset::concat(&parts)?;
        let (loss, grad) = loss_and_grad(kind, spec, &params, &data, &all)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("pretraining loss"));
        }
        adam.step(params.as_mut_slice(), &grad, cfg.lr)?;
        history.push(loss);
        on_step(step, loss)?;
    }
    Ok((params, history))
}
