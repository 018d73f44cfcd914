//! Meta-test evaluation: field error on phase-space grids, adaptation curves,
//! rollouts and exports.
//!
//! Standard deviations over systems are population deviations.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metalearn::{
    loss_and_grad, AdamState, FieldModel, Learner, LearnerKind, LossKind, Optimizer,
};
use crate::network::{NetworkSpec, ParamVector};
use crate::physics::{integrate, integrate_partial, PhysicalParams, SystemKind, Tolerance};
use crate::taskgen::{sample_states, task_rng, Dataset, MetaTestSet, ObservationMode};

pub const ADAPT_STEPS: usize = 10;
pub const ADAPT_LR: f64 = 0.002;
pub const CURVE_STEPS: usize = 50;
pub const ROLLOUT_SPAN: f64 = 20.0;
pub const ROLLOUT_SAMPLES: usize = 200;
/// Rollout start states for meta-test system `i` come from stream
/// `ROLLOUT_STREAM_BASE + i` of the seed.
pub const ROLLOUT_STREAM_BASE: u64 = 1 << 43;

/// Meta-test adaptation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub steps: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            steps: ADAPT_STEPS,
            lr: ADAPT_LR,
            optimizer: Optimizer::Adam,
        }
    }
}

impl AdaptConfig {
    pub fn with_steps(self, steps: usize) -> Self {
        Self { steps, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub learner: LearnerKind,
    pub system: SystemKind,
    pub mode: ObservationMode,
    pub k: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub n_systems: usize,
    pub adapt_steps: usize,
    pub adapt_optimizer: Optimizer,
    pub per_system_mse: Vec<f64>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean over rows of ‖ẋ − predicted‖².
pub fn field_mse(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParamVector,
    data: &Dataset,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let pred = FieldModel::new(kind, spec, params)?.field_batch(&data.states)?;
    if pred.dim() != data.derivs.dim() {
        return Err(Error::shape(
            "field_mse",
            format!("{:?} vs {:?}", pred.dim(), data.derivs.dim()),
        ));
    }
    Ok((&pred - &data.derivs).mapv(|v| v * v).sum() / data.len() as f64)
}

/// Meta-test adaptation on the train observations, restricted to the
/// learner's adaptation layers. Calls `observe(step, params)` before the
/// first step and after every step.
pub fn adapt_observed<F>(
    learner: &Learner,
    params: &ParamVector,
    data: &Dataset,
    cfg: &AdaptConfig,
    mut observe: F,
) -> Result<ParamVector>
where
    F: FnMut(usize, &ParamVector) -> Result<()>,
{
    let layers = learner.adapt_selection().layers(&learner.spec)?;
    let mut p = params.clone();
    let mut adam = AdamState::new(p.len());
    observe(0, &p)?;
    for step in 1..=cfg.steps {
        let (loss, grad) = loss_and_grad(learner.loss, &learner.spec, &p, data, &layers)?;
        if !loss.is_finite() {
            return Err(Error::AdaptationDiverged { step });
        }
        match cfg.optimizer {
            Optimizer::Adam => adam.step(p.as_mut_slice(), &grad, cfg.lr)?,
            Optimizer::Sgd => p
                .as_mut_slice()
                .iter_mut()
                .zip(&grad)
                .for_each(|(w, g)| *w -= cfg.lr * g),
        }
        observe(step, &p)?;
    }
    Ok(p)
}

pub fn adapt(
    learner: &Learner,
    params: &ParamVector,
    data: &Dataset,
    cfg: &AdaptConfig,
) -> Result<ParamVector> {
    adapt_observed(learner, params, data, cfg, |_, _| Ok(()))
}

/// Adapts a copy of `params` to each system and reports the grid error.
pub fn adapt_and_eval(
    learner: &Learner,
    params: &ParamVector,
    sets: &[MetaTestSet],
    cfg: &AdaptConfig,
) -> Result<EvalReport> {
    let first = sets
        .first()
        .ok_or_else(|| Error::invalid("no meta-test systems"))?;
    let per_system: Vec<f64> = sets
        .par_iter()
        .map(|set| {
            let adapted = adapt(learner, params, &set.train, cfg)?;
            field_mse(learner.loss, &learner.spec, &adapted, &set.grid.data)
        })
        .collect::<Result<_>>()?;
    let (mse_mean, mse_std) = mean_std(&per_system);
    Ok(EvalReport {
        learner: learner.kind,
        system: first.params.system(),
        mode: first.mode,
        k: first.k,
        mse_mean,
        mse_std,
        n_systems: sets.len(),
        adapt_steps: cfg.steps,
        adapt_optimizer: cfg.optimizer,
        per_system_mse: per_system,
    })
}

/// Grid error after every adaptation step `0..=cfg.steps`, averaged over
/// systems.
pub fn learning_curve(
    learner: &Learner,
    params: &ParamVector,
    sets: &[MetaTestSet],
    cfg: &AdaptConfig,
) -> Result<Vec<f64>> {
    if cfg.steps == 0 {
        return Err(Error::invalid("a learning curve needs at least one step"));
    }
    if sets.is_empty() {
        return Err(Error::invalid("no meta-test systems"));
    }
    let curves: Vec<Vec<f64>> = sets
        .par_iter()
        .map(|set| {
            let mut curve = Vec::with_capacity(cfg.steps + 1);
            adapt_observed(learner, params, &set.train, cfg, |_, p| {
                curve.push(field_mse(learner.loss, &learner.spec, p, &set.grid.data)?);
                Ok(())
            })?;
            Ok(curve)
        })
        .collect::<Result<_>>()?;
    Ok((0..=cfg.steps)
        .map(|s| curves.iter().map(|c| c[s]).sum::<f64>() / curves.len() as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    /// Sample times, starting at 0.
    pub times: Vec<f64>,
    pub state_mse: Vec<f64>,
    pub energy_mse: Vec<f64>,
    pub predicted: Vec<Vec<f64>>,
    pub truth: Vec<Vec<f64>>,
    /// Time at which integrating the predicted field failed; the series
    /// stop there.
    pub failure_time: Option<f64>,
}

/// Integrates a predicted field and the true field from `x0` and compares
/// them. Energies are those of the true system on both trajectories.
pub fn rollout_eval<F>(
    field: F,
    truth: &PhysicalParams,
    x0: &[f64],
    t_end: f64,
    samples: usize,
) -> Result<RolloutReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let (reference, err) = integrate_partial(
        |x: &[f64]| truth.field(x),
        x0,
        t_end,
        samples,
        Tolerance::DATA,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    let (pred, err) = integrate_partial(field, x0, t_end, samples, Tolerance::ROLLOUT)?;
    let failure_time = match err {
        Some(Error::Integration { time, .. }) => Some(time),
        Some(other) => return Err(other),
        None => None,
    };
    let mut report = RolloutReport {
        times: vec![0.0],
        state_mse: vec![0.0],
        energy_mse: vec![0.0],
        predicted: vec![x0.to_vec()],
        truth: vec![x0.to_vec()],
        failure_time,
    };
    for ((t, xp), xt) in pred.times.iter().zip(&pred.states).zip(&reference.states) {
        let state: f64 = xp.iter().zip(xt).map(|(a, b)| (a - b).powi(2)).sum();
        // Predicted states can wander into the Kepler singularity.
        let energy = match (truth.energy(xp), truth.energy(xt)) {
            (Ok(a), Ok(b)) => (a - b).powi(2),
            _ => f64::INFINITY,
        };
        report.times.push(*t);
        report.state_mse.push(state);
        report.energy_mse.push(energy);
        report.predicted.push(xp.clone());
        report.truth.push(xt.clone());
    }
    Ok(report)
}

/// Seeded start state for rollouts on meta-test system `index`.
pub fn rollout_start(params: &PhysicalParams, seed: u64, index: usize) -> Result<Vec<f64>> {
    let mut rng = task_rng(seed, ROLLOUT_STREAM_BASE + index as u64);
    Ok(sample_states(params, &mut rng, 1)?.remove(0).to_flat())
}

/// Largest `|H_θ(x(t)) − H_θ(x0)| / max(1, |H_θ(x0)|)` along the model's own
/// flow from `x0`, sampled at `samples` equally spaced times.
pub fn learned_energy_drift(
    model: &FieldModel,
    x0: &[f64],
    t_end: f64,
    samples: usize,
) -> Result<f64> {
    let h0 = model.energy(x0)?;
    let traj = integrate(
        |x: &[f64]| model.field(x),
        x0,
        t_end,
        samples,
        Tolerance::DATA,
    )?;
    let mut worst: f64 = 0.0;
    for x in &traj.states {
        worst = worst.max((model.energy(x)? - h0).abs());
    }
    Ok(worst / h0.abs().max(1.0))
}

/// Writes `q…, p…, q̇_pred…, ṗ_pred…, q̇_true…, ṗ_true…` for every grid row.
pub fn export_field(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParamVector,
    data: &Dataset,
    path: &Path,
) -> Result<()> {
    let pred = FieldModel::new(kind, spec, params)?.field_batch(&data.states)?;
    let n = data.dim() / 2;
    let names = |prefix: &str, suffix: &str| -> Vec<String> {
        ["q", "p"]
            .iter()
            .flat_map(|b| {
                (1..=n).map(move |i| {
                    if n == 1 {
                        format!("{b}{prefix}{suffix}")
                    } else {
                        format!("{b}{i}{prefix}{suffix}")
                    }
                })
            })
            .collect()
    };
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = names("", "")
        .into_iter()
        .chain(names("dot", "_pred"))
        .chain(names("dot", "_true"))
        .collect();
    w.write_record(&header)?;
    for ((x, p), t) in data
        .states
        .outer_iter()
        .zip(pred.outer_iter())
        .zip(data.derivs.outer_iter())
    {
        w.write_record(x.iter().chain(p.iter()).chain(t.iter()).map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the series and both trajectories. Each entry of `comments` becomes
/// a leading `# ` line.
pub fn write_rollout_csv(report: &RolloutReport, comments: &[String], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for c in comments {
        writeln!(file, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    let dim = report.truth.first().map_or(0, Vec::len);
    let mut header = vec!["time".to_string(), "state_mse".into(), "energy_mse".into()];
    header.extend((0..dim).map(|i| format!("pred_{i}")));
    header.extend((0..dim).map(|i| format!("true_{i}")));
    w.write_record(&header)?;
    for i in 0..report.times.len() {
        let row = [report.times[i], report.state_mse[i], report.energy_mse[i]]
            .into_iter()
            .chain(report.predicted[i].iter().copied())
            .chain(report.truth[i].iter().copied())
            .map(|v| v.to_string());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
