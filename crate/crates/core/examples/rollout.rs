//! Adapts a meta-trained HANIL to a new pendulum, integrates its field for
//! 20 s and compares states and energies with the true flow.
//!
//! cargo run --release --example rollout -- [episodes] [out.csv]

use std::path::PathBuf;

use hamlearn::eval::{
    adapt, learned_energy_drift, rollout_eval, rollout_start, write_rollout_csv, AdaptConfig,
    CURVE_STEPS, ROLLOUT_SAMPLES, ROLLOUT_SPAN,
};
use hamlearn::experiment::prepare;
use hamlearn::metalearn::{build_learner, FieldModel, LearnerKind, OuterConfig};
use hamlearn::physics::SystemKind;
use hamlearn::taskgen::{make_meta_test_suite, make_meta_train, ObservationMode, POINTS_PER_SET};

fn main() -> hamlearn::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hamlearn_rollout.csv"));
    let system = SystemKind::Pendulum;
    let seed = 0;

    let learner = build_learner(LearnerKind::Hanil, system);
    let pool = make_meta_train(system, 1000, POINTS_PER_SET, seed)?;
    let prepared = prepare(
        &learner,
        &pool,
        &OuterConfig {
            episodes,
            ..OuterConfig::default()
        },
        seed,
    )?;
    let set = make_meta_test_suite(system, ObservationMode::Points, 50, 1, seed)?.remove(0);
    let adapted = adapt(
        &learner,
        &prepared.params,
        &set.train,
        &AdaptConfig::default().with_steps(CURVE_STEPS),
    )?;
    let model = FieldModel::new(learner.loss, &learner.spec, &adapted)?;

    let x0 = rollout_start(&set.params, seed, 0)?;
    let report = rollout_eval(
        |x: &[f64]| model.field(x),
        &set.params,
        &x0,
        ROLLOUT_SPAN,
        ROLLOUT_SAMPLES,
    )?;
    for i in (0..report.times.len()).step_by(40) {
        println!(
            "t = {:>5.1}: state mse {:.4e}, energy mse {:.4e}",
            report.times[i], report.state_mse[i], report.energy_mse[i]
        );
    }
    println!(
        "learned H drift along its own flow over 1 s: {:.2e}",
        learned_energy_drift(&model, &x0, 1.0, 50)?
    );
    write_rollout_csv(
        &report,
        &[format!("system = {:?}", set.params), format!("x0 = {x0:?}")],
        &out,
    )?;
    println!("rollout written to {}", out.display());
    Ok(())
}
