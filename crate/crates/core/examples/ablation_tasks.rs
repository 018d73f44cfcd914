//! HANIL and the pretrained baseline against the number of meta-train
//! tasks, on new pendulum systems.
//!
//! cargo run --release --example ablation_tasks -- [counts, e.g. 10,50,200]

use hamlearn::eval::{adapt_and_eval, AdaptConfig};
use hamlearn::experiment::prepare;
use hamlearn::metalearn::{build_learner, LearnerKind, OuterConfig};
use hamlearn::physics::SystemKind;
use hamlearn::taskgen::{make_meta_test_suite, make_meta_train, ObservationMode, POINTS_PER_SET};

fn main() -> hamlearn::Result<()> {
    let counts: Vec<usize> = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "10,50,200".into())
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| hamlearn::Error::InvalidArgument(format!("bad count '{s}'")))
        })
        .collect::<hamlearn::Result<_>>()?;
    let system = SystemKind::Pendulum;
    let seed = 0;
    let sets = make_meta_test_suite(system, ObservationMode::Points, 50, 10, seed)?;
    println!(
        "{:>8} {:>14} {:>12} {:>12}",
        "tasks", "learner", "mse", "std"
    );
    for &count in &counts {
        let pool = make_meta_train(system, count, POINTS_PER_SET, seed)?;
        for kind in [LearnerKind::Hanil, LearnerKind::HnnPretrained] {
            let learner = build_learner(kind, system);
            let prepared = prepare(&learner, &pool, &OuterConfig::default(), seed)?;
            let r = adapt_and_eval(&learner, &prepared.params, &sets, &AdaptConfig::default())?;
            println!(
                "{count:>8} {kind:>14} {:>12.4e} {:>12.4e}",
                r.mse_mean, r.mse_std
            );
        }
    }
    Ok(())
}
