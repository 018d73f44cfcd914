//! Meta-trains HANIL and HAMAML on spring-mass tasks and scores them, next
//! to the non-meta-learned baselines, on ten new systems.
//!
//! cargo run --release --example meta_train_hanil -- [episodes] [tasks]

use hamlearn::eval::{adapt_and_eval, AdaptConfig};
use hamlearn::experiment::prepare_with;
use hamlearn::metalearn::{build_learner, LearnerKind, OuterConfig};
use hamlearn::physics::SystemKind;
use hamlearn::taskgen::{make_meta_test_suite, make_meta_train, ObservationMode, POINTS_PER_SET};

fn main() -> hamlearn::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let tasks: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let system = SystemKind::SpringMass;
    let seed = 0;

    let pool = make_meta_train(system, tasks, POINTS_PER_SET, seed)?;
    let sets = make_meta_test_suite(system, ObservationMode::Points, 50, 10, seed)?;
    let outer = OuterConfig {
        episodes,
        ..OuterConfig::default()
    };
    for kind in [
        LearnerKind::Hanil,
        LearnerKind::Hamaml,
        LearnerKind::HnnPretrained,
        LearnerKind::HnnScratch,
    ] {
        let learner = build_learner(kind, system);
        let every = (episodes / 5).max(1);
        let prepared = prepare_with(&learner, &pool, &outer, seed, |i, loss| {
            if learner.meta_trained() && (i + 1) % every == 0 {
                println!("  {kind} episode {:>4}: meta-loss {loss:.4e}", i + 1);
            }
            Ok(())
        })?;
        for steps in [0, 10] {
            let r = adapt_and_eval(
                &learner,
                &prepared.params,
                &sets,
                &AdaptConfig::default().with_steps(steps),
            )?;
            println!(
                "{kind:>14} after {steps:>2} steps: mse {:.4e} ± {:.4e}",
                r.mse_mean, r.mse_std
            );
        }
    }
    Ok(())
}
