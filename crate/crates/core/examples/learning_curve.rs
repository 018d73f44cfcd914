//! Grid error over 0..=50 adaptation steps on new pendulum systems, written
//! as CSV.
//!
//! cargo run --release --example learning_curve -- [episodes] [out.csv]

use std::path::PathBuf;

use hamlearn::eval::{learning_curve, AdaptConfig, CURVE_STEPS};
use hamlearn::experiment::prepare;
use hamlearn::metalearn::{build_learner, LearnerKind, OuterConfig};
use hamlearn::physics::SystemKind;
use hamlearn::taskgen::{make_meta_test_suite, make_meta_train, ObservationMode, POINTS_PER_SET};

fn main() -> hamlearn::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hamlearn_learning_curve.csv"));
    let system = SystemKind::Pendulum;
    let seed = 0;

    let pool = make_meta_train(system, 1000, POINTS_PER_SET, seed)?;
    let sets = make_meta_test_suite(system, ObservationMode::Points, 50, 10, seed)?;
    let outer = OuterConfig {
        episodes,
        ..OuterConfig::default()
    };
    let cfg = AdaptConfig::default().with_steps(CURVE_STEPS);
    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["learner", "step", "mse"])?;
    for kind in LearnerKind::ALL {
        let learner = build_learner(kind, system);
        let prepared = prepare(&learner, &pool, &outer, seed)?;
        let curve = learning_curve(&learner, &prepared.params, &sets, &cfg)?;
        println!(
            "{kind:>14}: step 0 {:.4e}, step 10 {:.4e}, step 50 {:.4e}",
            curve[0], curve[10], curve[50]
        );
        for (step, mse) in curve.iter().enumerate() {
            w.write_record([kind.to_string(), step.to_string(), mse.to_string()])?;
        }
    }
    w.flush()?;
    println!("curves written to {}", out.display());
    Ok(())
}
