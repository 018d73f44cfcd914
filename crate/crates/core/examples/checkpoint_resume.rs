//! Meta-training interrupted and resumed from a checkpoint ends in the same
//! parameters as an uninterrupted run.
//!
//! cargo run --release --example checkpoint_resume

use hamlearn::checkpoint::Checkpoint;
use hamlearn::metalearn::{build_learner, LearnerKind, OuterConfig, TrainerState};
use hamlearn::network::init_params;
use hamlearn::physics::SystemKind;
use hamlearn::taskgen::make_meta_train;

fn main() -> hamlearn::Result<()> {
    let system = SystemKind::Pendulum;
    let learner = build_learner(LearnerKind::Hanil, system);
    let pool = make_meta_train(system, 200, 50, 4)?;
    let outer = OuterConfig {
        episodes: 6,
        ..OuterConfig::default()
    };
    let run = |state: &mut TrainerState, until: usize| -> hamlearn::Result<()> {
        while state.episode < until {
            let loss = state.episode(learner.loss, &learner.spec, &pool, &learner.inner, &outer)?;
            println!("  episode {}: meta-loss {loss:.4e}", state.episode);
        }
        Ok(())
    };

    println!("uninterrupted:");
    let mut full = TrainerState::new(init_params(&learner.spec, 4), 4);
    run(&mut full, outer.episodes)?;

    println!("three episodes, checkpoint, three more:");
    let mut first = TrainerState::new(init_params(&learner.spec, 4), 4);
    run(&mut first, 3)?;
    let path = std::env::temp_dir().join("hamlearn_resume.json");
    Checkpoint::new(&learner, system, first.params.clone(), Some(first)).save(&path)?;
    let ck = Checkpoint::load(&path)?;
    ck.expect(LearnerKind::Hanil, system)?;
    let mut resumed = ck
        .trainer
        .expect("meta-trained checkpoints carry trainer state");
    run(&mut resumed, outer.episodes)?;

    assert_eq!(resumed.params, full.params);
    println!("resumed parameters are bitwise equal to the uninterrupted run");
    Ok(())
}
