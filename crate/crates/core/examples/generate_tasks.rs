//! Meta-train tasks, meta-test observations and their on-disk layout.
//!
//! cargo run --release --example generate_tasks -- [system] [out_dir]

use std::path::PathBuf;

use hamlearn::physics::SystemKind;
use hamlearn::taskgen::{
    make_meta_test_suite, make_meta_train, read_dataset_dir, write_dataset_dir, ObservationMode,
};

fn main() -> hamlearn::Result<()> {
    let mut args = std::env::args().skip(1);
    let system: SystemKind = args.next().as_deref().unwrap_or("pendulum").parse()?;
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hamlearn_tasks"));
    let seed = 0;

    let pool = make_meta_train(system, 100, 50, seed)?;
    for task in pool.iter().take(3) {
        println!(
            "{:?}: {} train / {} test points",
            task.params,
            task.train.len(),
            task.test.len()
        );
    }

    let points = make_meta_test_suite(system, ObservationMode::Points, 50, 3, seed)?;
    let trajectories = make_meta_test_suite(system, ObservationMode::Trajectories, 10, 3, seed)?;
    for (p, t) in points.iter().zip(&trajectories) {
        assert_eq!(p.params, t.params);
        println!(
            "new system {:?}: {} point observations, {} trajectory samples, grid of {}",
            p.params,
            p.train.len(),
            t.train.len(),
            p.grid.len()
        );
    }

    let grids: Vec<_> = points.iter().map(|s| s.grid.clone()).collect();
    let manifest = write_dataset_dir(&out, seed, &pool, &grids)?;
    let (back, tasks) = read_dataset_dir(&out)?;
    assert_eq!(back, manifest);
    assert_eq!(tasks, pool);
    println!(
        "wrote and re-read {} tasks under {}",
        tasks.len(),
        out.display()
    );
    Ok(())
}
