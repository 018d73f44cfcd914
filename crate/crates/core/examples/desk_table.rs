//! All seven learners on one system: shared meta-train pool, shared new
//! systems, 10 adaptation steps.
//!
//! cargo run --release --example desk_table -- [system] [mode] [k] [episodes]

use hamlearn::experiment::{desk_table, DeskConfig};
use hamlearn::metalearn::{build_learner, LearnerKind, OuterConfig};
use hamlearn::physics::SystemKind;
use hamlearn::taskgen::ObservationMode;

fn main() -> hamlearn::Result<()> {
    let mut args = std::env::args().skip(1);
    let system: SystemKind = args.next().as_deref().unwrap_or("spring_mass").parse()?;
    let mode: ObservationMode = args.next().as_deref().unwrap_or("points").parse()?;
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let episodes: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);

    let cfg = DeskConfig {
        mode,
        k,
        outer: OuterConfig {
            episodes,
            ..OuterConfig::default()
        },
        ..DeskConfig::new(system, 0)
    };
    let learners: Vec<_> = LearnerKind::ALL
        .iter()
        .map(|&kind| build_learner(kind, system))
        .collect();
    println!(
        "{system}, {mode}, K = {k}, {} tasks, {episodes} episodes",
        cfg.n_tasks
    );
    for r in desk_table(&cfg, &learners)? {
        println!("{:>14}: {:.4e} ± {:.4e}", r.learner, r.mse_mean, r.mse_std);
    }
    Ok(())
}
