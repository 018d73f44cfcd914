//! Sampling of systems and their observation datasets.
//!
//! Every task draws from its own ChaCha stream of a master seed
//! ([`task_rng`]), so generating tasks in parallel or serially gives the same
//! bytes.

mod io;

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{
    integrate, PhaseState, PhysicalParams, SystemKind, Tolerance, KEPLER_SAMPLING_GUARD,
};

pub use io::{
    read_dataset_dir, read_grid_csv, read_task_csv, write_dataset_dir, write_grid_csv,
    write_task_csv, DatasetManifest, MANIFEST_FILE, TASKS_DIR,
};

/// Observations of one system; row `i` of `derivs` is the exact time
/// derivative at row `i` of `states`. Both are `len × 2n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub states: Array2<f64>,
    pub derivs: Array2<f64>,
}

impl Dataset {
    pub fn new(states: Array2<f64>, derivs: Array2<f64>) -> Result<Self> {
        if states.dim() != derivs.dim() {
            return Err(Error::shape(
                "dataset",
                format!(
                    "{:?} states vs {:?} derivatives",
                    states.dim(),
                    derivs.dim()
                ),
            ));
        }
        Ok(Self { states, derivs })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    /// Labels `states` with the analytic field of `params`.
    pub fn labelled(params: &PhysicalParams, states: &[Vec<f64>]) -> Result<Self> {
        let n2 = 2 * params.system().dof();
        let mut x = Array2::zeros((states.len(), n2));
        let mut xdot = Array2::zeros((states.len(), n2));
        for (i, s) in states.iter().enumerate() {
            let f = params.field(s)?;
            for j in 0..n2 {
                x[[i, j]] = s[j];
                xdot[[i, j]] = f[j];
            }
        }
        Ok(Self {
            states: x,
            derivs: xdot,
        })
    }

    /// Stacks several datasets row-wise.
    pub fn concat(parts: &[&Dataset]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::invalid("nothing to concatenate"));
        }
        let xs: Vec<_> = parts.iter().map(|d| d.states.view()).collect();
        let ds: Vec<_> = parts.iter().map(|d| d.derivs.view()).collect();
        let states = ndarray::concatenate(Axis(0), &xs)
            .map_err(|e| Error::shape("concat", e.to_string()))?;
        let derivs = ndarray::concatenate(Axis(0), &ds)
            .map_err(|e| Error::shape("concat", e.to_string()))?;
        Ok(Self { states, derivs })
    }

    pub fn pairs(&self) -> impl Iterator<Item = (PhaseState, PhaseState)> + '_ {
        self.states
            .outer_iter()
            .zip(self.derivs.outer_iter())
            .map(|(x, d)| {
                (
                    PhaseState::from_flat(&x.to_vec()).expect("dataset rows are valid states"),
                    PhaseState::from_flat(&d.to_vec()).expect("dataset rows are valid derivatives"),
                )
            })
    }
}

/// One system: its physical parameters and independent train/test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub params: PhysicalParams,
    pub train: Dataset,
    pub test: Dataset,
}

pub const META_TRAIN_TASKS: usize = 10_000;
pub const POINTS_PER_SET: usize = 50;
/// Samples per observed trajectory and its time span in seconds.
pub const TRAJECTORY_SAMPLES: usize = 5;
pub const TRAJECTORY_SPAN: f64 = 1.0;
pub const META_TEST_SYSTEMS: usize = 10;
/// Meta-test systems draw from streams at and above this index, disjoint
/// from the meta-train streams `0..n_tasks`.
pub const TEST_STREAM_BASE: u64 = 1 << 40;

const REJECTION_BUDGET: usize = 10_000;
const TRAJECTORY_RETRIES: usize = 100;

/// Uniform sampling box of the physical parameters, in [`PhysicalParams::values`] order.
pub fn param_bounds(system: SystemKind) -> Vec<(f64, f64)> {
    match system {
        SystemKind::SpringMass => vec![(0.5, 5.0), (0.5, 5.0), (-5.0, 5.0)],
        SystemKind::Pendulum => vec![(0.5, 5.0), (0.5, 5.0), (-PI, PI)],
        SystemKind::Kepler => vec![(0.5, 2.5), (0.5, 2.5), (-2.5, 2.5), (-2.5, 2.5)],
    }
}

/// Uniform sampling box of the states, per coordinate of `[q…, p…]`.
pub fn state_bounds(system: SystemKind) -> Vec<(f64, f64)> {
    match system {
        SystemKind::SpringMass => vec![(-10.0, 10.0), (-10.0, 10.0)],
        SystemKind::Pendulum => vec![(-2.0 * PI, 2.0 * PI), (-20.0, 20.0)],
        SystemKind::Kepler => vec![(-5.0, 5.0); 4],
    }
}

/// Grid points per phase-space axis of the evaluation lattice.
pub fn grid_points_per_axis(system: SystemKind) -> usize {
    match system {
        SystemKind::SpringMass | SystemKind::Pendulum => 50,
        SystemKind::Kepler => 10,
    }
}

/// Independent random stream `index` of the master `seed`.
pub fn task_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_params<R: Rng + ?Sized>(system: SystemKind, rng: &mut R) -> PhysicalParams {
    let values: Vec<f64> = param_bounds(system)
        .into_iter()
        .map(|(lo, hi)| rng.gen_range(lo..=hi))
        .collect();
    PhysicalParams::from_values(system, &values).expect("sampling box holds valid parameters")
}

fn kepler_separation(params: &PhysicalParams, x: &[f64]) -> f64 {
    match params {
        PhysicalParams::Kepler { q0, .. } => (x[0] - q0[0]).hypot(x[1] - q0[1]),
        _ => f64::INFINITY,
    }
}

fn sample_state<R: Rng + ?Sized>(params: &PhysicalParams, rng: &mut R) -> Result<Vec<f64>> {
    let bounds = state_bounds(params.system());
    for _ in 0..REJECTION_BUDGET {
        let x: Vec<f64> = bounds
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..=hi))
            .collect();
        if kepler_separation(params, &x) >= KEPLER_SAMPLING_GUARD {
            return Ok(x);
        }
    }
    Err(Error::invalid(format!(
        "state rejection budget exceeded for {params:?}"
    )))
}

/// `count` states uniform over the system's sampling box. Kepler states
/// closer than [`KEPLER_SAMPLING_GUARD`] to the attractor are rejected.
pub fn sample_states<R: Rng + ?Sized>(
    params: &PhysicalParams,
    rng: &mut R,
    count: usize,
) -> Result<Vec<PhaseState>> {
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    (0..count)
        .map(|_| PhaseState::from_flat(&sample_state(params, rng)?))
        .collect()
}

fn sample_flat<R: Rng + ?Sized>(
    params: &PhysicalParams,
    rng: &mut R,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    Ok(sample_states(params, rng, count)?
        .iter()
        .map(PhaseState::to_flat)
        .collect())
}

pub fn make_task<R: Rng + ?Sized>(
    system: SystemKind,
    n_points: usize,
    rng: &mut R,
) -> Result<Task> {
    let params = sample_params(system, rng);
    let train = Dataset::labelled(&params, &sample_flat(&params, rng, n_points)?)?;
    let test = Dataset::labelled(&params, &sample_flat(&params, rng, n_points)?)?;
    Ok(Task {
        params,
        train,
        test,
    })
}

/// `n_tasks` tasks, task `i` drawn from stream `i` of `seed`.
pub fn make_meta_train(
    system: SystemKind,
    n_tasks: usize,
    n_points: usize,
    seed: u64,
) -> Result<Vec<Task>> {
    if n_tasks == 0 || n_points == 0 {
        return Err(Error::invalid("n_tasks and n_points must be at least 1"));
    }
    (0..n_tasks)
        .into_par_iter()
        .map(|i| make_task(system, n_points, &mut task_rng(seed, i as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// K independent (x, ẋ) points.
    Points,
    /// K trajectories, each contributing [`TRAJECTORY_SAMPLES`] points over [`TRAJECTORY_SPAN`].
    Trajectories,
}

impl std::fmt::Display for ObservationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            ObservationMode::Points => "points",
            ObservationMode::Trajectories => "trajectories",
        })
    }
}

impl std::str::FromStr for ObservationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "points" => Ok(ObservationMode::Points),
            "trajectories" => Ok(ObservationMode::Trajectories),
            other => Err(Error::invalid(format!(
                "unknown observation mode '{other}'"
            ))),
        }
    }
}

/// Equally spaced lattice over the sampling box with exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTestSet {
    pub params: PhysicalParams,
    pub per_axis: usize,
    pub data: Dataset,
}

impl GridTestSet {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Kepler lattice points closer than [`KEPLER_SAMPLING_GUARD`] to the
/// attractor are left out, so that grid can hold fewer than 10⁴ states.
pub fn make_grid(params: &PhysicalParams) -> Result<GridTestSet> {
    let system = params.system();
    let per_axis = grid_points_per_axis(system);
    let axes: Vec<Vec<f64>> = state_bounds(system)
        .into_iter()
        .map(|(lo, hi)| linspace(lo, hi, per_axis))
        .collect();
    let dim = axes.len();
    let total = per_axis.pow(dim as u32);
    let mut states = Vec::with_capacity(total);
    for flat in 0..total {
        // first coordinate varies slowest
        let mut rem = flat;
        let mut x = vec![0.0; dim];
        for j in (0..dim).rev() {
            x[j] = axes[j][rem % per_axis];
            rem /= per_axis;
        }
        if kepler_separation(params, &x) >= KEPLER_SAMPLING_GUARD {
            states.push(x);
        }
    }
    Ok(GridTestSet {
        params: *params,
        per_axis,
        data: Dataset::labelled(params, &states)?,
    })
}

/// Observations of one new system plus its evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaTestSet {
    pub params: PhysicalParams,
    pub mode: ObservationMode,
    pub k: usize,
    pub train: Dataset,
    pub grid: GridTestSet,
}

fn sample_trajectories<R: Rng + ?Sized>(
    params: &PhysicalParams,
    rng: &mut R,
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut states = Vec::with_capacity(k * TRAJECTORY_SAMPLES);
    for _ in 0..k {
        let mut accepted = None;
        for _ in 0..TRAJECTORY_RETRIES {
            let x0 = sample_state(params, rng)?;
            let Ok(traj) = integrate(
                |y: &[f64]| params.field(y),
                &x0,
                TRAJECTORY_SPAN,
                TRAJECTORY_SAMPLES,
                Tolerance::DATA,
            ) else {
                continue;
            };
            if traj
                .states
                .iter()
                .all(|s| kepler_separation(params, s) >= KEPLER_SAMPLING_GUARD)
            {
                accepted = Some(traj.states);
                break;
            }
        }
        let Some(samples) = accepted else {
            return Err(Error::invalid(format!(
                "no admissible trajectory after {TRAJECTORY_RETRIES} retries"
            )));
        };
        states.extend(samples);
    }
    Ok(states)
}

/// Samples a new system and observes it `k` times in the given mode.
pub fn make_meta_test<R: Rng + ?Sized>(
    system: SystemKind,
    mode: ObservationMode,
    k: usize,
    rng: &mut R,
) -> Result<MetaTestSet> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let params = sample_params(system, rng);
    let states = match mode {
        ObservationMode::Points => sample_flat(&params, rng, k)?,
        ObservationMode::Trajectories => sample_trajectories(&params, rng, k)?,
    };
    Ok(MetaTestSet {
        params,
        mode,
        k,
        train: Dataset::labelled(&params, &states)?,
        grid: make_grid(&params)?,
    })
}

/// `n_systems` meta-test sets. System `i` uses stream `TEST_STREAM_BASE + i`,
/// so every mode and K sees the same physical parameters for a given seed.
pub fn make_meta_test_suite(
    system: SystemKind,
    mode: ObservationMode,
    k: usize,
    n_systems: usize,
    seed: u64,
) -> Result<Vec<MetaTestSet>> {
    (0..n_systems)
        .into_par_iter()
        .map(|i| {
            make_meta_test(
                system,
                mode,
                k,
                &mut task_rng(seed, TEST_STREAM_BASE + i as u64),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_samples_stay_in_the_box() {
        let mut rng = task_rng(3, 0);
        for _ in 0..10_000 {
            match sample_params(SystemKind::SpringMass, &mut rng) {
                PhysicalParams::SpringMass { m, k, q0 } => {
                    assert!(
                        (0.5..=5.0).contains(&m)
                            && (0.5..=5.0).contains(&k)
                            && (-5.0..=5.0).contains(&q0)
                    );
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn parameter_sampling_is_seeded() {
        let a: Vec<_> = (0..5)
            .map(|_| sample_params(SystemKind::Kepler, &mut task_rng(9, 1)))
            .collect();
        let b: Vec<_> = (0..5)
            .map(|_| sample_params(SystemKind::Kepler, &mut task_rng(9, 1)))
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn spring_constant_mean_matches_uniform_mean() {
        let mut rng = task_rng(11, 0);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| match sample_params(SystemKind::SpringMass, &mut rng) {
                PhysicalParams::SpringMass { k, .. } => k,
                _ => unreachable!(),
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 2.75).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn state_samples_respect_region_and_guard() {
        let mut rng = task_rng(5, 0);
        let p = sample_params(SystemKind::Pendulum, &mut rng);
        for s in sample_states(&p, &mut rng, 2000).unwrap() {
            assert!(s.p[0].abs() <= 20.0 && s.q[0].abs() <= 2.0 * PI);
        }
        for _ in 0..20 {
            let p = sample_params(SystemKind::Kepler, &mut rng);
            for s in sample_states(&p, &mut rng, 500).unwrap() {
                assert!(kepler_separation(&p, &s.to_flat()) >= 0.5);
            }
        }
        assert!(sample_states(&p, &mut rng, 0).is_err());
    }

    #[test]
    fn meta_train_tasks_are_exact_and_distinct() {
        let tasks = make_meta_train(SystemKind::Pendulum, 200, 50, 17).unwrap();
        assert_eq!(tasks.len(), 200);
        for t in &tasks {
            assert_eq!((t.train.len(), t.test.len()), (50, 50));
            for ds in [&t.train, &t.test] {
                for (x, xdot) in ds.pairs() {
                    assert_eq!(xdot.to_flat(), t.params.field(&x.to_flat()).unwrap());
                }
            }
        }
        let mut keys: Vec<Vec<u64>> = tasks
            .iter()
            .map(|t| t.params.values().iter().map(|v| v.to_bits()).collect())
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 200);
        assert_eq!(
            tasks,
            make_meta_train(SystemKind::Pendulum, 200, 50, 17).unwrap()
        );
        assert!(make_meta_train(SystemKind::Pendulum, 0, 50, 17).is_err());
    }

    #[test]
    fn parallel_and_serial_generation_agree() {
        let parallel = make_meta_train(SystemKind::Kepler, 16, 10, 4).unwrap();
        let serial: Vec<Task> = (0..16)
            .map(|i| make_task(SystemKind::Kepler, 10, &mut task_rng(4, i)).unwrap())
            .collect();
        assert_eq!(parallel, serial);
    }

    #[test]
    fn meta_test_sizes() {
        let mut rng = task_rng(1, TEST_STREAM_BASE);
        let pts = make_meta_test(
            SystemKind::SpringMass,
            ObservationMode::Points,
            25,
            &mut rng,
        )
        .unwrap();
        assert_eq!(pts.train.len(), 25);
        let traj = make_meta_test(
            SystemKind::SpringMass,
            ObservationMode::Trajectories,
            10,
            &mut rng,
        )
        .unwrap();
        assert_eq!(traj.train.len(), 50);
        for set in [&pts, &traj] {
            for (x, xdot) in set.train.pairs() {
                assert_eq!(xdot.to_flat(), set.params.field(&x.to_flat()).unwrap());
            }
        }
        assert!(
            make_meta_test(SystemKind::SpringMass, ObservationMode::Points, 0, &mut rng).is_err()
        );
    }

    #[test]
    fn kepler_trajectories_avoid_the_attractor() {
        let suite =
            make_meta_test_suite(SystemKind::Kepler, ObservationMode::Trajectories, 5, 3, 2)
                .unwrap();
        for set in &suite {
            assert_eq!(set.train.len(), 25);
            for row in set.train.states.outer_iter() {
                assert!(kepler_separation(&set.params, &row.to_vec()) >= KEPLER_SAMPLING_GUARD);
            }
        }
    }

    #[test]
    fn grids_cover_the_sampling_box() {
        let mut rng = task_rng(2, 0);
        for system in [SystemKind::SpringMass, SystemKind::Pendulum] {
            let grid = make_grid(&sample_params(system, &mut rng)).unwrap();
            assert_eq!(grid.len(), 2500);
            for (j, (lo, hi)) in state_bounds(system).into_iter().enumerate() {
                let col = grid.data.states.column(j);
                assert_eq!(col.iter().cloned().fold(f64::INFINITY, f64::min), lo);
                assert_eq!(col.iter().cloned().fold(f64::NEG_INFINITY, f64::max), hi);
            }
        }
        let p = PhysicalParams::Kepler {
            big_m: 1.0,
            m: 1.0,
            q0: [10.0, 10.0],
        };
        assert_eq!(make_grid(&p).unwrap().len(), 10_000);
        let p = sample_params(SystemKind::Kepler, &mut rng);
        let grid = make_grid(&p).unwrap();
        assert!(grid.len() <= 10_000 && grid.len() > 9_000);
    }

    #[test]
    fn suite_shares_systems_across_modes() {
        let a =
            make_meta_test_suite(SystemKind::Pendulum, ObservationMode::Points, 25, 4, 8).unwrap();
        let b = make_meta_test_suite(SystemKind::Pendulum, ObservationMode::Trajectories, 5, 4, 8)
            .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.params, y.params);
        }
        let train = make_meta_train(SystemKind::Pendulum, 4, 5, 8).unwrap();
        assert!(train.iter().zip(&a).all(|(t, s)| t.params != s.params));
    }
}
