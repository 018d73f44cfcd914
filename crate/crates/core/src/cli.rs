//! The `hamlearn` command line: `gen`, `metatrain`, `eval`, `rollout` and
//! `ablate`.
//!
//! Settings resolve in this order, later wins: built-in defaults, the
//! `HAMLEARN_SEED` environment variable (seed only, and only when the config
//! file has no `seed`), the `--config` file, command-line flags. Every output
//! directory receives the resolved `config.toml` and a `VERSION` file.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime or numeric failure.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::Error;
use crate::eval::{
    adapt, adapt_and_eval, export_field, learning_curve, rollout_eval, rollout_start,
    write_rollout_csv, AdaptConfig, EvalReport, ROLLOUT_SAMPLES,
};
use crate::experiment::{initial_params, prepare};
use crate::metalearn::{
    pretrain_with, FieldModel, Learner, LearnerKind, Optimizer, PretrainConfig, TrainerState,
    Training,
};
use crate::network::ParamVector;
use crate::physics::{PhysicalParams, SystemKind};
use crate::taskgen::{
    make_grid, make_meta_test, make_meta_test_suite, make_meta_train, read_dataset_dir,
    sample_params, task_rng, write_dataset_dir, ObservationMode, MANIFEST_FILE, TEST_STREAM_BASE,
};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const SEED_ENV: &str = "HAMLEARN_SEED";

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EVAL_JSON_FILE: &str = "eval_report.json";
pub const EVAL_CSV_FILE: &str = "eval_report.csv";
pub const ROLLOUT_FILE: &str = "rollout.csv";
pub const ABLATION_TASKS_FILE: &str = "ablation_tasks.csv";
pub const LEARNING_CURVE_FILE: &str = "learning_curve.csv";

const DEFAULT_COUNTS: [usize; 5] = [10, 50, 200, 500, 1000];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(name = "hamlearn", version = crate::VERSION, about = "Meta-learned Hamiltonian neural networks")]
pub struct Cli {
    /// Flat TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Run on one thread and zero wall-clock columns so reruns are byte-identical.
    #[arg(long, global = true)]
    pub strict_serial: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a meta-train dataset plus the evaluation grids of the meta-test systems.
    Gen(GenArgs),
    /// Meta-train (or pretrain) a learner on a generated dataset.
    Metatrain(MetatrainArgs),
    /// Adapt to new systems and report the grid error.
    Eval(EvalArgs),
    /// Integrate an adapted learner's field and compare with the true flow.
    Rollout(RolloutArgs),
    /// Sweep the number of meta-train tasks or the number of adaptation steps.
    Ablate(AblateArgs),
}

/// Per-field overrides of the run configuration.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    #[arg(long)]
    pub system: Option<SystemKind>,
    #[arg(long)]
    pub learner: Option<LearnerKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of meta-train tasks.
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Points per train and test set of a meta-train task.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub inner_lr: Option<f64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub task_batch: Option<usize>,
    #[arg(long)]
    pub outer_lr: Option<f64>,
    /// Drop second-order terms of the meta-gradient.
    #[arg(long)]
    pub first_order: bool,
    #[arg(long)]
    pub outer_optimizer: Option<Optimizer>,
    #[arg(long)]
    pub mode: Option<ObservationMode>,
    /// Observations per meta-test system (points, or trajectories of 5 samples).
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of meta-test systems.
    #[arg(long)]
    pub systems: Option<usize>,
    /// Adaptation steps at meta-test time.
    #[arg(long, visible_alias = "steps")]
    pub adapt_steps: Option<usize>,
    #[arg(long)]
    pub adapt_lr: Option<f64>,
    #[arg(long)]
    pub adapt_optimizer: Option<Optimizer>,
    /// Rollout length in seconds.
    #[arg(long)]
    pub rollout_span: Option<f64>,
    #[arg(long)]
    pub rollout_adapt_steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug)]
pub struct MetatrainArgs {
    /// Dataset directory written by `gen`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint until `episodes` episodes are done.
    #[arg(long, value_name = "CHECKPOINT")]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Required unless the learner is hnn_scratch.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the adapted field on every evaluation grid.
    #[arg(long)]
    pub export_fields: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug)]
pub struct RolloutArgs {
    #[arg(long, conflicts_with = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Integrate the analytic field instead of a learner.
    #[arg(long)]
    pub oracle: bool,
    /// Start state `q…,p…`; sampled from the seed when omitted.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    /// Which meta-test system to roll out.
    #[arg(long, default_value_t = 0)]
    pub system_index: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Ascending meta-train task counts.
    #[arg(long, value_delimiter = ',', conflicts_with = "step_range")]
    pub counts: Option<Vec<usize>>,
    /// Adaptation step range `A..B`, inclusive.
    #[arg(long)]
    pub step_range: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "hanil,hnn_pretrained")]
    pub learners: Vec<LearnerKind>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Entry point of the `hamlearn` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let overrides = match &cli.command {
        Command::Gen(a) => &a.overrides,
        Command::Metatrain(a) => &a.overrides,
        Command::Eval(a) => &a.overrides,
        Command::Rollout(a) => &a.overrides,
        Command::Ablate(a) => &a.overrides,
    };
    let cfg = resolve_config(
        cli.config.as_deref(),
        std::env::var(SEED_ENV).ok().as_deref(),
        overrides,
        cli.strict_serial,
    )?;
    let threads = if cfg.strict_serial { 1 } else { 0 };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Gen(a) => cmd_gen(cfg, a),
        Command::Metatrain(a) => cmd_metatrain(cfg, a),
        Command::Eval(a) => cmd_eval(cfg, a),
        Command::Rollout(a) => cmd_rollout(cfg, a),
        Command::Ablate(a) => cmd_ablate(cfg, a),
    })
}

/// Defaults, then `env_seed` when the file sets no seed, then the file,
/// then `overrides`.
pub fn resolve_config(
    path: Option<&Path>,
    env_seed: Option<&str>,
    o: &Overrides,
    strict_serial: bool,
) -> CliResult<RunConfig> {
    let (mut cfg, file_has_seed) = match path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let table: toml::Table = toml::from_str(&text)
                .map_err(|e| usage(format!("malformed config {}: {e}", path.display())))?;
            let cfg = RunConfig::from_toml(&text)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            (cfg, table.contains_key("seed"))
        }
        None => (RunConfig::default(), false),
    };
    if let (false, Some(raw)) = (file_has_seed, env_seed) {
        cfg.seed = raw
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV} is not an unsigned integer: '{raw}'")))?;
    }
    macro_rules! set {
        ($($field:ident <- $flag:ident),* $(,)?) => {
            $(if let Some(v) = o.$flag { cfg.$field = v; })*
        };
    }
    set!(
        system <- system, learner <- learner, seed <- seed, n_tasks <- tasks, n_points <- points,
        inner_steps <- inner_steps, inner_lr <- inner_lr, episodes <- episodes, task_batch <- task_batch,
        outer_lr <- outer_lr, outer_optimizer <- outer_optimizer, mode <- mode, k <- k, n_systems <- systems,
        adapt_steps <- adapt_steps, adapt_lr <- adapt_lr, adapt_optimizer <- adapt_optimizer,
        rollout_span <- rollout_span, rollout_adapt_steps <- rollout_adapt_steps,
    );
    if o.first_order {
        cfg.second_order = false;
    }
    if strict_serial {
        cfg.strict_serial = true;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// Makes `actual` the configured value unless a flag asked for another one.
fn adopt<T: PartialEq + std::fmt::Display + Copy>(
    what: &str,
    flag: Option<T>,
    actual: T,
    slot: &mut T,
) -> CliResult<()> {
    if let Some(f) = flag {
        if f != actual {
            return Err(usage(format!(
                "--{what} {f} does not match the {what} {actual} of the input"
            )));
        }
    }
    *slot = actual;
    Ok(())
}

struct Clock {
    start: Instant,
    frozen: bool,
}

impl Clock {
    fn new(frozen: bool) -> Self {
        Self {
            start: Instant::now(),
            frozen,
        }
    }

    fn seconds(&self) -> f64 {
        if self.frozen {
            0.0
        } else {
            self.start.elapsed().as_secs_f64()
        }
    }
}

fn describe(params: &PhysicalParams) -> String {
    let system = params.system();
    let values: Vec<String> = system
        .param_names()
        .iter()
        .zip(params.values())
        .map(|(n, v)| format!("{n}={v}"))
        .collect();
    format!("{system} {}", values.join(" "))
}

fn cmd_gen(cfg: RunConfig, args: &GenArgs) -> CliResult<()> {
    let pool = make_meta_train(cfg.system, cfg.n_tasks, cfg.n_points, cfg.seed)?;
    let grids = (0..cfg.n_systems)
        .map(|i| {
            make_grid(&sample_params(
                cfg.system,
                &mut task_rng(cfg.seed, TEST_STREAM_BASE + i as u64),
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = write_dataset_dir(&args.out, cfg.seed, &pool, &grids)?;
    cfg.write_provenance(&args.out)?;
    log::info!(
        "wrote {} {} tasks and {} grids to {}",
        manifest.n_tasks,
        manifest.system,
        grids.len(),
        args.out.display()
    );
    Ok(())
}

fn log_writer(path: &Path, header: &[&str], append: bool) -> CliResult<csv::Writer<File>> {
    let exists = append && path.exists();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(exists)
        .truncate(!exists)
        .open(path)
        .map_err(Error::from)?;
    let mut w = csv::Writer::from_writer(file);
    if !exists {
        w.write_record(header).map_err(Error::from)?;
    }
    Ok(w)
}

fn log_row(w: &mut csv::Writer<File>, index: usize, loss: f64, wall: f64) -> crate::Result<()> {
    w.write_record([index.to_string(), loss.to_string(), wall.to_string()])?;
    w.flush()?;
    Ok(())
}

fn cmd_metatrain(mut cfg: RunConfig, args: &MetatrainArgs) -> CliResult<()> {
    let o = &args.overrides;
    let resumed = args.resume.as_deref().map(Checkpoint::load).transpose()?;
    if let Some(ck) = &resumed {
        adopt("learner", o.learner, ck.learner, &mut cfg.learner)?;
        adopt("system", o.system, ck.system, &mut cfg.system)?;
        let trainer = ck
            .trainer
            .as_ref()
            .ok_or_else(|| usage("the checkpoint holds no trainer state to resume"))?;
        adopt("seed", o.seed, trainer.seed, &mut cfg.seed)?;
        cfg.inner_steps = ck.inner.steps;
        cfg.inner_lr = ck.inner.lr;
    }
    let learner = match &resumed {
        Some(ck) => ck.learner(),
        None => cfg.build_learner(),
    };
    match learner.training {
        Training::None => return Err(usage(format!("{} has no training phase", learner.kind))),
        Training::Pretrain if resumed.is_some() => {
            return Err(usage("pretraining cannot be resumed"))
        }
        _ => {}
    }
    if !args.data.join(MANIFEST_FILE).is_file() {
        return Err(CliError::Runtime(format!(
            "no dataset at {}: {MANIFEST_FILE} is missing",
            args.data.display()
        )));
    }
    let (manifest, pool) = read_dataset_dir(&args.data)?;
    adopt(
        "system",
        o.system.or(resumed.as_ref().map(|c| c.system)),
        manifest.system,
        &mut cfg.system,
    )?;
    cfg.n_tasks = manifest.n_tasks;
    cfg.n_points = manifest.n_points;
    fs::create_dir_all(&args.out).map_err(Error::from)?;
    cfg.write_provenance(&args.out)?;

    let clock = Clock::new(cfg.strict_serial);
    let log_path = args.out.join(TRAIN_LOG_FILE);
    let outer = cfg.outer();
    let (params, trainer) = if learner.training == Training::Pretrain {
        let mut log = log_writer(&log_path, &["step", "loss", "wall_time"], false)?;
        let start = initial_params(&learner, cfg.seed);
        let pcfg = PretrainConfig::matching(&learner.inner, &outer);
        let (params, _) = pretrain_with(
            learner.loss,
            &learner.spec,
            &start,
            &pool,
            &pcfg,
            cfg.seed,
            |step, loss| log_row(&mut log, step, loss, clock.seconds()),
        )?;
        (params, None)
    } else {
        let mut log = log_writer(
            &log_path,
            &["episode", "meta_loss", "wall_time"],
            resumed.is_some(),
        )?;
        let mut state = match resumed {
            Some(ck) => ck.trainer.expect("checked above"),
            None => TrainerState::new(initial_params(&learner, cfg.seed), cfg.seed),
        };
        while state.episode < outer.episodes {
            let episode = state.episode;
            let loss = state
                .episode(learner.loss, &learner.spec, &pool, &learner.inner, &outer)
                .map_err(|e| CliError::Runtime(format!("episode {episode}: {e}")))?;
            log_row(&mut log, episode, loss, clock.seconds())?;
            if (episode + 1) % 10 == 0 || episode + 1 == outer.episodes {
                log::info!(
                    "episode {:>5}/{}: meta-loss {loss:.6e}",
                    episode + 1,
                    outer.episodes
                );
            }
        }
        (state.params.clone(), Some(state))
    };
    Checkpoint::new(&learner, cfg.system, params, trainer).save(&args.out.join(CHECKPOINT_FILE))?;
    log::info!("wrote {}", args.out.join(CHECKPOINT_FILE).display());
    Ok(())
}

/// The learner and its starting parameters: from a checkpoint, or a fresh
/// initialization for hnn_scratch.
fn load_learner(
    cfg: &mut RunConfig,
    checkpoint: Option<&Path>,
    o: &Overrides,
) -> CliResult<(Learner, ParamVector)> {
    match checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            adopt("learner", o.learner, ck.learner, &mut cfg.learner)?;
            adopt("system", o.system, ck.system, &mut cfg.system)?;
            cfg.inner_steps = ck.inner.steps;
            cfg.inner_lr = ck.inner.lr;
            Ok((ck.learner(), ck.params))
        }
        None if cfg.learner == LearnerKind::HnnScratch => {
            let learner = cfg.build_learner();
            let params = initial_params(&learner, cfg.seed);
            Ok((learner, params))
        }
        None => Err(usage(format!("learner {} needs --checkpoint", cfg.learner))),
    }
}

fn write_eval_csv(report: &EvalReport, path: &Path) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "learner",
        "system",
        "mode",
        "k",
        "adapt_steps",
        "adapt_optimizer",
        "n_systems",
        "mse_mean",
        "mse_std",
    ])?;
    w.write_record([
        report.learner.to_string(),
        report.system.to_string(),
        report.mode.to_string(),
        report.k.to_string(),
        report.adapt_steps.to_string(),
        report.adapt_optimizer.to_string(),
        report.n_systems.to_string(),
        report.mse_mean.to_string(),
        report.mse_std.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

fn cmd_eval(mut cfg: RunConfig, args: &EvalArgs) -> CliResult<()> {
    let (learner, params) = load_learner(&mut cfg, args.checkpoint.as_deref(), &args.overrides)?;
    let sets = make_meta_test_suite(cfg.system, cfg.mode, cfg.k, cfg.n_systems, cfg.seed)?;
    let adapt_cfg = cfg.adapt();
    let report = adapt_and_eval(&learner, &params, &sets, &adapt_cfg)?;
    fs::create_dir_all(&args.out).map_err(Error::from)?;
    cfg.write_provenance(&args.out)?;
    fs::write(
        args.out.join(EVAL_JSON_FILE),
        serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n",
    )
    .map_err(Error::from)?;
    write_eval_csv(&report, &args.out.join(EVAL_CSV_FILE))?;
    if args.export_fields {
        for (i, set) in sets.iter().enumerate() {
            let adapted = adapt(&learner, &params, &set.train, &adapt_cfg)?;
            export_field(
                learner.loss,
                &learner.spec,
                &adapted,
                &set.grid.data,
                &args.out.join(format!("field_{i:02}.csv")),
            )?;
        }
    }
    println!(
        "{} {} {} K={} steps={}: mse {:.6e} ± {:.6e}",
        report.learner,
        report.system,
        report.mode,
        report.k,
        report.adapt_steps,
        report.mse_mean,
        report.mse_std
    );
    Ok(())
}

fn cmd_rollout(mut cfg: RunConfig, args: &RolloutArgs) -> CliResult<()> {
    if args.system_index >= cfg.n_systems {
        return Err(usage(format!(
            "--system-index {} but only {} systems",
            args.system_index, cfg.n_systems
        )));
    }
    let loaded = if args.oracle {
        None
    } else {
        Some(load_learner(
            &mut cfg,
            args.checkpoint.as_deref(),
            &args.overrides,
        )?)
    };
    let set = make_meta_test(
        cfg.system,
        cfg.mode,
        cfg.k,
        &mut task_rng(cfg.seed, TEST_STREAM_BASE + args.system_index as u64),
    )?;
    let truth = set.params;
    let (x0, origin) = match &args.x0 {
        Some(x) => {
            if x.len() != 2 * cfg.system.dof() {
                return Err(usage(format!(
                    "--x0 needs {} values for {}",
                    2 * cfg.system.dof(),
                    cfg.system
                )));
            }
            truth.energy(x).map_err(|e| usage(format!("--x0: {e}")))?;
            (x.clone(), "given")
        }
        None => (
            rollout_start(&truth, cfg.seed, args.system_index)?,
            "sampled",
        ),
    };
    let mut comments = vec![
        format!("system = {}", describe(&truth)),
        format!(
            "x0 = {} ({origin})",
            x0.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
        ),
    ];
    let report = match &loaded {
        None => {
            comments.push("learner = oracle".into());
            rollout_eval(
                |x: &[f64]| truth.field(x),
                &truth,
                &x0,
                cfg.rollout_span,
                ROLLOUT_SAMPLES,
            )?
        }
        Some((learner, params)) => {
            let adapt_cfg = AdaptConfig {
                steps: cfg.rollout_adapt_steps,
                ..cfg.adapt()
            };
            let adapted = adapt(learner, params, &set.train, &adapt_cfg)?;
            let model = FieldModel::new(learner.loss, &learner.spec, &adapted)?;
            comments.push(format!(
                "learner = {} adapted for {} steps",
                learner.kind, adapt_cfg.steps
            ));
            rollout_eval(
                |x: &[f64]| model.field(x),
                &truth,
                &x0,
                cfg.rollout_span,
                ROLLOUT_SAMPLES,
            )?
        }
    };
    if let Some(t) = report.failure_time {
        comments.push(format!("failure_time = {t}"));
    }
    fs::create_dir_all(&args.out).map_err(Error::from)?;
    cfg.write_provenance(&args.out)?;
    write_rollout_csv(&report, &comments, &args.out.join(ROLLOUT_FILE))?;
    if let Some(t) = report.failure_time {
        return Err(CliError::Runtime(format!(
            "integration failed at t = {t}; the partial series was written"
        )));
    }
    println!(
        "rollout over {} s: final state mse {:.6e}, final energy mse {:.6e}",
        cfg.rollout_span,
        report.state_mse.last().copied().unwrap_or(0.0),
        report.energy_mse.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

/// Parses `A..B` into the inclusive range `A..=B`.
pub fn parse_step_range(s: &str) -> CliResult<(usize, usize)> {
    let bad = || usage(format!("step range must look like 0..50, got '{s}'"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b): (usize, usize) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    if a > b || b == 0 {
        return Err(bad());
    }
    Ok((a, b))
}

fn cmd_ablate(cfg: RunConfig, args: &AblateArgs) -> CliResult<()> {
    if args.learners.is_empty() {
        return Err(usage("no learners to ablate"));
    }
    let learners: Vec<Learner> = args.learners.iter().map(|&k| cfg.learner_for(k)).collect();
    let sets = make_meta_test_suite(cfg.system, cfg.mode, cfg.k, cfg.n_systems, cfg.seed)?;
    let outer = cfg.outer();
    fs::create_dir_all(&args.out).map_err(Error::from)?;
    cfg.write_provenance(&args.out)?;
    if let Some(range) = &args.step_range {
        let (from, to) = parse_step_range(range)?;
        let pool = make_meta_train(cfg.system, cfg.n_tasks, cfg.n_points, cfg.seed)?;
        let mut w =
            csv::Writer::from_path(args.out.join(LEARNING_CURVE_FILE)).map_err(Error::from)?;
        w.write_record(["learner", "step", "mse"])
            .map_err(Error::from)?;
        for learner in &learners {
            let prepared = prepare(learner, &pool, &outer, cfg.seed)?;
            let curve = learning_curve(
                learner,
                &prepared.params,
                &sets,
                &cfg.adapt().with_steps(to),
            )?;
            for (step, mse) in curve.iter().enumerate().skip(from) {
                w.write_record([learner.kind.to_string(), step.to_string(), mse.to_string()])
                    .map_err(Error::from)?;
            }
            log::info!(
                "{}: step {from} mse {:.6e}, step {to} mse {:.6e}",
                learner.kind,
                curve[from],
                curve[to]
            );
        }
        w.flush().map_err(Error::from)?;
        return Ok(());
    }
    let counts = args
        .counts
        .clone()
        .unwrap_or_else(|| DEFAULT_COUNTS.to_vec());
    if counts.is_empty() || counts[0] == 0 || counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage(
            "--counts must be a non-empty, strictly ascending list of positive task counts",
        ));
    }
    let mut w = csv::Writer::from_path(args.out.join(ABLATION_TASKS_FILE)).map_err(Error::from)?;
    w.write_record(["learner", "n_tasks", "mse_mean", "mse_std"])
        .map_err(Error::from)?;
    for &count in &counts {
        let pool = make_meta_train(cfg.system, count, cfg.n_points, cfg.seed)?;
        for learner in &learners {
            let prepared = prepare(learner, &pool, &outer, cfg.seed)?;
            let r = adapt_and_eval(learner, &prepared.params, &sets, &cfg.adapt())?;
            w.write_record([
                learner.kind.to_string(),
                count.to_string(),
                r.mse_mean.to_string(),
                r.mse_std.to_string(),
            ])
            .map_err(Error::from)?;
            w.flush().map_err(Error::from)?;
            log::info!(
                "{} with {count} tasks: mse {:.6e} ± {:.6e}",
                learner.kind,
                r.mse_mean,
                r.mse_std
            );
        }
    }
    Ok(())
}
