//! Dataset directories.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/tasks/task_00000.csv …
//! <dir>/grid_<id>.csv …
//! ```
//!
//! Task files have the header `system,split,<params…>,q…,p…,qdot…,pdot…`
//! with train rows before test rows. Grid files drop the `split` column.
//! Floats are written in shortest round-trip form, so reading gives back the
//! exact values.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{param_bounds, state_bounds, Dataset, GridTestSet, Task};
use crate::error::{Error, Result};
use crate::physics::{PhysicalParams, SystemKind};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TASKS_DIR: &str = "tasks";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub system: SystemKind,
    pub seed: u64,
    pub n_tasks: usize,
    pub n_points: usize,
    pub param_ranges: BTreeMap<String, [f64; 2]>,
    pub state_ranges: BTreeMap<String, [f64; 2]>,
    pub grids: Vec<String>,
}

impl DatasetManifest {
    pub fn new(system: SystemKind, seed: u64, n_tasks: usize, n_points: usize) -> Self {
        let param_ranges = system
            .param_names()
            .iter()
            .zip(param_bounds(system))
            .map(|(n, (lo, hi))| (n.to_string(), [lo, hi]))
            .collect();
        let (q, p) = state_columns(system);
        let state_ranges = q
            .into_iter()
            .chain(p)
            .zip(state_bounds(system))
            .map(|(n, (lo, hi))| (n, [lo, hi]))
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            system,
            seed,
            n_tasks,
            n_points,
            param_ranges,
            state_ranges,
            grids: Vec::new(),
        }
    }
}

fn state_columns(system: SystemKind) -> (Vec<String>, Vec<String>) {
    let n = system.dof();
    let names = |base: &str| -> Vec<String> {
        if n == 1 {
            vec![base.to_string()]
        } else {
            (1..=n).map(|i| format!("{base}{i}")).collect()
        }
    };
    (names("q"), names("p"))
}

fn header(system: SystemKind, with_split: bool) -> Vec<String> {
    let (q, p) = state_columns(system);
    let mut cols = vec!["system".to_string()];
    if with_split {
        cols.push("split".into());
    }
    cols.extend(system.param_names().iter().map(|s| s.to_string()));
    let dots: Vec<String> = q.iter().chain(&p).map(|c| format!("{c}dot")).collect();
    cols.extend(q);
    cols.extend(p);
    cols.extend(dots);
    cols
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

fn write_rows(
    w: &mut csv::Writer<fs::File>,
    params: &PhysicalParams,
    split: Option<&str>,
    data: &Dataset,
) -> Result<()> {
    let prefix: Vec<String> = std::iter::once(params.system().name().to_string())
        .chain(split.map(str::to_string))
        .chain(params.values().iter().map(f64::to_string))
        .collect();
    for (x, d) in data.states.outer_iter().zip(data.derivs.outer_iter()) {
        let row = prefix
            .iter()
            .cloned()
            .chain(x.iter().chain(d.iter()).map(f64::to_string));
        w.write_record(row)?;
    }
    Ok(())
}

pub fn write_task_csv(path: &Path, task: &Task) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(task.params.system(), true))?;
    write_rows(&mut w, &task.params, Some("train"), &task.train)?;
    write_rows(&mut w, &task.params, Some("test"), &task.test)?;
    w.flush()?;
    Ok(())
}

pub fn write_grid_csv(path: &Path, grid: &GridTestSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(grid.params.system(), false))?;
    write_rows(&mut w, &grid.params, None, &grid.data)?;
    w.flush()?;
    Ok(())
}

struct ParsedRows {
    params: PhysicalParams,
    splits: Vec<String>,
    states: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

fn parse_rows(path: &Path, with_split: bool) -> Result<ParsedRows> {
    let mut r = csv::Reader::from_path(path)?;
    let head: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let records = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let first = records
        .first()
        .ok_or_else(|| format_err(path, "no data rows"))?;
    let system: SystemKind = first[0].parse()?;
    if head != header(system, with_split) {
        return Err(format_err(path, format!("unexpected header {head:?}")));
    }
    let n_params = system.param_names().len();
    let n2 = 2 * system.dof();
    let offset = 1 + with_split as usize;
    let mut params: Option<PhysicalParams> = None;
    let (mut splits, mut states, mut derivs) = (vec![], vec![], vec![]);
    for (i, rec) in records.iter().enumerate() {
        let row = i + 2;
        if &rec[0] != system.name() {
            return Err(format_err(path, format!("row {row}: mixed systems")));
        }
        let nums: Vec<f64> = rec
            .iter()
            .skip(offset)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| format_err(path, format!("row {row}: {e}")))
            })
            .collect::<Result<_>>()?;
        let p = PhysicalParams::from_values(system, &nums[..n_params])?;
        match params {
            Some(prev) if prev != p => {
                return Err(format_err(
                    path,
                    format!("row {row}: parameters change within a file"),
                ))
            }
            _ => params = Some(p),
        }
        if with_split {
            splits.push(rec[1].to_string());
        }
        states.push(nums[n_params..n_params + n2].to_vec());
        derivs.push(nums[n_params + n2..].to_vec());
    }
    Ok(ParsedRows {
        params: params.expect("at least one row"),
        splits,
        states,
        derivs,
    })
}

fn to_dataset(rows: &[Vec<f64>], derivs: &[Vec<f64>], dim: usize) -> Dataset {
    let flat = |v: &[Vec<f64>]| {
        Array2::from_shape_vec((v.len(), dim), v.concat()).expect("rows have the header width")
    };
    Dataset {
        states: flat(rows),
        derivs: flat(derivs),
    }
}

pub fn read_task_csv(path: &Path) -> Result<Task> {
    let rows = parse_rows(path, true)?;
    let dim = 2 * rows.params.system().dof();
    let pick = |split: &str| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        rows.splits
            .iter()
            .zip(rows.states.iter().zip(&rows.derivs))
            .filter(|(s, _)| s.as_str() == split)
            .map(|(_, (x, d))| (x.clone(), d.clone()))
            .unzip()
    };
    if let Some(bad) = rows.splits.iter().find(|s| *s != "train" && *s != "test") {
        return Err(format_err(path, format!("unknown split '{bad}'")));
    }
    let (tx, td) = pick("train");
    let (vx, vd) = pick("test");
    Ok(Task {
        params: rows.params,
        train: to_dataset(&tx, &td, dim),
        test: to_dataset(&vx, &vd, dim),
    })
}

/// Grid files do not record the lattice size; `per_axis` is recovered from
/// the system defaults.
pub fn read_grid_csv(path: &Path) -> Result<GridTestSet> {
    let rows = parse_rows(path, false)?;
    let system = rows.params.system();
    Ok(GridTestSet {
        params: rows.params,
        per_axis: super::grid_points_per_axis(system),
        data: to_dataset(&rows.states, &rows.derivs, 2 * system.dof()),
    })
}

fn task_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(TASKS_DIR).join(format!("task_{i:05}.csv"))
}

/// Writes `tasks` and `grids` under `dir` and returns the manifest written.
pub fn write_dataset_dir(
    dir: &Path,
    seed: u64,
    tasks: &[Task],
    grids: &[GridTestSet],
) -> Result<DatasetManifest> {
    let first = tasks
        .first()
        .ok_or_else(|| Error::invalid("no tasks to write"))?;
    let system = first.params.system();
    if tasks.iter().any(|t| t.params.system() != system)
        || grids.iter().any(|g| g.params.system() != system)
    {
        return Err(Error::invalid("a dataset directory holds a single system"));
    }
    fs::create_dir_all(dir.join(TASKS_DIR))?;
    for (i, t) in tasks.iter().enumerate() {
        write_task_csv(&task_path(dir, i), t)?;
    }
    let mut manifest = DatasetManifest::new(system, seed, tasks.len(), first.train.len());
    for (i, g) in grids.iter().enumerate() {
        let name = format!("grid_{i:02}.csv");
        write_grid_csv(&dir.join(&name), g)?;
        manifest.grids.push(name);
    }
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

pub fn read_dataset_dir(dir: &Path) -> Result<(DatasetManifest, Vec<Task>)> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(&path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(format_err(
            &path,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    let tasks = (0..manifest.n_tasks)
        .map(|i| read_task_csv(&task_path(dir, i)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(t) = tasks.iter().find(|t| t.params.system() != manifest.system) {
        return Err(format_err(
            &path,
            format!(
                "task of system {} in a {} dataset",
                t.params.system(),
                manifest.system
            ),
        ));
    }
    Ok((manifest, tasks))
}
