use std::fs;

use hamlearn::physics::SystemKind;
use hamlearn::taskgen::{
    make_grid, make_meta_train, read_dataset_dir, read_grid_csv, read_task_csv, sample_params,
    task_rng, write_dataset_dir, write_grid_csv, write_task_csv, TEST_STREAM_BASE,
};
use hamlearn::Error;

#[test]
fn dataset_directories_round_trip_exactly() {
    for system in SystemKind::ALL {
        let tasks = make_meta_train(system, 4, 7, 21).unwrap();
        let grid = make_grid(&sample_params(system, &mut task_rng(21, TEST_STREAM_BASE))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest =
            write_dataset_dir(dir.path(), 21, &tasks, std::slice::from_ref(&grid)).unwrap();
        assert_eq!(
            (
                manifest.system,
                manifest.n_tasks,
                manifest.n_points,
                manifest.seed
            ),
            (system, 4, 7, 21)
        );
        assert_eq!(manifest.param_ranges.len(), system.param_names().len());
        assert_eq!(manifest.state_ranges.len(), 2 * system.dof());
        let (back, read) = read_dataset_dir(dir.path()).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(read, tasks);
        assert_eq!(
            read_grid_csv(&dir.path().join(&manifest.grids[0])).unwrap(),
            grid
        );
    }
}

#[test]
fn task_csv_layout() {
    let task = make_meta_train(SystemKind::Kepler, 1, 3, 0)
        .unwrap()
        .remove(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_task_csv(&path, &task).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        format!(
            "system,split,{},q1,q2,p1,p2,q1dot,q2dot,p1dot,p2dot",
            SystemKind::Kepler.param_names().join(",")
        )
    );
    let splits: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(splits, ["train", "train", "train", "test", "test", "test"]);
    assert_eq!(read_task_csv(&path).unwrap(), task);
}

#[test]
fn corrupt_files_are_rejected() {
    let task = make_meta_train(SystemKind::Pendulum, 1, 3, 0)
        .unwrap()
        .remove(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_task_csv(&path, &task).unwrap();
    let good = fs::read_to_string(&path).unwrap();

    let cases = [
        good.replacen("system,split", "system,part", 1),
        good.replacen("\npendulum,train,", "\nspring_mass,train,", 1),
        good.replace(",test,", ",validation,"),
        good.lines()
            .take(2)
            .map(|l| l.to_string() + "\n")
            .collect::<String>()
            .replace("pendulum,train,", "pendulum,train,9,"),
    ];
    for (i, bad) in cases.iter().enumerate() {
        fs::write(&path, bad).unwrap();
        assert!(
            matches!(
                read_task_csv(&path),
                Err(Error::Format { .. }) | Err(Error::Csv(_))
            ),
            "case {i}"
        );
    }

    let grid = make_grid(&task.params).unwrap();
    let gpath = dir.path().join("g.csv");
    write_grid_csv(&gpath, &grid).unwrap();
    let text = fs::read_to_string(&gpath).unwrap();
    fs::write(&gpath, text.replacen("pendulum", "kepler", 2)).unwrap();
    assert!(read_grid_csv(&gpath).is_err());
}

#[test]
fn missing_task_files_are_reported() {
    let tasks = make_meta_train(SystemKind::SpringMass, 3, 2, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset_dir(dir.path(), 1, &tasks, &[]).unwrap();
    fs::remove_file(dir.path().join("tasks/task_00002.csv")).unwrap();
    assert!(read_dataset_dir(dir.path()).is_err());
}
