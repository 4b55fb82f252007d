use std::fs;
use std::path::{Path, PathBuf};

use geoslam_core::harness::config::FilterName;
use geoslam_core::harness::{read_states, replay_dataset, run_simulation, write_log, HarnessError, RunConfig};
use geoslam_core::metrics::StepMetrics;

fn short(filter: FilterName) -> RunConfig {
    RunConfig {
        duration: 2.0,
        filter,
        record_inputs: true,
        stride: 100,
        ..RunConfig::default()
    }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/euroc_sample")
}

fn read_rows(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn metrics_file_has_one_row_per_frame() {
    let c = short(FilterName::Stoch);
    let dir = tempfile::tempdir().unwrap();
    let log = run_simulation(&c).unwrap();
    write_log(&log, dir.path()).unwrap();
    let (header, rows) = read_rows(&dir.path().join("metrics.csv"));
    assert_eq!(header, StepMetrics::columns(4).join(","));
    assert_eq!(
        header,
        "t,att_err,pos_err,lm_err_1,lm_err_2,lm_err_3,lm_err_4,e_1,e_2,e_3,e_4,\
         bw_err_x,bw_err_y,bw_err_z,bv_err_x,bv_err_y,bv_err_z,lyap"
    );
    assert_eq!(rows.len(), 2000);
    assert_eq!(rows[0][0], 0.0);
    assert!((rows[1999][0] - 1.999).abs() < 1e-12);
    for name in ["states.csv", "config.resolved.toml", "summary.csv", "imu.csv", "truth.csv", "landmarks.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let states = read_states(&dir.path().join("states.csv")).unwrap();
    assert_eq!(states.len(), 20);
    assert_eq!(states[3].state, log.snapshots[3].state);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let c = short(FilterName::Det);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_log(&run_simulation(&c).unwrap(), a.path()).unwrap();
    let again = RunConfig::load(&a.path().join("config.resolved.toml")).unwrap();
    assert_eq!(again, c);
    write_log(&run_simulation(&again).unwrap(), b.path()).unwrap();
    for name in ["metrics.csv", "states.csv", "imu.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn replay_of_recorded_inputs_matches_simulation() {
    for filter in [FilterName::Stoch, FilterName::Det] {
        let c = short(filter);
        let dir = tempfile::tempdir().unwrap();
        let sim = run_simulation(&c).unwrap();
        write_log(&sim, dir.path()).unwrap();
        let cfg = RunConfig::load(&dir.path().join("config.resolved.toml")).unwrap();
        let rep = replay_dataset(
            &dir.path().join("imu.csv"),
            Some(&dir.path().join("landmarks.csv")),
            &dir.path().join("truth.csv"),
            &cfg,
        )
        .unwrap();
        assert_eq!(rep.metrics.len(), sim.metrics.len());
        let worst = sim
            .metrics
            .iter()
            .zip(&rep.metrics)
            .flat_map(|(a, b)| a.values().into_iter().zip(b.values()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{filter:?}: {worst:e}");
    }
}

#[test]
fn euroc_sample_replay_converges_in_attitude() {
    let d = data_dir();
    let cfg = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/euroc_replay.toml")).unwrap();
    let log = replay_dataset(&d.join("imu.csv"), None, &d.join("truth.csv"), &cfg).unwrap();
    assert_eq!(log.metrics.len(), 1001);
    let first = log.metrics[0].att_err;
    let s = log.summary().unwrap();
    let tail = s.get("att_err").unwrap().tail_mean;
    assert!(tail < first, "{tail} vs initial {first}");
    assert!(tail < 1e-3, "tail attitude error {tail}");
    assert!(log.metrics.iter().all(|m| m.values().iter().all(|v| v.is_finite())));
}

#[test]
fn malformed_inputs_are_parse_errors() {
    let d = data_dir();
    let cfg = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/euroc_replay.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let err = replay_dataset(&empty, None, &d.join("truth.csv"), &cfg).unwrap_err();
    assert!(matches!(err, HarnessError::Parse { line: 1, .. }), "{err}");
    assert_eq!(err.exit_code(), 4);

    let ragged = dir.path().join("ragged.csv");
    let text = fs::read_to_string(d.join("imu.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().take(5).map(String::from).collect();
    lines[3] = lines[3].rsplit_once(',').unwrap().0.to_string();
    fs::write(&ragged, lines.join("\n") + "\n").unwrap();
    let err = replay_dataset(&ragged, None, &d.join("truth.csv"), &cfg).unwrap_err();
    assert!(matches!(err, HarnessError::Parse { line: 4, .. }), "{err}");

    let err = replay_dataset(&dir.path().join("missing.csv"), None, &d.join("truth.csv"), &cfg).unwrap_err();
    assert_eq!(err.category(), "io");
}

#[test]
fn stochastic_replay_requires_imu_columns() {
    let c = short(FilterName::Stoch);
    let dir = tempfile::tempdir().unwrap();
    write_log(&run_simulation(&c).unwrap(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("imu.csv")).unwrap();
    let cut: String = text
        .lines()
        .map(|l| l.split(',').take(7).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    let imu = dir.path().join("imu_velocity_only.csv");
    fs::write(&imu, cut).unwrap();
    let err = replay_dataset(&imu, None, &dir.path().join("truth.csv"), &c).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}
