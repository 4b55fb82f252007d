//! CSV and TOML output, and the shared CSV reader.
//!
//! All numbers are written as `{:.16e}` (17 significant digits), which
//! round-trips every `f64` exactly.

use std::fs::File;
use std::path::Path;

use nalgebra::{Matrix3, Vector3, Vector6};

use super::{HarnessError, RunLog};
use crate::filters::FilterState;
use crate::manifold::{Pose, Rotation, ROTATION_TOL};
use crate::metrics::{RunSummary, StepMetrics};
use crate::scenario::MeasurementFrame;

pub const TRUTH_HEADER: [&str; 13] = [
    "t", "r11", "r12", "r13", "r21", "r22", "r23", "r31", "r32", "r33", "px", "py", "pz",
];
pub const LANDMARK_HEADER: [&str; 5] = ["t", "id", "yx", "yy", "yz"];
pub const VELOCITY_HEADER: [&str; 7] = ["t", "wx", "wy", "wz", "vx", "vy", "vz"];

fn xyz(prefix: &str) -> [String; 3] {
    ["x", "y", "z"].map(|c| format!("{prefix}{c}"))
}

/// `t,wx,wy,wz,vx,vy,vz` followed by `a{j}x,a{j}y,a{j}z` for `m` IMU vectors.
pub fn imu_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = VELOCITY_HEADER.iter().map(|s| s.to_string()).collect();
    for j in 1..=m {
        h.extend(xyz(&format!("a{j}")));
    }
    h
}

/// `t,r11..r33,px,py,pz,p{i}x..,bw_x..,bv_x..,sig_x..`.
pub fn states_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = TRUTH_HEADER.iter().map(|s| s.to_string()).collect();
    for i in 1..=n {
        h.extend(xyz(&format!("p{i}")));
    }
    for prefix in ["bw_", "bv_", "sig_"] {
        h.extend(xyz(prefix));
    }
    h
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn pose_fields(pose: &Pose) -> impl Iterator<Item = f64> + '_ {
    let r = pose.rotation.matrix();
    (0..9).map(move |k| r[(k / 3, k % 3)]).chain(pose.position.iter().copied())
}

struct Table {
    path: std::path::PathBuf,
    w: csv::Writer<File>,
}

impl Table {
    fn create<S: AsRef<str>>(dir: &Path, name: &str, header: &[S]) -> Result<Self, HarnessError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        let mut t = Table {
            w: csv::Writer::from_writer(file),
            path,
        };
        t.raw(header.iter().map(|s| s.as_ref().to_string()))?;
        Ok(t)
    }

    fn raw(&mut self, fields: impl IntoIterator<Item = String>) -> Result<(), HarnessError> {
        let path = &self.path;
        self.w.write_record(fields.into_iter().collect::<Vec<_>>()).map_err(|e| csv_io(path, e))
    }

    fn row(&mut self, fields: impl IntoIterator<Item = f64>) -> Result<(), HarnessError> {
        self.raw(fields.into_iter().map(num))
    }

    fn finish(mut self) -> Result<(), HarnessError> {
        self.w.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Writes `metrics.csv`, `states.csv`, `config.resolved.toml` and
/// `summary.csv` into `out_dir` (created if missing). Recorded inputs, when
/// present, go to `imu.csv`, `truth.csv` and `landmarks.csv` in the replay
/// schemas; warnings go to `warnings.txt`.
pub fn write_log(log: &RunLog, out_dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let n = log.config.scenario.landmarks.len();

    let mut t = Table::create(out_dir, "metrics.csv", &StepMetrics::columns(n))?;
    for m in &log.metrics {
        t.row(m.values())?;
    }
    t.finish()?;

    let mut t = Table::create(out_dir, "states.csv", &states_header(n))?;
    for s in &log.snapshots {
        t.row(state_fields(s.t, &s.state))?;
    }
    t.finish()?;

    write_text(&out_dir.join("config.resolved.toml"), &log.config.to_toml_string()?)?;

    if !log.metrics.is_empty() {
        write_summary(&log.summary()?, &out_dir.join("summary.csv"))?;
    }
    if let Some(rec) = &log.recorded {
        write_inputs(&rec.frames, &rec.truth, out_dir)?;
    }
    if !log.warnings.is_empty() {
        write_text(&out_dir.join("warnings.txt"), &(log.warnings.join("\n") + "\n"))?;
    }
    Ok(())
}

fn state_fields(t: f64, s: &FilterState) -> Vec<f64> {
    std::iter::once(t)
        .chain(pose_fields(&s.pose))
        .chain(s.landmarks.iter().flat_map(|p| p.iter().copied()))
        .chain(s.bias.iter().copied())
        .chain(s.sigma.iter().copied())
        .collect()
}

/// `name,terminal,tail_mean,tail_max`, one row per metric.
pub fn write_summary(summary: &RunSummary, path: &Path) -> Result<(), HarnessError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("summary.csv");
    let mut t = Table::create(dir, name, &["name", "terminal", "tail_mean", "tail_max"])?;
    for c in &summary.columns {
        t.raw([c.name.clone(), num(c.terminal), num(c.tail_mean), num(c.tail_max)])?;
    }
    t.finish()
}

/// Writes frames and true poses in the replay input schemas.
pub fn write_inputs(frames: &[MeasurementFrame], truth: &[Pose], out_dir: &Path) -> Result<(), HarnessError> {
    let m = frames.first().map_or(0, |f| f.imu_raw.len());
    let mut imu = Table::create(out_dir, "imu.csv", &imu_header(m))?;
    let mut lms = Table::create(out_dir, "landmarks.csv", &LANDMARK_HEADER)?;
    for f in frames {
        let u = &f.velocity_meas;
        imu.row(
            std::iter::once(f.t)
                .chain(u.angular.iter().copied())
                .chain(u.translational.iter().copied())
                .chain(f.imu_raw.iter().flat_map(|a| a.iter().copied())),
        )?;
        for (i, y) in &f.landmark_meas {
            lms.raw([num(f.t), (i + 1).to_string(), num(y.x), num(y.y), num(y.z)])?;
        }
    }
    imu.finish()?;
    lms.finish()?;
    let mut tr = Table::create(out_dir, "truth.csv", &TRUTH_HEADER)?;
    for (f, pose) in frames.iter().zip(truth) {
        tr.row(std::iter::once(f.t).chain(pose_fields(pose)))?;
    }
    tr.finish()
}

/// One data row with its 1-based line number in the file.
pub(crate) struct Row {
    pub line: u64,
    pub fields: Vec<String>,
}

impl Row {
    pub fn f64(&self, path: &Path, k: usize) -> Result<f64, HarnessError> {
        let s = self.fields[k].trim();
        let v: f64 = s.parse().map_err(|_| parse_err(path, self.line, format!("column {}: not a number: {s:?}", k + 1)))?;
        if !v.is_finite() {
            return Err(parse_err(path, self.line, format!("column {}: non-finite value", k + 1)));
        }
        Ok(v)
    }

    pub fn f64s(&self, path: &Path) -> Result<Vec<f64>, HarnessError> {
        (0..self.fields.len()).map(|k| self.f64(path, k)).collect()
    }
}

pub(crate) fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads a headed CSV file. `check` validates the header; every row must
/// have the header's width. Empty and header-only files are parse errors.
pub(crate) fn read_table(
    path: &Path,
    check: impl Fn(&[String]) -> Result<(), String>,
) -> Result<(Vec<String>, Vec<Row>), HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(file);
    let mut records = rdr.records();
    let to_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(io) => HarnessError::io(path, io),
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                parse_err(path, line, format!("expected {expected_len} columns, found {len}"))
            }
            other => parse_err(path, line, format!("{other:?}")),
        }
    };
    let header: Vec<String> = match records.next() {
        None => return Err(parse_err(path, 1, "empty file")),
        Some(r) => r.map_err(to_err)?.iter().map(|s| s.trim().to_string()).collect(),
    };
    check(&header).map_err(|msg| parse_err(path, 1, msg))?;
    let mut rows = Vec::new();
    for r in records {
        let r = r.map_err(to_err)?;
        let line = r.position().map_or(0, |p| p.line());
        if r.len() != header.len() {
            return Err(parse_err(path, line, format!("expected {} columns, found {}", header.len(), r.len())));
        }
        rows.push(Row {
            line,
            fields: r.iter().map(str::to_string).collect(),
        });
    }
    if rows.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    Ok((header, rows))
}

pub(crate) fn expect_header(header: &[String], expected: &[String]) -> Result<(), String> {
    if header == expected {
        Ok(())
    } else {
        Err(format!("expected header {:?}, found {:?}", expected.join(","), header.join(",")))
    }
}

/// Parses a 12-number pose (row-major rotation, then position). The rotation
/// must satisfy the rotation invariants to `ROTATION_TOL`.
pub(crate) fn parse_pose(v: &[f64]) -> Result<Pose, String> {
    let r = Rotation::from_matrix(Matrix3::from_row_slice(&v[..9])).map_err(|e| e.to_string())?;
    Ok(Pose::new(r, Vector3::from_column_slice(&v[9..12])))
}

/// A `states.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRow {
    pub t: f64,
    pub state: FilterState,
}

/// Reads back a `states.csv` file written by [`write_log`].
pub fn read_states(path: &Path) -> Result<Vec<StateRow>, HarnessError> {
    let (header, rows) = read_table(path, |h| {
        let body = h.len().checked_sub(22).filter(|k| k % 3 == 0).ok_or("malformed states header")?;
        expect_header(h, &states_header(body / 3))
    })?;
    let n = (header.len() - 22) / 3;
    rows.iter()
        .map(|row| {
            let v = row.f64s(path)?;
            let pose = parse_pose(&v[1..13]).map_err(|m| parse_err(path, row.line, m))?;
            pose.rotation
                .check(ROTATION_TOL)
                .map_err(|e| parse_err(path, row.line, e.to_string()))?;
            let landmarks = (0..n).map(|i| Vector3::from_column_slice(&v[13 + 3 * i..16 + 3 * i])).collect();
            let mut state = FilterState::new(pose, landmarks);
            let tail = 13 + 3 * n;
            state.bias = Vector6::from_column_slice(&v[tail..tail + 6]);
            state.sigma = Vector3::from_column_slice(&v[tail + 6..tail + 9]);
            Ok(StateRow { t: v[0], state })
        })
        .collect()
}
