//! Replay of recorded velocity, IMU and landmark streams against recorded
//! ground truth.
//!
//! Inputs are the generic CSV schemas of [`super::log`]:
//!
//! * IMU: `t,wx,wy,wz,vx,vy,vz[,a1x,a1y,a1z,...]`, one row per frame. The
//!   `a_j` columns are body-frame observations of the configured reference
//!   directions, in the same order.
//! * Truth: `t,r11,...,r33,px,py,pz`. Matched to IMU rows by time, with
//!   geodesic interpolation between rows when no exact match exists.
//! * Landmarks (optional): `t,id,yx,yy,yz`, `id` 1-based. Each landmark's
//!   latest measurement is held until the next. Without this file,
//!   measurements are synthesized from the truth poses and the configured
//!   landmark positions and noise.
//!
//! Frame `k` is integrated over `t_{k+1} - t_k`; the last row is scored but
//! not stepped. `duration` and `dt` of the configuration are ignored.

use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::log::{expect_header, imu_header, parse_err, parse_pose, read_table, LANDMARK_HEADER, TRUTH_HEADER};
use super::run::{Driver, RecordedInputs};
use super::{HarnessError, RunConfig, RunLog};
use crate::filters::FilterKind;
use crate::manifold::{exp_so3, log_so3, Pose, Rotation};
use crate::metrics::TIME_MATCH_TOL;
use crate::scenario::{measure_landmarks, normalize_and_augment, ImuPairs, MeasurementFrame, TrueState};

/// Gaps longer than this multiple of the median frame period are reported.
pub const GAP_FACTOR: f64 = 10.0;

/// Frames and matched truth ready for replay.
#[derive(Debug, Clone)]
pub struct ReplayInputs {
    pub recorded: RecordedInputs,
    pub warnings: Vec<String>,
}

fn header_strings(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

fn strictly_increasing(path: &Path, times: &[(u64, f64)]) -> Result<(), HarnessError> {
    for w in times.windows(2) {
        if !(w[1].1 > w[0].1) {
            return Err(parse_err(
                path,
                w[1].0,
                format!("time {} does not increase past {}", w[1].1, w[0].1),
            ));
        }
    }
    Ok(())
}

struct Truth {
    t: Vec<f64>,
    poses: Vec<Pose>,
}

impl Truth {
    fn load(path: &Path) -> Result<Self, HarnessError> {
        let (_, rows) = read_table(path, |h| expect_header(h, &header_strings(&TRUTH_HEADER)))?;
        let mut times = Vec::with_capacity(rows.len());
        let mut poses = Vec::with_capacity(rows.len());
        for row in &rows {
            let v = row.f64s(path)?;
            poses.push(parse_pose(&v[1..]).map_err(|m| parse_err(path, row.line, m))?);
            times.push((row.line, v[0]));
        }
        strictly_increasing(path, &times)?;
        Ok(Truth {
            t: times.into_iter().map(|(_, t)| t).collect(),
            poses,
        })
    }

    fn covers(&self, t: f64) -> bool {
        t >= self.t[0] - TIME_MATCH_TOL && t <= self.t[self.t.len() - 1] + TIME_MATCH_TOL
    }

    /// Pose at `t`, which must be covered.
    fn at(&self, t: f64) -> Pose {
        let j = self.t.partition_point(|&s| s <= t + TIME_MATCH_TOL);
        let j = j.saturating_sub(1);
        if (self.t[j] - t).abs() <= TIME_MATCH_TOL || j + 1 == self.t.len() {
            return self.poses[j];
        }
        if (self.t[j + 1] - t).abs() <= TIME_MATCH_TOL {
            return self.poses[j + 1];
        }
        let s = (t - self.t[j]) / (self.t[j + 1] - self.t[j]);
        let (a, b) = (&self.poses[j], &self.poses[j + 1]);
        let rel = Rotation::from_matrix_unchecked(a.rotation.matrix().transpose() * b.rotation.matrix());
        let r = a.rotation.matrix() * exp_so3(&(log_so3(&rel) * s)).matrix();
        Pose::new(
            Rotation::from_matrix_unchecked(r),
            a.position + (b.position - a.position) * s,
        )
    }
}

struct LandmarkStream {
    rows: Vec<(u64, f64, usize, Vector3<f64>)>,
    next: usize,
    held: Vec<Option<Vector3<f64>>>,
}

impl LandmarkStream {
    fn load(path: &Path, n: usize) -> Result<Self, HarnessError> {
        let (_, rows) = read_table(path, |h| expect_header(h, &header_strings(&LANDMARK_HEADER)))?;
        let mut out = Vec::with_capacity(rows.len());
        let mut last_t = f64::NEG_INFINITY;
        for row in &rows {
            let t = row.f64(path, 0)?;
            let id: usize = row.fields[1]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, row.line, format!("bad landmark id {:?}", row.fields[1])))?;
            if id == 0 || id > n {
                return Err(parse_err(path, row.line, format!("landmark id {id} outside 1..={n}")));
            }
            if t < last_t {
                return Err(parse_err(path, row.line, format!("time {t} goes back past {last_t}")));
            }
            last_t = t;
            let y = Vector3::new(row.f64(path, 2)?, row.f64(path, 3)?, row.f64(path, 4)?);
            out.push((row.line, t, id - 1, y));
        }
        Ok(LandmarkStream {
            rows: out,
            next: 0,
            held: vec![None; n],
        })
    }

    /// Latest measurement of every landmark at or before `t`.
    fn at(&mut self, path: &Path, t: f64) -> Result<Vec<(usize, Vector3<f64>)>, HarnessError> {
        while let Some(&(_, s, i, y)) = self.rows.get(self.next) {
            if s > t + TIME_MATCH_TOL {
                break;
            }
            self.held[i] = Some(y);
            self.next += 1;
        }
        self.held
            .iter()
            .enumerate()
            .map(|(i, y)| {
                y.map(|y| (i, y)).ok_or_else(|| {
                    HarnessError::Config(format!(
                        "{}: landmark {} has no measurement at or before t = {t}",
                        path.display(),
                        i + 1
                    ))
                })
            })
            .collect()
    }
}

/// Parses and aligns the replay files.
pub fn load_replay_inputs(
    imu_path: &Path,
    landmark_path: Option<&Path>,
    truth_path: &Path,
    config: &RunConfig,
) -> Result<ReplayInputs, HarnessError> {
    config.validate()?;
    let refs = config.references()?;
    let landmarks = config.true_state()?.landmarks;
    let n = landmarks.len();
    let mut warnings = Vec::new();

    let (header, rows) = read_table(imu_path, |h| {
        let m = h.len().checked_sub(7).filter(|k| k % 3 == 0).ok_or("malformed IMU header")? / 3;
        expect_header(h, &imu_header(m))
    })?;
    let m = (header.len() - 7) / 3;
    if m > 0 && m != refs.len() {
        return Err(HarnessError::Config(format!(
            "{} has {m} IMU vectors but {} reference directions are configured",
            imu_path.display(),
            refs.len()
        )));
    }
    if m == 0 && config.filter_kind() == FilterKind::Stochastic {
        return Err(HarnessError::Config(format!(
            "{} has no IMU vector columns, which the stochastic filter requires",
            imu_path.display()
        )));
    }
    let mut parsed = Vec::with_capacity(rows.len());
    for row in &rows {
        parsed.push((row.line, row.f64s(imu_path)?));
    }
    let times: Vec<(u64, f64)> = parsed.iter().map(|(l, v)| (*l, v[0])).collect();
    strictly_increasing(imu_path, &times)?;

    let truth = Truth::load(truth_path)?;
    let before = parsed.len();
    parsed.retain(|(_, v)| truth.covers(v[0]));
    if parsed.len() < before {
        warnings.push(format!(
            "{}: dropped {} rows outside the truth time range [{}, {}]",
            imu_path.display(),
            before - parsed.len(),
            truth.t[0],
            truth.t[truth.t.len() - 1]
        ));
    }
    if parsed.is_empty() {
        return Err(HarnessError::Config(format!(
            "{}: no rows inside the truth time range",
            imu_path.display()
        )));
    }
    gap_warnings(imu_path, &parsed, &mut warnings);

    let mut stream = landmark_path.map(|p| LandmarkStream::load(p, n)).transpose()?;
    let noise = config.noise_spec(config.seed)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);

    let mut frames = Vec::with_capacity(parsed.len());
    let mut poses = Vec::with_capacity(parsed.len());
    for (line, v) in &parsed {
        let t = v[0];
        let pose = truth.at(t);
        let landmark_meas = match (&mut stream, landmark_path) {
            (Some(s), Some(p)) => s.at(p, t)?,
            _ => measure_landmarks(&pose, &landmarks, &noise, &mut rng)
                .into_iter()
                .enumerate()
                .collect(),
        };
        let imu_raw: Vec<Vector3<f64>> = (0..m).map(|j| Vector3::from_column_slice(&v[7 + 3 * j..10 + 3 * j])).collect();
        let imu = if m == 0 {
            ImuPairs {
                pairs: Vec::new(),
                weights: Vec::new(),
            }
        } else {
            normalize_and_augment(&refs, &imu_raw).map_err(|e| parse_err(imu_path, *line, e.to_string()))?
        };
        frames.push(MeasurementFrame {
            t,
            velocity_meas: crate::manifold::Twist::new(
                Vector3::new(v[1], v[2], v[3]),
                Vector3::new(v[4], v[5], v[6]),
            ),
            landmark_meas,
            imu_raw,
            imu,
        });
        poses.push(pose);
    }
    Ok(ReplayInputs {
        recorded: RecordedInputs { frames, truth: poses },
        warnings,
    })
}

fn gap_warnings(path: &Path, rows: &[(u64, Vec<f64>)], warnings: &mut Vec<String>) {
    if rows.len() < 3 {
        return;
    }
    let mut dts: Vec<f64> = rows.windows(2).map(|w| w[1].1[0] - w[0].1[0]).collect();
    let gaps: Vec<(u64, f64)> = rows.windows(2).map(|w| (w[1].0, w[1].1[0] - w[0].1[0])).collect();
    dts.sort_by(f64::total_cmp);
    let median = dts[dts.len() / 2];
    for (line, gap) in gaps {
        if gap > GAP_FACTOR * median {
            warnings.push(format!(
                "{}:{line}: time gap {gap} s exceeds {GAP_FACTOR} x median period {median} s",
                path.display()
            ));
        }
    }
}

/// Drives the configured filter through `inputs` and scores it against the
/// matched truth. The truth landmarks are the configured ones.
pub fn replay_inputs(inputs: &ReplayInputs, config: &RunConfig) -> Result<RunLog, HarnessError> {
    let landmarks = config.true_state()?.landmarks;
    let mut driver = Driver::new(config)?;
    let rec = &inputs.recorded;
    let n = rec.frames.len();
    for (k, (frame, pose)) in rec.frames.iter().zip(&rec.truth).enumerate() {
        let truth = TrueState {
            pose: *pose,
            landmarks: landmarks.clone(),
        };
        driver.observe(k, &truth, frame)?;
        if k + 1 < n {
            driver.step(k, frame, rec.frames[k + 1].t - frame.t)?;
        }
    }
    let t_end = rec.frames.last().map_or(0.0, |f| f.t);
    let (metrics, snapshots, final_state) = driver.finish(n, t_end)?;
    Ok(RunLog {
        config: config.clone(),
        metrics,
        snapshots,
        recorded: None,
        warnings: inputs.warnings.clone(),
        final_state,
    })
}

/// [`load_replay_inputs`] followed by [`replay_inputs`].
pub fn replay_dataset(
    imu_path: &Path,
    landmark_path: Option<&Path>,
    truth_path: &Path,
    config: &RunConfig,
) -> Result<RunLog, HarnessError> {
    let inputs = load_replay_inputs(imu_path, landmark_path, truth_path, config)?;
    replay_inputs(&inputs, config)
}
