//! Error criteria, Lyapunov diagnostics and run scoring.
//!
//! Pose error is "true relative to estimated": `R~ = R^ R^T`, `P~ = P^ - R~ P`.
//! Bias and covariance errors are `b~ = b - b^` and `sigma~ = sigma - sigma^`.
//!
//! The landmark map is only observable up to a common rigid motion; with
//! landmarks alone the best an estimator can do is converge to a constant
//! offset pair `(R_c, P_c)`. Position and landmark errors reported here are
//! raw and include that offset.

use nalgebra::{Matrix3, Vector3, Vector6};
use thiserror::Error;

use crate::filters::{FilterState, Gains};
use crate::manifold::{attitude_distance, Pose, Rotation};
use crate::scenario::TrueState;

/// Fraction of samples forming the tail window of a run.
pub const TAIL_FRACTION: f64 = 0.125;

/// Tolerance when matching time stamps of two logs.
pub const TIME_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("log is empty")]
    Empty,
    #[error("logs have {truth} and {est} samples")]
    LengthMismatch { truth: usize, est: usize },
    #[error("time stamps differ at sample {index}: {truth} vs {est}")]
    Misaligned { index: usize, truth: f64, est: f64 },
    #[error("truth has {truth} landmarks, estimate has {est}")]
    LandmarkCount { truth: usize, est: usize },
}

/// Error snapshot at one time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub t: f64,
    /// `||R~||_I`.
    pub att_err: f64,
    /// `||P - P^||`.
    pub pos_err: f64,
    /// `||p_i - p^_i||`.
    pub landmark_err: Vec<f64>,
    /// `||e_i||` from the measurements.
    pub e_norms: Vec<f64>,
    pub bias_err: Vector6<f64>,
    pub sigma_err: Vector3<f64>,
    pub lyapunov: f64,
}

impl StepMetrics {
    /// Column names of [`StepMetrics::values`] for `n` landmarks.
    pub fn columns(n: usize) -> Vec<String> {
        let mut c = vec!["t".to_string(), "att_err".into(), "pos_err".into()];
        c.extend((1..=n).map(|i| format!("lm_err_{i}")));
        c.extend((1..=n).map(|i| format!("e_{i}")));
        for prefix in ["bw_err", "bv_err"] {
            c.extend(["x", "y", "z"].iter().map(|a| format!("{prefix}_{a}")));
        }
        c.push("lyap".into());
        c
    }

    /// Flat row matching [`StepMetrics::columns`].
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![self.t, self.att_err, self.pos_err];
        v.extend(&self.landmark_err);
        v.extend(&self.e_norms);
        v.extend(self.bias_err.iter());
        v.push(self.lyapunov);
        v
    }
}

/// `(R~, P~)` with `R~ = R^ R^T` and `P~ = P^ - R~ P`.
pub fn pose_error(truth: &Pose, est: &Pose) -> (Rotation, Vector3<f64>) {
    let r_err = est.rotation * truth.rotation.transpose();
    let p_err = est.position - r_err.matrix() * truth.position;
    (r_err, p_err)
}

/// `p~_i - P~` per landmark, with `p~_i = p^_i - R~ p_i`. Equals the
/// innovation `e_i` when the measurements are noise-free.
pub fn landmark_consistency(truth: &TrueState, est: &FilterState) -> Result<Vec<Vector3<f64>>, MetricsError> {
    if truth.landmarks.len() != est.landmarks.len() {
        return Err(MetricsError::LandmarkCount {
            truth: truth.landmarks.len(),
            est: est.landmarks.len(),
        });
    }
    let (r_err, p_err) = pose_error(&truth.pose, &est.pose);
    Ok(truth
        .landmarks
        .iter()
        .zip(&est.landmarks)
        .map(|(p, p_hat)| p_hat - r_err.matrix() * p - p_err)
        .collect())
}

/// Deterministic-filter candidate
/// `sum_i |e_i|^2 / (2 alpha_i) + b~^T b~ / (2 gamma)`.
pub fn lyapunov_det(e: &[Vector3<f64>], bias_err: &Vector6<f64>, gains: &Gains) -> f64 {
    let landmark: f64 = e
        .iter()
        .zip(&gains.alpha)
        .map(|(ei, a)| ei.norm_squared() / (2.0 * a))
        .sum();
    landmark + bias_err.norm_squared() / (2.0 * gains.gamma_det)
}

/// Stochastic-filter candidate
/// `sum_i |e_i|^4 / (4 alpha_i) + E e^E + b~^T Gamma^-1 b~ / 2 + sigma~^T sigma~ / (2 Gamma_sigma)`.
pub fn lyapunov_stoch(
    e_att: f64,
    e: &[Vector3<f64>],
    bias_err: &Vector6<f64>,
    sigma_err: &Vector3<f64>,
    gains: &Gains,
) -> f64 {
    let landmark: f64 = e
        .iter()
        .zip(&gains.alpha)
        .map(|(ei, a)| ei.norm_squared().powi(2) / (4.0 * a))
        .sum();
    let mut bias = 0.0;
    for k in 0..3 {
        bias += bias_err[k] * bias_err[k] / gains.gamma1[k];
        bias += bias_err[k + 3] * bias_err[k + 3] / gains.gamma2[k];
    }
    landmark + e_att * e_att.exp() + 0.5 * bias + sigma_err.norm_squared() / (2.0 * gains.gamma_sigma)
}

/// `||R~ M||_I = (1/4) Tr{(I - R~) M}`.
pub fn attitude_energy(r_err: &Rotation, m: &Matrix3<f64>) -> f64 {
    0.25 * ((Matrix3::identity() - r_err.matrix()) * m).trace()
}

/// Which Lyapunov candidate a run reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LyapunovKind {
    Deterministic,
    /// Carries the reference matrix `M` used for the attitude term.
    Stochastic(Matrix3<f64>),
}

/// Truth-side quantities needed to score an estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthExtras {
    pub bias: Vector6<f64>,
    /// Covariance bound; `None` when unknown (replay), in which case
    /// `sigma_err` reports `-sigma^`.
    pub sigma: Option<Vector3<f64>>,
}

/// Scores one time stamp. `e` are the innovations the filter sees at `t`.
pub fn step_metrics(
    t: f64,
    truth: &TrueState,
    est: &FilterState,
    e: &[Vector3<f64>],
    extras: &TruthExtras,
    gains: &Gains,
    kind: &LyapunovKind,
) -> Result<StepMetrics, MetricsError> {
    if truth.landmarks.len() != est.landmarks.len() {
        return Err(MetricsError::LandmarkCount {
            truth: truth.landmarks.len(),
            est: est.landmarks.len(),
        });
    }
    let (r_err, _) = pose_error(&truth.pose, &est.pose);
    let bias_err = extras.bias - est.bias;
    let sigma_err = extras.sigma.unwrap_or_else(Vector3::zeros) - est.sigma;
    let lyapunov = match kind {
        LyapunovKind::Deterministic => lyapunov_det(e, &bias_err, gains),
        LyapunovKind::Stochastic(m) => {
            lyapunov_stoch(attitude_energy(&r_err, m), e, &bias_err, &sigma_err, gains)
        }
    };
    Ok(StepMetrics {
        t,
        att_err: attitude_distance(&r_err),
        pos_err: (truth.pose.position - est.pose.position).norm(),
        landmark_err: truth
            .landmarks
            .iter()
            .zip(&est.landmarks)
            .map(|(p, p_hat)| (p - p_hat).norm())
            .collect(),
        e_norms: e.iter().map(|v| v.norm()).collect(),
        bias_err,
        sigma_err,
        lyapunov,
    })
}

/// Terminal value and tail-window statistics of one metric column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSummary {
    pub name: String,
    pub terminal: f64,
    pub tail_mean: f64,
    /// Largest absolute value in the tail window.
    pub tail_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub samples: usize,
    pub tail_samples: usize,
    pub columns: Vec<ColumnSummary>,
}

impl RunSummary {
    pub fn get(&self, name: &str) -> Option<&ColumnSummary> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Number of samples in the tail window of an `n`-sample run.
pub fn tail_len(n: usize) -> usize {
    ((n as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, n.max(1))
}

/// Summarizes a run. Besides the `metrics.csv` columns (minus `t`) it
/// reports `lm_err_max`, `e_max` (worst landmark per sample) and
/// `sig_err_x..z`.
pub fn summarize(log: &[StepMetrics]) -> Result<RunSummary, MetricsError> {
    let last = log.last().ok_or(MetricsError::Empty)?;
    let n_lm = last.landmark_err.len();
    let mut names: Vec<String> = StepMetrics::columns(n_lm).into_iter().skip(1).collect();
    names.extend(["lm_err_max", "e_max", "sig_err_x", "sig_err_y", "sig_err_z"].map(String::from));
    let row = |m: &StepMetrics| -> Vec<f64> {
        let mut v: Vec<f64> = m.values().into_iter().skip(1).collect();
        v.push(m.landmark_err.iter().copied().fold(0.0, f64::max));
        v.push(m.e_norms.iter().copied().fold(0.0, f64::max));
        v.extend(m.sigma_err.iter());
        v
    };
    let tail = tail_len(log.len());
    let tail_rows: Vec<Vec<f64>> = log[log.len() - tail..].iter().map(row).collect();
    let terminal = row(last);
    let columns = names
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let sum: f64 = tail_rows.iter().map(|r| r[k]).sum();
            ColumnSummary {
                name,
                terminal: terminal[k],
                tail_mean: sum / tail as f64,
                tail_max: tail_rows.iter().map(|r| r[k].abs()).fold(0.0, f64::max),
            }
        })
        .collect();
    Ok(RunSummary {
        samples: log.len(),
        tail_samples: tail,
        columns,
    })
}

/// Checks that `est_log` is sampled at `truth_times` and summarizes it.
pub fn score_run(truth_times: &[f64], est_log: &[StepMetrics]) -> Result<RunSummary, MetricsError> {
    if truth_times.len() != est_log.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth_times.len(),
            est: est_log.len(),
        });
    }
    for (index, (t, m)) in truth_times.iter().zip(est_log).enumerate() {
        if !((t - m.t).abs() <= TIME_MATCH_TOL) {
            return Err(MetricsError::Misaligned {
                index,
                truth: *t,
                est: m.t,
            });
        }
    }
    summarize(est_log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::exp_so3;
    use approx::assert_relative_eq;

    fn gains(n: usize) -> Gains {
        Gains {
            k1: 10.0,
            k2: 10.0,
            k3: 10.0,
            k_b: 1e-13,
            k_sigma: 0.02,
            gamma1: Vector3::repeat(3.0),
            gamma2: Vector3::repeat(1e4),
            gamma_sigma: 10.0,
            alpha: vec![0.05; n],
            varrho: 0.5,
            k_w: 1.0,
            k_p: 20.0,
            gamma_det: 1.0,
        }
    }

    fn zero_metrics(t: f64, n: usize) -> StepMetrics {
        StepMetrics {
            t,
            att_err: 0.0,
            pos_err: 0.0,
            landmark_err: vec![0.0; n],
            e_norms: vec![0.0; n],
            bias_err: Vector6::zeros(),
            sigma_err: Vector3::zeros(),
            lyapunov: 0.0,
        }
    }

    #[test]
    fn pose_error_cases() {
        let truth = Pose::new(exp_so3(&Vector3::new(0.1, 0.2, 0.3)), Vector3::new(1.0, 2.0, 3.0));
        let (r, p) = pose_error(&truth, &truth);
        assert_relative_eq!(r.matrix(), &Matrix3::identity(), epsilon = 1e-15);
        assert_relative_eq!(p, Vector3::zeros(), epsilon = 1e-15);
        let d = Vector3::new(0.5, -0.25, 2.0);
        let shifted = Pose::new(truth.rotation, truth.position + d);
        let (_, p) = pose_error(&truth, &shifted);
        assert_relative_eq!(p, d, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_values() {
        let g = gains(1);
        let e = [Vector3::new(1.0, 0.0, 0.0)];
        assert_eq!(lyapunov_det(&[Vector3::zeros()], &Vector6::zeros(), &g), 0.0);
        assert_relative_eq!(lyapunov_det(&e, &Vector6::zeros(), &g), 10.0, epsilon = 1e-12);
        let z = Vector3::zeros();
        assert_eq!(lyapunov_stoch(0.0, &[z], &Vector6::zeros(), &z, &g), 0.0);
        assert_relative_eq!(
            lyapunov_stoch(1.0, &[z], &Vector6::zeros(), &z, &g),
            std::f64::consts::E,
            epsilon = 1e-12
        );
        assert_relative_eq!(lyapunov_stoch(0.0, &e, &Vector6::zeros(), &z, &g), 5.0, epsilon = 1e-12);
        let b = Vector6::new(3.0, 0.0, 0.0, 100.0, 0.0, 0.0);
        let s = Vector3::new(0.0, 10.0, 0.0);
        assert_relative_eq!(lyapunov_stoch(0.0, &[z], &b, &s, &g), 0.5 * 3.0 + 0.5 + 5.0, epsilon = 1e-12);
    }

    #[test]
    fn columns_match_values() {
        let m = zero_metrics(0.0, 4);
        assert_eq!(StepMetrics::columns(4).len(), m.values().len());
        assert_eq!(
            StepMetrics::columns(2).join(","),
            "t,att_err,pos_err,lm_err_1,lm_err_2,e_1,e_2,bw_err_x,bw_err_y,bw_err_z,bv_err_x,bv_err_y,bv_err_z,lyap"
        );
    }

    #[test]
    fn zero_log_summarizes_to_zero() {
        let log: Vec<_> = (0..80).map(|k| zero_metrics(k as f64 * 0.5, 3)).collect();
        let s = summarize(&log).unwrap();
        assert_eq!(s.tail_samples, 10);
        for c in &s.columns {
            assert_eq!((c.terminal, c.tail_mean, c.tail_max), (0.0, 0.0, 0.0), "{}", c.name);
        }
    }

    #[test]
    fn exponential_decay_tail_mean() {
        let dt = 1e-3;
        let log: Vec<_> = (0..=40_000)
            .map(|k| {
                let t = k as f64 * dt;
                StepMetrics {
                    att_err: (-t).exp(),
                    ..zero_metrics(t, 1)
                }
            })
            .collect();
        let s = summarize(&log).unwrap();
        let exact = ((-35.0f64).exp() - (-40.0f64).exp()) / 5.0;
        let c = s.get("att_err").unwrap();
        assert_relative_eq!(c.tail_mean, exact, max_relative = 2e-3);
        assert_relative_eq!(c.terminal, (-40.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn score_run_rejects_misaligned() {
        let log: Vec<_> = (0..4).map(|k| zero_metrics(k as f64, 1)).collect();
        assert!(score_run(&[0.0, 1.0, 2.0, 3.0], &log).is_ok());
        assert!(matches!(
            score_run(&[0.0, 1.0, 2.5, 3.0], &log),
            Err(MetricsError::Misaligned { index: 2, .. })
        ));
        assert!(matches!(score_run(&[0.0], &log), Err(MetricsError::LengthMismatch { .. })));
        assert!(matches!(summarize(&[]), Err(MetricsError::Empty)));
    }

    #[test]
    fn summary_is_stable_under_landmark_permutation() {
        let make = |perm: &[usize]| -> Vec<StepMetrics> {
            (0..16)
                .map(|k| {
                    let base = [0.1 * k as f64, 2.0, 0.5 + k as f64];
                    StepMetrics {
                        landmark_err: perm.iter().map(|&i| base[i]).collect(),
                        e_norms: perm.iter().map(|&i| base[i] * 0.1).collect(),
                        ..zero_metrics(k as f64, 3)
                    }
                })
                .collect()
        };
        let a = summarize(&make(&[0, 1, 2])).unwrap();
        let b = summarize(&make(&[2, 0, 1])).unwrap();
        for name in ["lm_err_max", "e_max", "att_err", "lyap"] {
            assert_eq!(a.get(name), b.get(name));
        }
        assert_eq!(a.get("lm_err_1").unwrap().tail_mean, b.get("lm_err_2").unwrap().tail_mean);
    }

    #[test]
    fn attitude_error_two_ways() {
        let truth = Pose::new(exp_so3(&Vector3::new(0.3, -1.0, 0.4)), Vector3::zeros());
        let est = Pose::new(exp_so3(&Vector3::new(-0.2, 0.5, 2.0)), Vector3::zeros());
        let (r, _) = pose_error(&truth, &est);
        let direct = attitude_distance(&r);
        let algebra = 0.25 * (3.0 - (est.rotation.matrix() * truth.rotation.matrix().transpose()).trace());
        assert_relative_eq!(direct, algebra, epsilon = 1e-12);
        assert_relative_eq!(attitude_energy(&r, &Matrix3::identity()), direct, epsilon = 1e-12);
    }
}
