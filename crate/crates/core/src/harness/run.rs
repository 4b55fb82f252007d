//! Closed-loop simulation.

use rayon::prelude::*;

use super::{HarnessError, RunConfig};
use crate::filters::{landmark_innovations, Estimator, FilterState};
use crate::manifold::Pose;
use crate::metrics::{step_metrics, summarize, LyapunovKind, RunSummary, StepMetrics, TruthExtras};
use crate::scenario::{MeasurementFrame, TrueState};

/// Filter state at one frame, before that frame's update.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub state: FilterState,
}

/// Measurements and true poses of a run, one entry per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedInputs {
    pub frames: Vec<MeasurementFrame>,
    pub truth: Vec<Pose>,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    /// Effective configuration, seed included.
    pub config: RunConfig,
    /// One row per frame, scored before the frame's update.
    pub metrics: Vec<StepMetrics>,
    /// Every `stride`-th frame.
    pub snapshots: Vec<Snapshot>,
    pub recorded: Option<RecordedInputs>,
    pub warnings: Vec<String>,
    /// Estimate after the last update, re-projected onto SO(3).
    pub final_state: FilterState,
}

impl RunLog {
    pub fn summary(&self) -> Result<RunSummary, HarnessError> {
        summarize(&self.metrics).map_err(|e| HarnessError::numeric(self.metrics.len(), f64::NAN, e))
    }
}

/// Scoring and stepping shared by simulation and replay.
pub(crate) struct Driver {
    est: Estimator,
    extras: TruthExtras,
    kind: LyapunovKind,
    stride: usize,
    metrics: Vec<StepMetrics>,
    snapshots: Vec<Snapshot>,
}

impl Driver {
    pub(crate) fn new(config: &RunConfig) -> Result<Self, HarnessError> {
        Ok(Driver {
            est: config.estimator()?,
            extras: config.truth_extras()?,
            kind: config.lyapunov_kind()?,
            stride: config.stride,
            metrics: Vec::new(),
            snapshots: Vec::new(),
        })
    }

    /// Scores the current estimate against `truth` and snapshots it.
    pub(crate) fn observe(
        &mut self,
        step: usize,
        truth: &TrueState,
        frame: &MeasurementFrame,
    ) -> Result<(), HarnessError> {
        let t = frame.t;
        let state = &self.est.state;
        let e = landmark_innovations(state, &frame.landmarks()).map_err(|e| HarnessError::numeric(step, t, e))?;
        let m = step_metrics(t, truth, state, &e, &self.extras, &self.est.gains, &self.kind)
            .map_err(|e| HarnessError::numeric(step, t, e))?;
        self.metrics.push(m);
        if step % self.stride == 0 {
            self.snapshots.push(Snapshot {
                step,
                t,
                state: state.clone(),
            });
        }
        Ok(())
    }

    pub(crate) fn finish(mut self, step: usize, t: f64) -> Result<(Vec<StepMetrics>, Vec<Snapshot>, FilterState), HarnessError> {
        self.est
            .state
            .reorthonormalize()
            .map_err(|e| HarnessError::numeric(step, t, e))?;
        Ok((self.metrics, self.snapshots, self.est.state))
    }

    pub(crate) fn step(&mut self, step: usize, frame: &MeasurementFrame, dt: f64) -> Result<(), HarnessError> {
        self.est
            .step(frame, dt)
            .map_err(|e| HarnessError::numeric(step, frame.t, e))
    }
}

/// Runs the configured scenario for `round(duration / dt)` frames.
///
/// Each frame: sample the sensors at the current truth, score the estimate,
/// update the filter over `dt`, then move the truth. Output depends only on
/// `config`.
pub fn run_simulation(config: &RunConfig) -> Result<RunLog, HarnessError> {
    config.validate()?;
    let mut scenario = config.scenario()?;
    let mut driver = Driver::new(config)?;
    let dt = config.dt;
    let n = config.steps();
    let mut recorded = config.record_inputs.then(|| RecordedInputs {
        frames: Vec::with_capacity(n),
        truth: Vec::with_capacity(n),
    });
    for k in 0..n {
        let t = k as f64 * dt;
        let frame = scenario.measure(t, dt).map_err(|e| HarnessError::numeric(k, t, e))?;
        driver.observe(k, scenario.truth(), &frame)?;
        driver.step(k, &frame, dt)?;
        if let Some(rec) = recorded.as_mut() {
            rec.truth.push(scenario.truth().pose);
            rec.frames.push(frame);
        }
        scenario.advance(dt).map_err(|e| HarnessError::numeric(k, t, e))?;
    }
    let (metrics, snapshots, final_state) = driver.finish(n, n as f64 * dt)?;
    Ok(RunLog {
        config: config.clone(),
        metrics,
        snapshots,
        recorded,
        warnings: Vec::new(),
        final_state,
    })
}

/// Runs `trials` independent copies with seeds `seed, seed + 1, ...` in
/// parallel. Results are in seed order.
pub fn run_trials(config: &RunConfig, trials: usize) -> Result<Vec<RunLog>, HarnessError> {
    config.validate()?;
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let cfg = RunConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..config.clone()
            };
            run_simulation(&cfg)
        })
        .collect()
}
