//! Nonlinear SLAM estimators on SE(3) x landmarks.
//!
//! Two filters share one state layout:
//!
//! * [`deterministic`] uses landmark and velocity measurements only. It drives
//!   the landmark innovations to zero but leaves the pose error at whatever
//!   constant the initial condition dictates.
//! * [`stochastic`] additionally uses body-frame observations of known
//!   inertial directions, estimates an upper bound of the velocity-noise
//!   covariance, and drives the attitude error to a neighbourhood of identity.
//!
//! Both are continuous-time laws. Each `*_step` call holds one
//! [`MeasurementFrame`] constant over `dt` and integrates the laws with forward
//! Euler for landmarks, bias and covariance bound and the exponential map for
//! the pose. When the instantaneous gains make `dt` too coarse, the frame is
//! split into sub-steps (see [`StepControl`]).

pub mod deterministic;
pub mod innovation;
pub mod stochastic;

use nalgebra::{Matrix6, Vector3, Vector6};
use thiserror::Error;

use crate::manifold::{reorthonormalize, ManifoldError, Pose, ROTATION_TOL};
use crate::scenario::{MeasurementFrame, ScenarioError};

pub use deterministic::{det_rates, det_step, DetRates};
pub use innovation::{
    attitude_innovation, innovation_bundle, landmark_innovation, landmark_innovations,
    AttitudeInnovation, InnovationBundle,
};
pub use stochastic::{stoch_adaptation, stoch_correction, stoch_landmark_rates, stoch_step};

/// Lower clamp on `tau_w = lambda_min (1 + pi)`.
pub const TAU_W_FLOOR: f64 = 1e-6;

/// Largest condition number accepted for the estimated-vector matrix whose
/// inverse appears in `pi`.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("landmark index {index} out of range for {count} landmarks")]
    LandmarkIndex { index: usize, count: usize },
    #[error("expected {expected} landmark measurements, got {got}")]
    LandmarkCount { expected: usize, got: usize },
    #[error("attitude innovation matrix is singular (condition number {0:.3e})")]
    Singular(f64),
    #[error("attitude error is on the unstable set (tau_w = {0:.3e} <= 0)")]
    UnstableSet(f64),
    #[error("invalid gains: {0}")]
    Gains(String),
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error("non-finite filter state after integration")]
    NonFinite,
    #[error("frame needs more than {0} sub-steps")]
    TooStiff(usize),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Estimated SLAM state.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub pose: Pose,
    pub landmarks: Vec<Vector3<f64>>,
    /// `[b_omega; b_v]`.
    pub bias: Vector6<f64>,
    /// Covariance upper-bound estimate; only the stochastic filter evolves it.
    pub sigma: Vector3<f64>,
}

impl FilterState {
    pub fn new(pose: Pose, landmarks: Vec<Vector3<f64>>) -> Self {
        FilterState {
            pose,
            landmarks,
            bias: Vector6::zeros(),
            sigma: Vector3::zeros(),
        }
    }

    pub fn bias_angular(&self) -> Vector3<f64> {
        self.bias.fixed_rows::<3>(0).into_owned()
    }

    pub fn bias_translational(&self) -> Vector3<f64> {
        self.bias.fixed_rows::<3>(3).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.pose.rotation.matrix().iter().all(|v| v.is_finite())
            && self.pose.position.iter().all(|v| v.is_finite())
            && self.landmarks.iter().flat_map(|p| p.iter()).all(|v| v.is_finite())
            && self.bias.iter().all(|v| v.is_finite())
            && self.sigma.iter().all(|v| v.is_finite())
    }

    /// Re-projects the attitude estimate onto SO(3).
    pub fn reorthonormalize(&mut self) -> Result<(), FilterError> {
        self.pose.rotation = reorthonormalize(self.pose.rotation.matrix())?;
        Ok(())
    }

    fn validate(&self) -> Result<(), FilterError> {
        if !self.is_finite() {
            return Err(FilterError::NonFinite);
        }
        self.pose.rotation.check(ROTATION_TOL)?;
        Ok(())
    }
}

/// Design constants for both filters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k_b: f64,
    pub k_sigma: f64,
    /// Diagonal of the angular-bias adaptation rate.
    pub gamma1: Vector3<f64>,
    /// Diagonal of the translational-bias adaptation rate.
    pub gamma2: Vector3<f64>,
    pub gamma_sigma: f64,
    /// Per-landmark weights.
    pub alpha: Vec<f64>,
    pub varrho: f64,
    /// Deterministic filter correction gain.
    pub k_w: f64,
    /// Deterministic filter landmark gain.
    pub k_p: f64,
    /// Deterministic filter bias adaptation rate (scalar times identity).
    pub gamma_det: f64,
}

impl Gains {
    /// Checks positivity of every constant, one alpha per landmark, and
    /// `k2 > 9/4`.
    pub fn validate(&self, n: usize) -> Result<(), FilterError> {
        let scalars = [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k_b", self.k_b),
            ("k_sigma", self.k_sigma),
            ("gamma_sigma", self.gamma_sigma),
            ("varrho", self.varrho),
            ("k_w", self.k_w),
            ("k_p", self.k_p),
            ("gamma_det", self.gamma_det),
        ];
        for (name, v) in scalars {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FilterError::Gains(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, g) in [("gamma1", &self.gamma1), ("gamma2", &self.gamma2)] {
            if g.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(FilterError::Gains(format!("{name} entries must be positive")));
            }
        }
        if self.alpha.len() != n {
            return Err(FilterError::Gains(format!(
                "{} alpha weights for {n} landmarks",
                self.alpha.len()
            )));
        }
        for (i, a) in self.alpha.iter().enumerate() {
            if !(*a > 0.0 && a.is_finite()) {
                return Err(FilterError::Gains(format!("alpha[{i}] must be positive, got {a}")));
            }
        }
        if !(self.k2 > 2.25) {
            return Err(FilterError::Gains(format!("k2 = {} must exceed 9/4", self.k2)));
        }
        Ok(())
    }

    /// Block-diagonal `Gamma = diag(Gamma1, Gamma2)`.
    pub fn gamma(&self) -> Matrix6<f64> {
        let mut d = Vector6::zeros();
        d.fixed_rows_mut::<3>(0).copy_from(&self.gamma1);
        d.fixed_rows_mut::<3>(3).copy_from(&self.gamma2);
        Matrix6::from_diagonal(&d)
    }
}

/// Sub-stepping policy. A frame of length `dt` is integrated in pieces no
/// longer than `courant / rate`, where `rate` bounds the fastest local time
/// scale of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub courant: f64,
    pub max_substeps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            courant: 0.25,
            max_substeps: 200_000,
        }
    }
}

impl StepControl {
    /// Length of the next sub-step given the remaining frame time.
    pub(crate) fn substep(&self, rate: f64, remaining: f64) -> f64 {
        let h = if rate > 0.0 && rate.is_finite() {
            self.courant / rate
        } else if rate.is_finite() {
            remaining
        } else {
            0.0
        };
        // Avoid leaving a sliver at the end of the frame.
        if h >= remaining * (1.0 - 1e-12) {
            remaining
        } else {
            h
        }
    }
}

/// Which estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Deterministic,
    Stochastic,
}

impl FilterKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterKind::Deterministic => "det",
            FilterKind::Stochastic => "stoch",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "det" | "deterministic" => Ok(FilterKind::Deterministic),
            "stoch" | "stochastic" => Ok(FilterKind::Stochastic),
            other => Err(format!("unknown filter kind `{other}` (expected det or stoch)")),
        }
    }
}

/// Re-projects the attitude estimate every this many frames.
pub const REORTHONORMALIZE_EVERY: u64 = 1000;

/// A filter instance: state, gains and the stepping policy.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub kind: FilterKind,
    pub state: FilterState,
    pub gains: Gains,
    pub control: StepControl,
    steps: u64,
}

impl Estimator {
    pub fn new(
        kind: FilterKind,
        state: FilterState,
        gains: Gains,
        control: StepControl,
    ) -> Result<Self, FilterError> {
        gains.validate(state.landmarks.len())?;
        state.validate()?;
        Ok(Estimator {
            kind,
            state,
            gains,
            control,
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Advances the estimate over one frame.
    pub fn step(&mut self, frame: &MeasurementFrame, dt: f64) -> Result<(), FilterError> {
        let next = match self.kind {
            FilterKind::Deterministic => det_step(
                &self.state,
                &frame.velocity_meas,
                &frame.landmarks(),
                &self.gains,
                dt,
                &self.control,
            )?,
            FilterKind::Stochastic => stoch_step(&self.state, frame, &self.gains, dt, &self.control)?,
        };
        self.state = next;
        self.steps += 1;
        if self.steps % REORTHONORMALIZE_EVERY == 0 {
            self.state.reorthonormalize()?;
        }
        Ok(())
    }
}
