//! TOML run configuration.
//!
//! Every field has a default, and the defaults reproduce the reference
//! simulation: a vehicle circling at 0.3 rad/s and 2.5 m/s among four
//! landmarks at `[+-6,0,0]`, `[0,+-6,0]`, biased and noisy velocity
//! measurements, two inertial reference directions, and a 36 degree initial
//! attitude error. Duration (40 s) and step (1 ms) are not part of that
//! scenario's description and are harness choices.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::filters::{Estimator, FilterKind, FilterState, Gains, StepControl};
use crate::manifold::{reorthonormalize, Pose, Rotation};
use crate::metrics::{LyapunovKind, TruthExtras};
use crate::scenario::{normalize_and_augment, InertialReferences, NoiseMode, NoiseSpec, Scenario, TrueState};

type V3 = [f64; 3];
type M3 = [[f64; 3]; 3];

const IDENTITY: M3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn reference_landmarks() -> Vec<V3> {
    vec![[6.0, 0.0, 0.0], [-6.0, 0.0, 0.0], [0.0, 6.0, 0.0], [0.0, -6.0, 0.0]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterName {
    #[serde(rename = "det", alias = "deterministic")]
    Det,
    #[serde(rename = "stoch", alias = "stochastic")]
    Stoch,
}

impl From<FilterName> for FilterKind {
    fn from(f: FilterName) -> Self {
        match f {
            FilterName::Det => FilterKind::Deterministic,
            FilterName::Stoch => FilterKind::Stochastic,
        }
    }
}

impl From<FilterKind> for FilterName {
    fn from(f: FilterKind) -> Self {
        match f {
            FilterKind::Deterministic => FilterName::Det,
            FilterKind::Stochastic => FilterName::Stoch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModeName {
    PerSample,
    Sde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Simulated time (s).
    pub duration: f64,
    /// Frame period (s).
    pub dt: f64,
    /// Seed of the measurement-noise generator.
    pub seed: u64,
    pub filter: FilterName,
    /// Write one state snapshot every `stride` frames.
    pub stride: usize,
    /// Also write the generated measurements and truth as replayable CSV.
    pub record_inputs: bool,
    pub scenario: ScenarioConfig,
    pub noise: NoiseConfig,
    pub gains: GainsConfig,
    pub initial: InitialConfig,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// True body-frame angular velocity (rad/s).
    pub angular_velocity: V3,
    /// True body-frame translational velocity (m/s).
    pub translational_velocity: V3,
    /// Row-major.
    pub initial_rotation: M3,
    pub initial_position: V3,
    pub landmarks: Vec<V3>,
    /// Inertial-frame reference directions observed by the IMU.
    pub references: Vec<V3>,
    /// Confidence weights, one per reference. Empty means uniform.
    pub reference_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub bias_angular: V3,
    pub bias_translational: V3,
    pub std_angular: V3,
    pub std_translational: V3,
    /// Per-landmark measurement bias; empty means zero.
    pub landmark_bias: Vec<V3>,
    pub landmark_std: Vec<V3>,
    /// Per-reference IMU vector bias; empty means zero.
    pub imu_bias: Vec<V3>,
    pub imu_std: Vec<V3>,
    pub mode: NoiseModeName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k_b: f64,
    pub k_sigma: f64,
    pub gamma1: V3,
    pub gamma2: V3,
    pub gamma_sigma: f64,
    /// One weight per landmark. Empty means 0.05 for every landmark.
    pub alpha: Vec<f64>,
    pub varrho: f64,
    pub k_w: f64,
    pub k_p: f64,
    pub gamma_det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// Row-major; projected onto SO(3) at load.
    pub rotation: M3,
    pub position: V3,
    /// Empty means every landmark estimate starts at the origin.
    pub landmarks: Vec<V3>,
    /// `[b_omega; b_v]`.
    pub bias: [f64; 6],
    pub sigma: V3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub courant: f64,
    pub max_substeps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            duration: 40.0,
            dt: 1e-3,
            seed: 42,
            filter: FilterName::Stoch,
            stride: 1,
            record_inputs: false,
            scenario: ScenarioConfig::default(),
            noise: NoiseConfig::default(),
            gains: GainsConfig::default(),
            initial: InitialConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            angular_velocity: [0.0, 0.0, 0.3],
            translational_velocity: [2.5, 0.0, 0.0],
            initial_rotation: IDENTITY,
            initial_position: [0.0, 0.0, 3.0],
            landmarks: reference_landmarks(),
            references: vec![[-1.0, 1.0, 1.1], [0.0, 0.0, 1.3]],
            reference_weights: Vec::new(),
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            bias_angular: [0.1, -0.1, -0.1],
            bias_translational: [0.08, 0.07, -0.06],
            std_angular: [0.2; 3],
            std_translational: [0.2; 3],
            landmark_bias: Vec::new(),
            landmark_std: Vec::new(),
            imu_bias: Vec::new(),
            imu_std: Vec::new(),
            mode: NoiseModeName::PerSample,
        }
    }
}

impl Default for GainsConfig {
    fn default() -> Self {
        GainsConfig {
            k1: 10.0,
            k2: 10.0,
            k3: 10.0,
            k_b: 1e-13,
            k_sigma: 0.02,
            gamma1: [3.0; 3],
            gamma2: [10_000.0; 3],
            gamma_sigma: 10.0,
            alpha: Vec::new(),
            varrho: 0.5,
            k_w: 1.0,
            k_p: 20.0,
            gamma_det: 1.0,
        }
    }
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            rotation: [[0.8090, -0.5878, 0.0], [0.5878, 0.8090, 0.0], [0.0, 0.0, 1.0]],
            position: [0.0; 3],
            landmarks: Vec::new(),
            bias: [0.0; 6],
            sigma: [0.0; 3],
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        let c = StepControl::default();
        SolverConfig {
            courant: c.courant,
            max_substeps: c.max_substeps,
        }
    }
}

fn v3(a: &V3) -> Vector3<f64> {
    Vector3::from_column_slice(a)
}

fn m3(a: &M3) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| a[r][c])
}

fn v3s(a: &[V3]) -> Vec<Vector3<f64>> {
    a.iter().map(v3).collect()
}

fn rotation(a: &M3, what: &str) -> Result<Rotation, HarnessError> {
    reorthonormalize(&m3(a)).map_err(|e| HarnessError::Config(format!("{what}: {e}")))
}

fn config_err(what: &str) -> impl Fn(String) -> HarnessError + '_ {
    move |msg| HarnessError::Config(format!("{what}: {msg}"))
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Full effective configuration, defaults included.
    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Number of frames, `round(duration / dt)`.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn filter_kind(&self) -> FilterKind {
        self.filter.into()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(HarnessError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return Err(HarnessError::Config(format!(
                "duration {} must be at least dt {}",
                self.duration, self.dt
            )));
        }
        if self.stride == 0 {
            return Err(HarnessError::Config("stride must be at least 1".into()));
        }
        if !(self.solver.courant > 0.0 && self.solver.courant.is_finite()) || self.solver.max_substeps == 0 {
            return Err(HarnessError::Config("solver.courant and solver.max_substeps must be positive".into()));
        }
        self.true_state()?;
        self.references()?;
        self.noise_spec(self.seed)?;
        let n = self.scenario.landmarks.len();
        self.gains()?
            .validate(n)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let st = self.initial_state()?;
        if st.landmarks.len() != n {
            return Err(HarnessError::Config(format!(
                "initial.landmarks has {} entries for {n} landmarks",
                st.landmarks.len()
            )));
        }
        Ok(())
    }

    pub fn true_state(&self) -> Result<TrueState, HarnessError> {
        let r = rotation(&self.scenario.initial_rotation, "scenario.initial_rotation")?;
        TrueState::new(
            Pose::new(r, v3(&self.scenario.initial_position)),
            v3s(&self.scenario.landmarks),
        )
        .map_err(|e| config_err("scenario.landmarks")(e.to_string()))
    }

    pub fn references(&self) -> Result<InertialReferences, HarnessError> {
        let vectors = v3s(&self.scenario.references);
        let weights = if self.scenario.reference_weights.is_empty() {
            vec![1.0; vectors.len()]
        } else {
            self.scenario.reference_weights.clone()
        };
        let refs = InertialReferences::new(vectors, weights)
            .map_err(|e| config_err("scenario.references")(e.to_string()))?;
        // The augmented set must be usable by the stochastic filter.
        let body: Vec<_> = refs.vectors.clone();
        normalize_and_augment(&refs, &body).map_err(|e| config_err("scenario.references")(e.to_string()))?;
        Ok(refs)
    }

    pub fn noise_spec(&self, seed: u64) -> Result<NoiseSpec, HarnessError> {
        let n = &self.noise;
        let spec = NoiseSpec {
            bias_angular: v3(&n.bias_angular),
            bias_translational: v3(&n.bias_translational),
            std_angular: v3(&n.std_angular),
            std_translational: v3(&n.std_translational),
            landmark_bias: v3s(&n.landmark_bias),
            landmark_std: v3s(&n.landmark_std),
            imu_bias: v3s(&n.imu_bias),
            imu_std: v3s(&n.imu_std),
            mode: match n.mode {
                NoiseModeName::PerSample => NoiseMode::PerSample,
                NoiseModeName::Sde => NoiseMode::Sde,
            },
            seed,
        };
        spec.validate().map_err(|e| config_err("noise")(e.to_string()))?;
        Ok(spec)
    }

    pub fn gains(&self) -> Result<Gains, HarnessError> {
        let g = &self.gains;
        let n = self.scenario.landmarks.len();
        Ok(Gains {
            k1: g.k1,
            k2: g.k2,
            k3: g.k3,
            k_b: g.k_b,
            k_sigma: g.k_sigma,
            gamma1: v3(&g.gamma1),
            gamma2: v3(&g.gamma2),
            gamma_sigma: g.gamma_sigma,
            alpha: if g.alpha.is_empty() { vec![0.05; n] } else { g.alpha.clone() },
            varrho: g.varrho,
            k_w: g.k_w,
            k_p: g.k_p,
            gamma_det: g.gamma_det,
        })
    }

    pub fn initial_state(&self) -> Result<FilterState, HarnessError> {
        let i = &self.initial;
        let r = rotation(&i.rotation, "initial.rotation")?;
        let landmarks = if i.landmarks.is_empty() {
            vec![Vector3::zeros(); self.scenario.landmarks.len()]
        } else {
            v3s(&i.landmarks)
        };
        let mut st = FilterState::new(Pose::new(r, v3(&i.position)), landmarks);
        st.bias = nalgebra::Vector6::from_column_slice(&i.bias);
        st.sigma = v3(&i.sigma);
        Ok(st)
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            courant: self.solver.courant,
            max_substeps: self.solver.max_substeps,
        }
    }

    pub fn estimator(&self) -> Result<Estimator, HarnessError> {
        Estimator::new(self.filter_kind(), self.initial_state()?, self.gains()?, self.step_control())
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn scenario(&self) -> Result<Scenario, HarnessError> {
        Scenario::new(
            self.true_state()?,
            v3(&self.scenario.angular_velocity),
            v3(&self.scenario.translational_velocity),
            self.references()?,
            self.noise_spec(self.seed)?,
        )
        .map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Bias and covariance bound the metrics treat as truth.
    pub fn truth_extras(&self) -> Result<TruthExtras, HarnessError> {
        let spec = self.noise_spec(self.seed)?;
        Ok(TruthExtras {
            bias: spec.velocity_bias(),
            sigma: Some(spec.covariance_bound()),
        })
    }

    pub fn lyapunov_kind(&self) -> Result<LyapunovKind, HarnessError> {
        Ok(match self.filter_kind() {
            FilterKind::Deterministic => LyapunovKind::Deterministic,
            FilterKind::Stochastic => {
                let refs = self.references()?;
                let pairs = normalize_and_augment(&refs, &refs.vectors)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                LyapunovKind::Stochastic(pairs.reference_matrix())
            }
        })
    }

    /// Noise-free variant: zero bias, zero noise everywhere.
    pub fn without_noise(mut self) -> Self {
        let mode = self.noise.mode;
        self.noise = NoiseConfig {
            bias_angular: [0.0; 3],
            bias_translational: [0.0; 3],
            std_angular: [0.0; 3],
            std_translational: [0.0; 3],
            landmark_bias: Vec::new(),
            landmark_std: Vec::new(),
            imu_bias: Vec::new(),
            imu_std: Vec::new(),
            mode,
        };
        self
    }
}
