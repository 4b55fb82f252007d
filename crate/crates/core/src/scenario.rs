//! Ground-truth world and the sensor corruption pipeline.
//!
//! The true vehicle moves with a constant body-frame twist among fixed
//! landmarks. Measurements are produced the way a low-cost sensor suite would
//! report them: velocities with constant bias plus Gaussian noise, body-frame
//! landmark positions, and body-frame observations of known inertial
//! directions (gravity, magnetic field, ...).

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::manifold::{integrate_pose, reorthonormalize, ManifoldError, Pose, Rotation, Twist};

/// Pairs whose cross product is shorter than this are treated as collinear.
pub const COLLINEAR_TOL: f64 = 1e-6;

/// Measured vectors shorter than this cannot be normalized.
pub const MIN_VECTOR_NORM: f64 = 1e-9;

/// The truth pose is re-projected onto SO(3) at this cadence.
pub const TRUTH_REORTHONORMALIZE_EVERY: u64 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("at least three landmarks are required, got {0}")]
    TooFewLandmarks(usize),
    #[error("at least two inertial reference vectors are required, got {0}")]
    TooFewReferences(usize),
    #[error("reference weights: {0}")]
    BadWeights(String),
    #[error("inertial reference vectors are collinear (|v1 x v2| = {0:.3e})")]
    Collinear(f64),
    #[error("vector {index} has near-zero norm {norm:.3e}")]
    DegenerateVector { index: usize, norm: f64 },
    #[error("measured {measured} vectors for {expected} references")]
    CountMismatch { expected: usize, measured: usize },
    #[error("noise specification: {0}")]
    BadNoise(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

/// True SLAM configuration: the vehicle pose and the fixed landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueState {
    pub pose: Pose,
    pub landmarks: Vec<Vector3<f64>>,
}

impl TrueState {
    pub fn new(pose: Pose, landmarks: Vec<Vector3<f64>>) -> Result<Self, ScenarioError> {
        if landmarks.len() < 3 {
            return Err(ScenarioError::TooFewLandmarks(landmarks.len()));
        }
        Ok(TrueState { pose, landmarks })
    }
}

/// How velocity noise samples are scaled with the step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// Each frame draws `N(0, std^2)` independently of `dt`.
    #[default]
    PerSample,
    /// `std` is a diffusion intensity; each frame draws `N(0, std^2 / dt)`, so
    /// the integrated displacement noise is a Brownian increment.
    Sde,
}

/// Biases and noise levels for every sensor channel.
///
/// Per-landmark and per-reference vectors may be left empty, which means zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub bias_angular: Vector3<f64>,
    pub bias_translational: Vector3<f64>,
    pub std_angular: Vector3<f64>,
    pub std_translational: Vector3<f64>,
    pub landmark_bias: Vec<Vector3<f64>>,
    pub landmark_std: Vec<Vector3<f64>>,
    pub imu_bias: Vec<Vector3<f64>>,
    pub imu_std: Vec<Vector3<f64>>,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseSpec {
    /// No bias and no noise anywhere.
    pub fn clean(seed: u64) -> Self {
        NoiseSpec {
            bias_angular: Vector3::zeros(),
            bias_translational: Vector3::zeros(),
            std_angular: Vector3::zeros(),
            std_translational: Vector3::zeros(),
            landmark_bias: Vec::new(),
            landmark_std: Vec::new(),
            imu_bias: Vec::new(),
            imu_std: Vec::new(),
            mode: NoiseMode::PerSample,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let all_std = [self.std_angular, self.std_translational]
            .into_iter()
            .chain(self.landmark_std.iter().copied())
            .chain(self.imu_std.iter().copied());
        for s in all_std {
            if s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(ScenarioError::BadNoise(format!(
                    "standard deviations must be finite and >= 0, got {:?}",
                    s.as_slice()
                )));
            }
        }
        Ok(())
    }

    /// Stacked velocity bias `[b_omega; b_v]`.
    pub fn velocity_bias(&self) -> nalgebra::Vector6<f64> {
        let mut b = nalgebra::Vector6::zeros();
        b.fixed_rows_mut::<3>(0).copy_from(&self.bias_angular);
        b.fixed_rows_mut::<3>(3).copy_from(&self.bias_translational);
        b
    }

    /// Per-axis upper bound of the velocity noise covariance,
    /// `max(Q_omega^2, Q_v^2)` elementwise.
    pub fn covariance_bound(&self) -> Vector3<f64> {
        self.std_angular
            .component_mul(&self.std_angular)
            .zip_map(&self.std_translational.component_mul(&self.std_translational), f64::max)
    }

    fn landmark_bias_at(&self, i: usize) -> Vector3<f64> {
        self.landmark_bias.get(i).copied().unwrap_or_else(Vector3::zeros)
    }

    fn landmark_std_at(&self, i: usize) -> Vector3<f64> {
        self.landmark_std.get(i).copied().unwrap_or_else(Vector3::zeros)
    }

    fn imu_bias_at(&self, j: usize) -> Vector3<f64> {
        self.imu_bias.get(j).copied().unwrap_or_else(Vector3::zeros)
    }

    fn imu_std_at(&self, j: usize) -> Vector3<f64> {
        self.imu_std.get(j).copied().unwrap_or_else(Vector3::zeros)
    }
}

/// Known inertial-frame directions observed by the IMU, with confidence weights.
#[derive(Debug, Clone, PartialEq)]
pub struct InertialReferences {
    pub vectors: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl InertialReferences {
    pub fn new(vectors: Vec<Vector3<f64>>, weights: Vec<f64>) -> Result<Self, ScenarioError> {
        if vectors.len() < 2 {
            return Err(ScenarioError::TooFewReferences(vectors.len()));
        }
        if weights.len() != vectors.len() {
            return Err(ScenarioError::BadWeights(format!(
                "{} weights for {} vectors",
                weights.len(),
                vectors.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(ScenarioError::BadWeights("weights must be >= 0 with a positive sum".into()));
        }
        for (index, v) in vectors.iter().enumerate() {
            let norm = v.norm();
            if !(norm > MIN_VECTOR_NORM) {
                return Err(ScenarioError::DegenerateVector { index, norm });
            }
        }
        let units: Vec<_> = vectors.iter().map(|v| v.normalize()).collect();
        let best = units
            .iter()
            .enumerate()
            .flat_map(|(a, u)| units[a + 1..].iter().map(move |w| u.cross(w).norm()))
            .fold(0.0, f64::max);
        if best < COLLINEAR_TOL {
            return Err(ScenarioError::Collinear(best));
        }
        Ok(InertialReferences { vectors, weights })
    }

    /// Equal unit weights.
    pub fn uniform(vectors: Vec<Vector3<f64>>) -> Result<Self, ScenarioError> {
        let n = vectors.len();
        Self::new(vectors, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Paired unit directions `(inertial, body)` with weights summing to 3.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuPairs {
    pub pairs: Vec<(Vector3<f64>, Vector3<f64>)>,
    pub weights: Vec<f64>,
}

impl ImuPairs {
    /// `M = sum_j s_j r_j r_j^T` over the inertial directions.
    pub fn reference_matrix(&self) -> Matrix3<f64> {
        self.pairs
            .iter()
            .zip(&self.weights)
            .fold(Matrix3::zeros(), |acc, ((r, _), s)| acc + r * r.transpose() * *s)
    }

    /// Smallest eigenvalue of `Tr{M} I - M`.
    pub fn lambda_min(&self) -> f64 {
        let m = self.reference_matrix();
        let breve = Matrix3::identity() * m.trace() - m;
        SymmetricEigen::new(breve).eigenvalues.min()
    }
}

/// Everything the filters see at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub t: f64,
    pub velocity_meas: Twist,
    /// `(landmark index, body-frame position)`, sorted by index.
    pub landmark_meas: Vec<(usize, Vector3<f64>)>,
    /// Raw body-frame reference observations before normalization.
    pub imu_raw: Vec<Vector3<f64>>,
    pub imu: ImuPairs,
}

impl MeasurementFrame {
    /// Landmark observations in index order.
    pub fn landmarks(&self) -> Vec<Vector3<f64>> {
        self.landmark_meas.iter().map(|(_, y)| *y).collect()
    }
}

/// Advances the true pose by one step; landmarks are fixed.
pub fn propagate_truth(
    state: &TrueState,
    angular: &Vector3<f64>,
    translational: &Vector3<f64>,
    dt: f64,
) -> TrueState {
    TrueState {
        pose: integrate_pose(&state.pose, &Twist::new(*angular, *translational), dt),
        landmarks: state.landmarks.clone(),
    }
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, std: &Vector3<f64>) -> Vector3<f64> {
    let z: [f64; 3] = [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ];
    Vector3::new(z[0] * std.x, z[1] * std.y, z[2] * std.z)
}

/// `U_m = U + b_U + n_U`.
pub fn measure_velocity<R: Rng + ?Sized>(
    angular: &Vector3<f64>,
    translational: &Vector3<f64>,
    spec: &NoiseSpec,
    dt: f64,
    rng: &mut R,
) -> Twist {
    let scale = match spec.mode {
        NoiseMode::PerSample => 1.0,
        NoiseMode::Sde => 1.0 / dt.sqrt(),
    };
    let n_w = gaussian3(rng, &(spec.std_angular * scale));
    let n_v = gaussian3(rng, &(spec.std_translational * scale));
    Twist::new(
        angular + spec.bias_angular + n_w,
        translational + spec.bias_translational + n_v,
    )
}

/// `y_i = R^T (p_i - P) + b_i + n_i`.
pub fn measure_landmarks<R: Rng + ?Sized>(
    pose: &Pose,
    landmarks: &[Vector3<f64>],
    spec: &NoiseSpec,
    rng: &mut R,
) -> Vec<Vector3<f64>> {
    let rt = pose.rotation.matrix().transpose();
    landmarks
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let noise = gaussian3(rng, &spec.landmark_std_at(i));
            rt * (p - pose.position) + spec.landmark_bias_at(i) + noise
        })
        .collect()
}

/// `a_j = R^T r_j + b_j + n_j`.
pub fn measure_imu_vectors<R: Rng + ?Sized>(
    rotation: &Rotation,
    refs: &InertialReferences,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Vec<Vector3<f64>> {
    let rt = rotation.matrix().transpose();
    refs.vectors
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let noise = gaussian3(rng, &spec.imu_std_at(j));
            rt * r + spec.imu_bias_at(j) + noise
        })
        .collect()
}

/// Normalizes reference/measurement pairs and, for exactly two pairs, appends
/// their cross product so the set has rank 3. Weights are rescaled to sum to 3.
///
/// The augmented pair takes the mean weight of the two measured pairs.
pub fn normalize_and_augment(
    refs: &InertialReferences,
    meas: &[Vector3<f64>],
) -> Result<ImuPairs, ScenarioError> {
    if refs.len() < 2 {
        return Err(ScenarioError::TooFewReferences(refs.len()));
    }
    if meas.len() != refs.len() {
        return Err(ScenarioError::CountMismatch {
            expected: refs.len(),
            measured: meas.len(),
        });
    }
    let mut pairs = Vec::with_capacity(refs.len() + 1);
    for (index, (r, a)) in refs.vectors.iter().zip(meas).enumerate() {
        let (rn, an) = (r.norm(), a.norm());
        if !(rn > MIN_VECTOR_NORM) {
            return Err(ScenarioError::DegenerateVector { index, norm: rn });
        }
        if !(an > MIN_VECTOR_NORM) {
            return Err(ScenarioError::DegenerateVector { index, norm: an });
        }
        pairs.push((r / rn, a / an));
    }
    let mut weights = refs.weights.clone();
    if pairs.len() == 2 {
        let cr = pairs[0].0.cross(&pairs[1].0);
        let ca = pairs[0].1.cross(&pairs[1].1);
        let shortest = cr.norm().min(ca.norm());
        if shortest < COLLINEAR_TOL {
            return Err(ScenarioError::Collinear(shortest));
        }
        pairs.push((cr.normalize(), ca.normalize()));
        weights.push(0.5 * (weights[0] + weights[1]));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(ScenarioError::BadWeights("weights sum to zero".into()));
    }
    let weights = weights.into_iter().map(|w| 3.0 * w / total).collect();
    Ok(ImuPairs { pairs, weights })
}

/// A seeded, single-owner generator of truth and measurement frames for a
/// constant-twist trajectory.
#[derive(Debug, Clone)]
pub struct Scenario {
    truth: TrueState,
    angular: Vector3<f64>,
    translational: Vector3<f64>,
    refs: InertialReferences,
    noise: NoiseSpec,
    rng: ChaCha20Rng,
    steps: u64,
}

impl Scenario {
    pub fn new(
        truth: TrueState,
        angular: Vector3<f64>,
        translational: Vector3<f64>,
        refs: InertialReferences,
        noise: NoiseSpec,
    ) -> Result<Self, ScenarioError> {
        noise.validate()?;
        let rng = ChaCha20Rng::seed_from_u64(noise.seed);
        Ok(Scenario {
            truth,
            angular,
            translational,
            refs,
            noise,
            rng,
            steps: 0,
        })
    }

    pub fn truth(&self) -> &TrueState {
        &self.truth
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn references(&self) -> &InertialReferences {
        &self.refs
    }

    pub fn true_twist(&self) -> Twist {
        Twist::new(self.angular, self.translational)
    }

    /// Samples the sensors at the current truth. Draw order is fixed:
    /// velocity, landmarks, then IMU vectors.
    pub fn measure(&mut self, t: f64, dt: f64) -> Result<MeasurementFrame, ScenarioError> {
        let velocity_meas =
            measure_velocity(&self.angular, &self.translational, &self.noise, dt, &mut self.rng);
        let ys = measure_landmarks(&self.truth.pose, &self.truth.landmarks, &self.noise, &mut self.rng);
        let imu_raw = measure_imu_vectors(&self.truth.pose.rotation, &self.refs, &self.noise, &mut self.rng);
        let imu = normalize_and_augment(&self.refs, &imu_raw)?;
        Ok(MeasurementFrame {
            t,
            velocity_meas,
            landmark_meas: ys.into_iter().enumerate().collect(),
            imu_raw,
            imu,
        })
    }

    /// Moves the truth forward by `dt`.
    pub fn advance(&mut self, dt: f64) -> Result<(), ScenarioError> {
        self.truth = propagate_truth(&self.truth, &self.angular, &self.translational, dt);
        self.steps += 1;
        if self.steps % TRUTH_REORTHONORMALIZE_EVERY == 0 {
            self.truth.pose.rotation = reorthonormalize(self.truth.pose.rotation.matrix())?;
        }
        Ok(())
    }
}
