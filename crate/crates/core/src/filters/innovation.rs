//! Innovation signals computed from measurements and the current estimate.

use nalgebra::{Matrix3, SymmetricEigen, Vector3, Vector6};

use super::{FilterError, FilterState, MAX_CONDITION, TAU_W_FLOOR};
use crate::manifold::{exp_so3, Rotation, Twist};
use crate::scenario::ImuPairs;

/// Attitude innovation terms built from the IMU direction pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeInnovation {
    /// `Upsilon(R~ M)`, expressed through the measured vectors.
    pub ups: Vector3<f64>,
    /// `E = ||R~ M||_I`.
    pub e_att: f64,
    /// `pi(R~, M) = Tr{R~ M M^-1}`.
    pub pi: f64,
    /// Smallest eigenvalue of `Tr{M} I - M`.
    pub lambda_min: f64,
}

/// Every innovation quantity one stochastic-filter evaluation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationBundle {
    pub e: Vec<Vector3<f64>>,
    pub ups: Vector3<f64>,
    pub e_att: f64,
    pub pi: f64,
    pub lambda_min: f64,
    pub tau_b: f64,
    pub tau_sigma: f64,
    pub tau_w: f64,
}

/// `e_i = p^_i - R^ y_i - P^`.
pub fn landmark_innovation(
    state: &FilterState,
    y_i: &Vector3<f64>,
    i: usize,
) -> Result<Vector3<f64>, FilterError> {
    let p_hat = state.landmarks.get(i).ok_or(FilterError::LandmarkIndex {
        index: i,
        count: state.landmarks.len(),
    })?;
    Ok(p_hat - state.pose.rotation.matrix() * y_i - state.pose.position)
}

/// All landmark innovations; `ys` must hold one measurement per landmark.
pub fn landmark_innovations(
    state: &FilterState,
    ys: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>, FilterError> {
    if ys.len() != state.landmarks.len() {
        return Err(FilterError::LandmarkCount {
            expected: state.landmarks.len(),
            got: ys.len(),
        });
    }
    ys.iter()
        .enumerate()
        .map(|(i, y)| landmark_innovation(state, y, i))
        .collect()
}

/// `G_i^T e_i = [[y_i]x R^T e_i; R^T e_i]` where `G_i = [-R^ [y_i]x, R^]` is the
/// twist-to-innovation map. `r_hat_t` is `R^T`.
pub(crate) fn regressor_t(r_hat_t: &Matrix3<f64>, y: &Vector3<f64>, e: &Vector3<f64>) -> Vector6<f64> {
    let body = r_hat_t * e;
    let ang = y.cross(&body);
    Vector6::new(ang.x, ang.y, ang.z, body.x, body.y, body.z)
}

/// Nominal motion inside one frame.
///
/// The truth propagator advances a full frame with the angular rate applied
/// through the exponential and the translational velocity held in the
/// frame-start heading. Sub-steps of a filter replay that same path with the
/// bias-corrected measured twist `(omega, v)`: at elapsed time `tau` the
/// body axes have turned by `exp(omega tau)` and the body has moved `v tau`
/// along the frame-start axes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FrameHold {
    pub omega: Vector3<f64>,
    pub v: Vector3<f64>,
}

/// [`FrameHold`] evaluated at one elapsed time.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HoldAt {
    /// `exp(-omega tau)`, mapping frame-start body axes to current ones.
    pub back: Matrix3<f64>,
    pub shift: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl FrameHold {
    pub fn new(u_m: &Twist, bias_angular: Vector3<f64>, bias_translational: Vector3<f64>) -> Self {
        FrameHold {
            omega: u_m.angular - bias_angular,
            v: u_m.translational - bias_translational,
        }
    }

    pub fn at(&self, tau: f64) -> HoldAt {
        HoldAt {
            back: exp_so3(&(-self.omega * tau)).into_inner(),
            shift: self.v * tau,
            v: self.v,
        }
    }
}

impl HoldAt {
    /// Frame-start landmark observations seen from the current body pose.
    pub fn landmarks(&self, y: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        y.iter().map(|yi| self.back * (yi - self.shift)).collect()
    }

    /// Frame-start IMU directions seen from the current body axes.
    pub fn pairs(&self, pairs: &ImuPairs) -> ImuPairs {
        ImuPairs {
            pairs: pairs.pairs.iter().map(|(r, a)| (*r, self.back * a)).collect(),
            weights: pairs.weights.clone(),
        }
    }

    /// Correction to a body-frame translational velocity so the nominal part
    /// stays in the frame-start heading.
    pub fn heading_fix(&self) -> Vector3<f64> {
        self.back * self.v - self.v
    }
}

/// Attitude innovation from reference/body unit-vector pairs.
///
/// With `v^_j = R^T r_j` the estimated body directions:
///
/// ```text
/// ups = R^ sum_j (s_j / 2) v^_j x a_j
/// E   = (1/4) sum_j s_j (1 - v^_j . a_j)              (= (1/4) Tr{(I - R~) M})
/// pi  = Tr{ (sum_j s_j a_j r_j^T) (sum_j s_j v^_j r_j^T)^-1 }
/// ```
///
/// The inverse in `pi` is applied through an LU solve. Fails when that matrix
/// has condition number above [`MAX_CONDITION`].
pub fn attitude_innovation(
    r_hat: &Rotation,
    pairs: &ImuPairs,
) -> Result<AttitudeInnovation, FilterError> {
    let rh = r_hat.matrix();
    let rht = rh.transpose();
    let mut cross_sum = Vector3::zeros();
    let mut e_att = 0.0;
    let mut measured = Matrix3::zeros();
    let mut estimated = Matrix3::zeros();
    let mut m = Matrix3::zeros();
    for ((r, a), s) in pairs.pairs.iter().zip(&pairs.weights) {
        let v_hat = rht * r;
        cross_sum += v_hat.cross(a) * (0.5 * s);
        e_att += s * (1.0 - v_hat.dot(a));
        measured += a * r.transpose() * *s;
        estimated += v_hat * r.transpose() * *s;
        m += r * r.transpose() * *s;
    }
    let ups = rh * cross_sum;
    let e_att = 0.25 * e_att;

    let sv = estimated.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= MAX_CONDITION) {
        return Err(FilterError::Singular(cond));
    }
    let solved = estimated
        .lu()
        .solve(&measured)
        .ok_or(FilterError::Singular(f64::INFINITY))?;
    let pi = solved.trace();

    let breve = Matrix3::identity() * m.trace() - m;
    let lambda_min = SymmetricEigen::new(breve).eigenvalues.min();
    Ok(AttitudeInnovation {
        ups,
        e_att,
        pi,
        lambda_min,
    })
}

/// Landmark and attitude innovations plus the derived scalings
/// `tau_b = (E+1) e^E`, `tau_sigma = (E+2) e^E`, `tau_w = lambda_min (1 + pi)`.
///
/// `tau_w` is clamped from below at [`TAU_W_FLOOR`]; a non-positive raw value
/// means the attitude error sits on (or past) the unstable set and is reported
/// as [`FilterError::UnstableSet`].
pub fn innovation_bundle(
    state: &FilterState,
    ys: &[Vector3<f64>],
    pairs: &ImuPairs,
) -> Result<InnovationBundle, FilterError> {
    let e = landmark_innovations(state, ys)?;
    let att = attitude_innovation(&state.pose.rotation, pairs)?;
    let tau_w_raw = att.lambda_min * (1.0 + att.pi);
    if !(tau_w_raw > 0.0) {
        return Err(FilterError::UnstableSet(tau_w_raw));
    }
    let exp_e = att.e_att.exp();
    Ok(InnovationBundle {
        e,
        ups: att.ups,
        e_att: att.e_att,
        pi: att.pi,
        lambda_min: att.lambda_min,
        tau_b: (att.e_att + 1.0) * exp_e,
        tau_sigma: (att.e_att + 2.0) * exp_e,
        tau_w: tau_w_raw.max(TAU_W_FLOOR),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{upsilon, Pose};
    use crate::scenario::{normalize_and_augment, InertialReferences};
    use approx::assert_relative_eq;

    fn paper_pairs(r_true: &Rotation) -> ImuPairs {
        let refs = InertialReferences::uniform(vec![
            Vector3::new(-1.0, 1.0, 1.1),
            Vector3::new(0.0, 0.0, 1.3),
        ])
        .unwrap();
        let body: Vec<_> = refs.vectors.iter().map(|r| r_true.matrix().transpose() * r).collect();
        normalize_and_augment(&refs, &body).unwrap()
    }

    #[test]
    fn landmark_innovation_cases() {
        let mut s = FilterState::new(Pose::identity(), vec![Vector3::zeros(); 4]);
        let e = landmark_innovation(&s, &Vector3::new(6.0, 0.0, -3.0), 0).unwrap();
        assert_eq!(e, Vector3::new(-6.0, 0.0, 3.0));
        assert!(matches!(
            landmark_innovation(&s, &Vector3::zeros(), 4),
            Err(FilterError::LandmarkIndex { index: 4, count: 4 })
        ));
        // Exact estimate and clean measurement give zero innovation.
        let pose = Pose::new(exp_so3(&Vector3::new(0.1, 0.2, -0.3)), Vector3::new(1.0, -2.0, 3.0));
        let p = Vector3::new(6.0, 1.0, -1.0);
        s.pose = pose;
        s.landmarks[1] = p;
        let y = pose.rotation.matrix().transpose() * (p - pose.position);
        assert_relative_eq!(landmark_innovation(&s, &y, 1).unwrap(), Vector3::zeros(), epsilon = 1e-14);
        assert!(matches!(
            landmark_innovations(&s, &[y]),
            Err(FilterError::LandmarkCount { expected: 4, got: 1 })
        ));
    }

    #[test]
    fn attitude_innovation_at_truth() {
        let r = exp_so3(&Vector3::new(0.4, -0.3, 1.2));
        let pairs = paper_pairs(&r);
        let att = attitude_innovation(&r, &pairs).unwrap();
        assert_relative_eq!(att.ups, Vector3::zeros(), epsilon = 1e-14);
        assert_relative_eq!(att.e_att, 0.0, epsilon = 1e-14);
        assert_relative_eq!(att.pi, 3.0, epsilon = 1e-12);
        assert!(att.lambda_min > 0.0);
    }

    #[test]
    fn attitude_innovation_matches_error_rotation_forms() {
        let r = exp_so3(&Vector3::new(0.2, 0.1, -0.5));
        let r_hat = exp_so3(&Vector3::new(-0.7, 0.3, 0.9));
        let pairs = paper_pairs(&r);
        let m = pairs.reference_matrix();
        let r_err = r_hat.matrix() * r.matrix().transpose();
        let att = attitude_innovation(&r_hat, &pairs).unwrap();
        assert_relative_eq!(att.ups, upsilon(&(r_err * m)), epsilon = 1e-12);
        assert_relative_eq!(att.e_att, 0.25 * ((Matrix3::identity() - r_err) * m).trace(), epsilon = 1e-12);
        assert_relative_eq!(att.pi, r_err.trace(), epsilon = 1e-12);
    }

    #[test]
    fn bundle_flags_unstable_set() {
        // A half turn about z puts Tr{R~} = -1, so tau_w = 0.
        let r = Rotation::identity();
        let pairs = paper_pairs(&r);
        let mut s = FilterState::new(
            Pose::new(exp_so3(&Vector3::new(0.0, 0.0, std::f64::consts::PI)), Vector3::zeros()),
            vec![Vector3::zeros(); 3],
        );
        let ys = vec![Vector3::zeros(); 3];
        assert!(matches!(
            innovation_bundle(&s, &ys, &pairs),
            Err(FilterError::UnstableSet(_)) | Err(FilterError::Singular(_))
        ));
        s.pose.rotation = exp_so3(&Vector3::new(0.0, 0.0, 0.6));
        let b = innovation_bundle(&s, &ys, &pairs).unwrap();
        assert!(b.tau_b > 0.0 && b.tau_sigma > 0.0 && b.tau_w >= TAU_W_FLOOR);
        assert!(b.e_att >= 0.0);
        assert_relative_eq!(b.tau_b, (b.e_att + 1.0) * b.e_att.exp(), epsilon = 1e-15);
    }
}
