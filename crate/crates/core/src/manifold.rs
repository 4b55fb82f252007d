//! SO(3) / SE(3) primitives: skew, vex, wedge, the anti-symmetric projection and
//! its vex composition, the normalized attitude distance, and exponential-map
//! integration of pose kinematics.
//!
//! Everything here is pure. Rotations are stored as plain 3x3 matrices behind a
//! newtype so that the SO(3) invariants are checked once at construction.

use nalgebra::{Matrix3, Matrix4, Vector3};
use thiserror::Error;

/// Tolerance on `R R^T = I` and `det R = 1` used when validating rotations.
pub const ROTATION_TOL: f64 = 1e-9;

/// Below this angle `exp_so3` switches to its Taylor expansion.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Largest Frobenius distance from SO(3) that `reorthonormalize` accepts.
pub const MAX_REPAIR_DISTANCE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("matrix is not skew-symmetric (|S + S^T| = {asymmetry:.3e})")]
    NotSkew { asymmetry: f64 },
    #[error("matrix is not a rotation (orthogonality defect {orth:.3e}, det {det:.6})")]
    NotRotation { orth: f64, det: f64 },
    #[error("matrix is {distance:.3e} away from SO(3); integrator blow-up")]
    FarFromSo3 { distance: f64 },
    #[error("matrix has negative determinant ({det:.6}); reflections are not rotations")]
    Reflection { det: f64 },
}

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates `m` against the SO(3) invariants at [`ROTATION_TOL`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, ManifoldError> {
        let r = Rotation(m);
        r.check(ROTATION_TOL)?;
        Ok(r)
    }

    /// Wraps `m` without checking. Callers are expected to hold the invariants.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    /// Rotation by `angle` radians about the z axis.
    pub fn about_z(angle: f64) -> Self {
        exp_so3(&Vector3::new(0.0, 0.0, angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Frobenius norm of `R R^T - I`.
    pub fn orthogonality_defect(&self) -> f64 {
        (self.0 * self.0.transpose() - Matrix3::identity()).norm()
    }

    pub fn check(&self, tol: f64) -> Result<(), ManifoldError> {
        let orth = self.orthogonality_defect();
        let det = self.0.determinant();
        if !orth.is_finite() || orth > tol || (det - 1.0).abs() > tol {
            return Err(ManifoldError::NotRotation { orth, det });
        }
        Ok(())
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<&Vector3<f64>> for &Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: &Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// A rigid-body pose: attitude plus position in the inertial frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub position: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, position: Vector3<f64>) -> Self {
        Pose { rotation, position }
    }

    pub fn identity() -> Self {
        Pose::new(Rotation::identity(), Vector3::zeros())
    }

    /// Homogeneous 4x4 form.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut t = Matrix4::identity();
        t.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        t.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        t
    }

    pub fn inverse(&self) -> Pose {
        se3_inverse(self)
    }

    /// Maps a point expressed in this pose's body frame into the parent frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.matrix() * p + self.position
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation.matrix() * other.position + self.position,
        )
    }
}

/// Group velocity: body-frame angular and translational velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub angular: Vector3<f64>,
    pub translational: Vector3<f64>,
}

impl Twist {
    pub fn new(angular: Vector3<f64>, translational: Vector3<f64>) -> Self {
        Twist {
            angular,
            translational,
        }
    }

    pub fn zero() -> Self {
        Twist::new(Vector3::zeros(), Vector3::zeros())
    }
}

/// `[h]x`, the matrix with `[h]x y = h x y`.
#[inline]
pub fn skew(h: &Vector3<f64>) -> Matrix3<f64> {
    #[rustfmt::skip]
    let m = Matrix3::new(
        0.0, -h.z, h.y,
        h.z, 0.0, -h.x,
        -h.y, h.x, 0.0,
    );
    m
}

/// Inverse of [`skew`]. Rejects inputs whose symmetric part exceeds
/// `1e-9 * (1 + |S|)`.
pub fn vex(s: &Matrix3<f64>) -> Result<Vector3<f64>, ManifoldError> {
    let asymmetry = (s + s.transpose()).norm();
    if !(asymmetry <= 1e-9 * (1.0 + s.norm())) {
        return Err(ManifoldError::NotSkew { asymmetry });
    }
    Ok(vex_unchecked(s))
}

#[inline]
fn vex_unchecked(s: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)])
}

/// `[U]^`, the 4x4 se(3) element of a twist.
pub fn wedge(u: &Twist) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&u.angular));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&u.translational);
    m
}

/// Reads the twist back out of a 4x4 se(3) matrix.
pub fn unwedge(m: &Matrix4<f64>) -> Result<Twist, ManifoldError> {
    let rot: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    Ok(Twist::new(vex(&rot)?, m.fixed_view::<3, 1>(0, 3).into_owned()))
}

/// `(H - H^T) / 2`.
#[inline]
pub fn antisym_project(h: &Matrix3<f64>) -> Matrix3<f64> {
    (h - h.transpose()) * 0.5
}

/// `vex(antisym_project(H))`, defined for any 3x3 matrix.
#[inline]
pub fn upsilon(h: &Matrix3<f64>) -> Vector3<f64> {
    vex_unchecked(&antisym_project(h))
}

/// `(1/4) Tr{I - R}`; 0 at identity, 1 on the half-turn rotations.
pub fn attitude_distance(r: &Rotation) -> f64 {
    (0.25 * (3.0 - r.matrix().trace())).clamp(0.0, 1.0)
}

pub fn se3_inverse(t: &Pose) -> Pose {
    let rt = t.rotation.transpose();
    let p = -(rt.matrix() * t.position);
    Pose::new(rt, p)
}

/// Rodrigues exponential of a rotation vector.
pub fn exp_so3(phi: &Vector3<f64>) -> Rotation {
    let theta = phi.norm();
    let k = skew(phi);
    let k2 = k * k;
    let m = if theta < SMALL_ANGLE {
        Matrix3::identity() + k + k2 * 0.5
    } else {
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / (theta * theta);
        Matrix3::identity() + k * a + k2 * b
    };
    Rotation(m)
}

/// Principal logarithm of a rotation, returned as a rotation vector with
/// angle in `[0, pi]`.
pub fn log_so3(r: &Rotation) -> Vector3<f64> {
    let m = r.matrix();
    let cos_theta = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let w = vex_unchecked(&antisym_project(m));
    if theta < SMALL_ANGLE {
        return w;
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // sin(theta) ~ 0: recover the axis from the symmetric part.
        let s = (m + Matrix3::identity()) * 0.5;
        let (col, _) = (0..3)
            .map(|i| (i, s[(i, i)]))
            .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        let mut axis: Vector3<f64> = s.column(col).into_owned();
        axis /= axis.norm();
        // Resolve the sign ambiguity with whatever antisymmetric part remains.
        if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    w * (theta / theta.sin())
}

/// One step of `T' = T [U]^` using the exponential retraction for attitude.
pub fn integrate_pose(t: &Pose, u: &Twist, dt: f64) -> Pose {
    debug_assert!(dt > 0.0, "integration step must be positive");
    let rotation = t.rotation * exp_so3(&(u.angular * dt));
    let position = t.position + t.rotation.matrix() * (u.translational * dt);
    Pose::new(rotation, position)
}

/// Nearest rotation in the Frobenius sense (polar factor via SVD).
pub fn reorthonormalize(m: &Matrix3<f64>) -> Result<Rotation, ManifoldError> {
    let det = m.determinant();
    if !(det > 0.0) {
        return Err(ManifoldError::Reflection { det });
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(ManifoldError::FarFromSo3 { distance: f64::NAN }),
    };
    let polar = u * v_t;
    if polar.determinant() < 0.0 {
        return Err(ManifoldError::Reflection { det });
    }
    let distance = (m - polar).norm();
    if !(distance <= MAX_REPAIR_DISTANCE) {
        return Err(ManifoldError::FarFromSo3 { distance });
    }
    Ok(Rotation(polar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    #[test]
    fn skew_layout_and_cross_product() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let s = skew(&Vector3::new(1.0, 2.0, 3.0));
        #[rustfmt::skip]
        let expected = Matrix3::new(
            0.0, -3.0, 2.0,
            3.0, 0.0, -1.0,
            -2.0, 1.0, 0.0,
        );
        assert_eq!(s, expected);
        assert_eq!(s * Vector3::new(4.0, 5.0, 6.0), Vector3::new(-3.0, 6.0, -3.0));
    }

    #[test]
    fn vex_inverts_skew_and_rejects_symmetric_parts() {
        assert_eq!(vex(&Matrix3::zeros()).unwrap(), Vector3::zeros());
        let h = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(vex(&skew(&h)).unwrap(), h);
        let bad = skew(&h) + Matrix3::identity() * 1e-3;
        assert!(matches!(vex(&bad), Err(ManifoldError::NotSkew { .. })));
    }

    #[test]
    fn wedge_of_paper_twist() {
        let u = Twist::new(Vector3::new(0.0, 0.0, 0.3), Vector3::new(2.5, 0.0, 0.0));
        let w = wedge(&u);
        assert_eq!(w.fixed_view::<3, 3>(0, 0).into_owned(), skew(&u.angular));
        assert_eq!(w.fixed_view::<3, 1>(0, 3).into_owned(), u.translational);
        assert_eq!(w.row(3).into_owned(), nalgebra::RowVector4::zeros());
        assert_eq!(wedge(&Twist::zero()), Matrix4::zeros());
        assert_eq!(unwedge(&w).unwrap(), u);
    }

    #[test]
    fn projection_and_upsilon_basics() {
        let sym = Matrix3::new(1.0, 2.0, 3.0, 2.0, 5.0, 6.0, 3.0, 6.0, 9.0);
        assert_eq!(antisym_project(&sym), Matrix3::zeros());
        let s = skew(&Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(antisym_project(&s), s);
        assert_eq!(upsilon(&Matrix3::identity()), Vector3::zeros());
        assert_eq!(upsilon(&s), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn attitude_distance_closed_form() {
        assert_eq!(attitude_distance(&Rotation::identity()), 0.0);
        let flip = Rotation::from_matrix(Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)))
            .unwrap();
        assert_eq!(attitude_distance(&flip), 1.0);
        let axis = Vector3::new(1.0, -2.0, 0.5).normalize();
        for theta in [FRAC_PI_6, FRAC_PI_2, PI] {
            let r = exp_so3(&(axis * theta));
            assert_relative_eq!(
                attitude_distance(&r),
                (1.0 - theta.cos()) / 2.0,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn inverse_of_paper_initial_pose() {
        let t = Pose::new(Rotation::identity(), Vector3::new(0.0, 0.0, 3.0));
        let inv = se3_inverse(&t);
        assert_eq!(inv.rotation, Rotation::identity());
        assert_eq!(inv.position, Vector3::new(0.0, 0.0, -3.0));
        assert_eq!(se3_inverse(&Pose::identity()), Pose::identity());
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        assert_eq!(exp_so3(&Vector3::zeros()), Rotation::identity());
        let r = exp_so3(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        assert_relative_eq!(
            r.matrix().column(0).into_owned(),
            Vector3::new(0.0, 1.0, 0.0),
            epsilon = 1e-15
        );
        // Taylor branch stays on the group.
        let tiny = exp_so3(&Vector3::new(1e-8, -3e-8, 2e-8));
        tiny.check(1e-14).unwrap();
    }

    #[test]
    fn log_inverts_exp_including_half_turn() {
        for phi in [
            Vector3::new(0.3, -0.2, 0.1),
            Vector3::new(1e-9, 0.0, 0.0),
            Vector3::new(0.0, 0.0, PI),
            Vector3::new(1.0, 1.0, 0.0).normalize() * (PI - 1e-9),
        ] {
            let r = exp_so3(&phi);
            let back = exp_so3(&log_so3(&r));
            assert_relative_eq!(back.matrix(), r.matrix(), epsilon = 1e-8);
        }
    }

    #[test]
    fn integrate_pose_closed_forms() {
        let t = Pose::new(Rotation::identity(), Vector3::zeros());
        assert_eq!(integrate_pose(&t, &Twist::zero(), 1e-3), t);
        let u = Twist::new(Vector3::zeros(), Vector3::new(2.5, 0.0, 0.0));
        let next = integrate_pose(&t, &u, 0.001);
        assert_relative_eq!(next.position, Vector3::new(0.0025, 0.0, 0.0), epsilon = 1e-18);
    }

    #[test]
    fn reorthonormalize_repairs_small_drift_and_rejects_reflections() {
        let r = exp_so3(&Vector3::new(0.4, -0.1, 0.7));
        assert_relative_eq!(
            reorthonormalize(r.matrix()).unwrap().matrix(),
            r.matrix(),
            epsilon = 1e-12
        );
        let perturbed = Matrix3::identity() + Matrix3::new(1.0, 2.0, 0.0, -1.0, 0.5, 0.3, 0.0, 0.2, -0.7) * 1e-6;
        let fixed = reorthonormalize(&perturbed).unwrap();
        assert!(fixed.orthogonality_defect() < 1e-12);
        assert!((fixed.matrix().determinant() - 1.0).abs() < 1e-12);

        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            reorthonormalize(&reflect),
            Err(ManifoldError::Reflection { .. })
        ));
        assert!(matches!(
            reorthonormalize(&(Matrix3::identity() * 1.5)),
            Err(ManifoldError::FarFromSo3 { .. })
        ));
    }

    #[test]
    fn rotation_constructor_validates() {
        assert!(Rotation::from_matrix(Matrix3::identity() * 2.0).is_err());
        assert!(Rotation::from_matrix(Rotation::about_z(0.3).into_inner()).is_ok());
    }
}
