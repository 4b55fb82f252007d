use geoslam_core::filters::{landmark_innovations, FilterState, Gains};
use geoslam_core::harness::RunConfig;
use geoslam_core::manifold::{
    antisym_project, attitude_distance, exp_so3, log_so3, se3_inverse, skew, vex, Pose, Rotation,
};
use geoslam_core::metrics::{landmark_consistency, lyapunov_det, lyapunov_stoch};
use geoslam_core::scenario::{normalize_and_augment, InertialReferences, TrueState};
use nalgebra::{Matrix3, SymmetricEigen, Vector3, Vector6};
use proptest::prelude::*;

type V3 = Vector3<f64>;

fn vec3(scale: f64) -> impl Strategy<Value = V3> {
    prop::array::uniform3(-scale..scale).prop_map(V3::from)
}

fn mat3() -> impl Strategy<Value = Matrix3<f64>> {
    prop::array::uniform9(-2.0..2.0f64).prop_map(|a| Matrix3::from_row_slice(&a))
}

fn rotation() -> impl Strategy<Value = Rotation> {
    (vec3(1.0), 0.0..std::f64::consts::PI).prop_filter_map("axis too short", |(v, angle)| {
        (v.norm() > 1e-3).then(|| exp_so3(&(v.normalize() * angle)))
    })
}

fn close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
    (a - b).abs().max() < tol
}

proptest! {
    #[test]
    fn skew_conjugation(r in rotation(), a in vec3(5.0)) {
        let m = r.matrix();
        prop_assert!(close(&skew(&(m * a)), &(m * skew(&a) * m.transpose()), 1e-12));
    }

    #[test]
    fn skew_of_cross(a in vec3(5.0), b in vec3(5.0)) {
        prop_assert!(close(&skew(&b.cross(&a)), &(a * b.transpose() - b * a.transpose()), 1e-12));
    }

    #[test]
    fn skew_squared(a in vec3(5.0)) {
        let lhs = skew(&a) * skew(&a);
        let rhs = -Matrix3::identity() * a.norm_squared() + a * a.transpose();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn anticommutator_symmetric(a in vec3(3.0), h in mat3()) {
        let m = h + h.transpose();
        let lhs = m * skew(&a) + skew(&a) * m;
        let rhs = skew(&a) * m.trace() - skew(&(m * a));
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn trace_skew_symmetric_vanishes(a in vec3(3.0), h in mat3()) {
        let m = h + h.transpose();
        prop_assert!((skew(&a) * m).trace().abs() < 1e-12);
    }

    #[test]
    fn trace_with_skew(a in vec3(3.0), m in mat3()) {
        let lhs = (m * skew(&a)).trace();
        let rhs = -2.0 * vex(&antisym_project(&m)).unwrap().dot(&a);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn vex_inverts_skew(a in vec3(10.0)) {
        prop_assert!((vex(&skew(&a)).unwrap() - a).norm() < 1e-14);
    }

    #[test]
    fn log_inverts_exp(v in vec3(1.0), angle in 0.0..3.1f64) {
        prop_assume!(v.norm() > 1e-3);
        let phi = v.normalize() * angle;
        prop_assert!((log_so3(&exp_so3(&phi)) - phi).norm() < 1e-9);
    }

    #[test]
    fn exp_stays_on_so3(v in vec3(20.0)) {
        let r = exp_so3(&v);
        prop_assert!(r.orthogonality_defect() < 1e-12);
        prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn se3_inverse_composes_to_identity(r in rotation(), p in vec3(10.0)) {
        let t = Pose::new(r, p);
        let prod = t.to_homogeneous() * se3_inverse(&t).to_homogeneous();
        prop_assert!((prod - nalgebra::Matrix4::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn attitude_distance_in_unit_interval(r in rotation()) {
        let d = attitude_distance(&r);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn augmented_pairs_are_well_formed(
        r1 in vec3(2.0),
        r2 in vec3(2.0),
        rot in rotation(),
        w in (0.1..5.0f64, 0.1..5.0f64),
    ) {
        prop_assume!(r1.norm() > 0.1 && r2.norm() > 0.1);
        prop_assume!(r1.normalize().cross(&r2.normalize()).norm() > 0.05);
        let refs = InertialReferences::new(vec![r1, r2], vec![w.0, w.1]).unwrap();
        let meas: Vec<V3> = refs.vectors.iter().map(|v| rot.matrix().transpose() * v * 1.7).collect();
        let pairs = normalize_and_augment(&refs, &meas).unwrap();
        prop_assert_eq!(pairs.pairs.len(), 3);
        for (r, a) in &pairs.pairs {
            prop_assert!((r.norm() - 1.0).abs() < 1e-12);
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        }
        prop_assert!((pairs.weights.iter().sum::<f64>() - 3.0).abs() < 1e-12);
        let m = pairs.reference_matrix();
        let breve = Matrix3::identity() * m.trace() - m;
        prop_assert!(SymmetricEigen::new(breve).eigenvalues.min() > 0.0);
    }

    #[test]
    fn lyapunov_candidates_nonnegative(
        e in prop::collection::vec(vec3(3.0), 4),
        b in prop::array::uniform6(-1.0..1.0f64),
        s in vec3(1.0),
        e_att in 0.0..1.0f64,
    ) {
        let g = RunConfig::default().gains().unwrap();
        let b = Vector6::from_row_slice(&b);
        prop_assert!(lyapunov_det(&e, &b, &g) >= 0.0);
        prop_assert!(lyapunov_stoch(e_att, &e, &b, &s, &g) >= 0.0);
    }

    #[test]
    fn consistency_error_matches_innovation(
        r in rotation(),
        r_hat in rotation(),
        p in vec3(3.0),
        p_hat in vec3(3.0),
        lms in prop::collection::vec(vec3(5.0), 3..7),
        offsets in prop::collection::vec(vec3(1.0), 7),
    ) {
        let truth = TrueState::new(Pose::new(r, p), lms.clone()).unwrap();
        let est = FilterState::new(
            Pose::new(r_hat, p_hat),
            lms.iter().zip(&offsets).map(|(a, b)| a + b).collect(),
        );
        let y: Vec<V3> = lms.iter().map(|l| r.matrix().transpose() * (l - p)).collect();
        let e = landmark_innovations(&est, &y).unwrap();
        let c = landmark_consistency(&truth, &est).unwrap();
        for (a, b) in e.iter().zip(&c) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }
}

/// The anticommutator identity is stated for general M but only holds for
/// symmetric M; a skew M breaks it.
#[test]
fn anticommutator_fails_for_skew_matrix() {
    let (a, b) = (V3::new(1.0, 0.0, 0.0), V3::new(0.0, 1.0, 0.0));
    let m = skew(&b);
    let lhs = m * skew(&a) + skew(&a) * m;
    let rhs = skew(&a) * m.trace() - skew(&(m * a));
    assert!((lhs - rhs).abs().max() > 0.5);
    let expected = a * b.transpose() + b * a.transpose() - Matrix3::identity() * (2.0 * a.dot(&b));
    assert!(close(&lhs, &expected, 1e-15));
}

#[test]
fn half_turns_about_axes_have_distance_one() {
    for axis in [V3::x(), V3::y(), V3::z()] {
        let r = exp_so3(&(axis * std::f64::consts::PI));
        assert!((attitude_distance(&r) - 1.0).abs() < 1e-15);
    }
    assert_eq!(attitude_distance(&Rotation::identity()), 0.0);
}

#[test]
fn gains_rejected() {
    let g = RunConfig::default().gains().unwrap();
    assert!(g.validate(4).is_ok());
    assert!(g.validate(3).is_err());
    let bad = [
        Gains { k1: 0.0, ..g.clone() },
        Gains { k2: 2.25, ..g.clone() },
        Gains { k_b: -1.0, ..g.clone() },
        Gains { gamma_sigma: f64::NAN, ..g.clone() },
        Gains { gamma1: V3::new(1.0, 0.0, 1.0), ..g.clone() },
        Gains { alpha: vec![0.05, 0.05, 0.0, 0.05], ..g.clone() },
        Gains { k_p: f64::INFINITY, ..g.clone() },
    ];
    for b in bad {
        assert!(b.validate(4).is_err(), "{b:?}");
    }
}
