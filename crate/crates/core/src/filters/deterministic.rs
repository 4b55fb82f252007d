//! Landmark-only SLAM filter.
//!
//! ```text
//! T^' = T^ [U_m - b^ - W]^
//! p^_i' = -k_p e_i
//! b^'   = -sum_i (gamma / alpha_i) G_i^T e_i
//! W     = -sum_i (k_w / alpha_i)   G_i^T e_i
//! ```

use nalgebra::{Vector3, Vector6};

use super::innovation::{landmark_innovations, regressor_t, FrameHold};
use super::{FilterError, FilterState, Gains, StepControl};
use crate::manifold::{integrate_pose, Twist, ROTATION_TOL};

/// Instantaneous rates of the deterministic filter.
#[derive(Debug, Clone, PartialEq)]
pub struct DetRates {
    /// Correction twist `W_U = [W_Omega; W_V]`.
    pub correction: Vector6<f64>,
    pub bias_rate: Vector6<f64>,
    pub landmark_rates: Vec<Vector3<f64>>,
}

/// Evaluates the deterministic laws at `state` for the innovations `e`.
pub fn det_rates(state: &FilterState, y: &[Vector3<f64>], e: &[Vector3<f64>], gains: &Gains) -> DetRates {
    let rht = state.pose.rotation.matrix().transpose();
    let mut stacked = Vector6::zeros();
    for ((yi, ei), a) in y.iter().zip(e).zip(&gains.alpha) {
        stacked += regressor_t(&rht, yi, ei) / *a;
    }
    DetRates {
        correction: -gains.k_w * stacked,
        bias_rate: -gains.gamma_det * stacked,
        landmark_rates: e.iter().map(|ei| -gains.k_p * ei).collect(),
    }
}

/// Upper estimate of the fastest closed-loop time scale (1/s).
fn stiffness(y: &[Vector3<f64>], gains: &Gains) -> f64 {
    let coupling: f64 = y
        .iter()
        .zip(&gains.alpha)
        .map(|(yi, a)| (1.0 + yi.norm_squared()) / a)
        .sum();
    gains
        .k_p
        .max(gains.k_w * coupling)
        .max((gains.gamma_det * coupling).sqrt())
}

/// Advances the deterministic filter over one frame of length `dt`.
///
/// The frame is split per [`StepControl`]; sub-steps follow the nominal
/// in-frame motion described at `FrameHold`, so a single-piece frame is
/// plain forward Euler. `sigma` is carried through untouched.
pub fn det_step(
    state: &FilterState,
    u_m: &Twist,
    y: &[Vector3<f64>],
    gains: &Gains,
    dt: f64,
    control: &StepControl,
) -> Result<FilterState, FilterError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FilterError::BadStep(dt));
    }
    let rate = stiffness(y, gains);
    let hold = FrameHold::new(u_m, state.bias_angular(), state.bias_translational());
    let mut s = state.clone();
    let mut remaining = dt;
    let mut count = 0usize;
    while remaining > 0.0 {
        let h = control.substep(rate, remaining);
        if !(h > 0.0) {
            return Err(FilterError::NonFinite);
        }
        count += 1;
        if count > control.max_substeps {
            return Err(FilterError::TooStiff(control.max_substeps));
        }
        let at = hold.at(dt - remaining);
        let y_now = at.landmarks(y);
        let e = landmark_innovations(&s, &y_now)?;
        let r = det_rates(&s, &y_now, &e, gains);
        let twist = Twist::new(
            u_m.angular - s.bias_angular() - r.correction.fixed_rows::<3>(0),
            u_m.translational - s.bias_translational() - r.correction.fixed_rows::<3>(3) + at.heading_fix(),
        );
        s.pose = integrate_pose(&s.pose, &twist, h);
        for (p, dp) in s.landmarks.iter_mut().zip(&r.landmark_rates) {
            *p += dp * h;
        }
        s.bias += r.bias_rate * h;
        remaining = if h == remaining { 0.0 } else { remaining - h };
    }
    if !s.is_finite() {
        return Err(FilterError::NonFinite);
    }
    s.pose.rotation.check(ROTATION_TOL)?;
    Ok(s)
}
