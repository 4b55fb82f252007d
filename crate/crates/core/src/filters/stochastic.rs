//! IMU-aided stochastic SLAM filter.
//!
//! Per evaluation, with `ups`, `E`, `e_i` and the scalings from
//! [`innovation_bundle`]:
//!
//! ```text
//! W_Omega = (k1/tau_w I + (1/4)(E+2)/(E+1) diag(sigma^)) R^T ups
//! W_V     = -sum_i (k3/alpha_i) |e_i|^2 R^T e_i
//! T^'     = T^ [U_m - b^ - W]^
//! p^_i'   = -(k2/varrho) e_i + R^ [y_i]x W_Omega
//! b^_Omega' = (Gamma1/2) tau_b R^T ups - sum_i (Gamma1/alpha_i) |e_i|^2 [y_i]x R^T e_i - k_b Gamma1 b^_Omega
//! b^_V'     = -sum_i (Gamma2/alpha_i) |e_i|^2 R^T e_i - k_b Gamma2 b^_V
//! sigma^'   = (Gamma_sigma/8) tau_sigma diag(R^T ups) R^T ups - k_sigma Gamma_sigma sigma^
//! ```

use nalgebra::{Vector3, Vector6};

use super::innovation::{innovation_bundle, regressor_t, FrameHold, InnovationBundle};
use super::{FilterError, FilterState, Gains, StepControl};
use crate::manifold::{integrate_pose, Twist, ROTATION_TOL};
use crate::scenario::MeasurementFrame;

/// Correction twist components `(W_Omega, W_V)`.
pub fn stoch_correction(
    bundle: &InnovationBundle,
    state: &FilterState,
    gains: &Gains,
) -> (Vector3<f64>, Vector3<f64>) {
    let rht = state.pose.rotation.matrix().transpose();
    let ups_body = rht * bundle.ups;
    let e = bundle.e_att;
    let adaptive = 0.25 * (e + 2.0) / (e + 1.0);
    let w_omega = ups_body * (gains.k1 / bundle.tau_w) + state.sigma.component_mul(&ups_body) * adaptive;
    let mut w_v = Vector3::zeros();
    for (ei, a) in bundle.e.iter().zip(&gains.alpha) {
        w_v -= (rht * ei) * (gains.k3 / a * ei.norm_squared());
    }
    (w_omega, w_v)
}

/// Adaptation rates `(d/dt [b^_Omega; b^_V], d/dt sigma^)`.
pub fn stoch_adaptation(
    bundle: &InnovationBundle,
    state: &FilterState,
    y: &[Vector3<f64>],
    gains: &Gains,
) -> (Vector6<f64>, Vector3<f64>) {
    let rht = state.pose.rotation.matrix().transpose();
    let ups_body = rht * bundle.ups;
    let mut landmark_drive = Vector6::zeros();
    for ((yi, ei), a) in y.iter().zip(&bundle.e).zip(&gains.alpha) {
        landmark_drive += regressor_t(&rht, yi, ei) * (ei.norm_squared() / a);
    }
    let b_omega = state.bias_angular();
    let b_v = state.bias_translational();
    let rate_omega = gains.gamma1.component_mul(
        &(ups_body * (0.5 * bundle.tau_b) - landmark_drive.fixed_rows::<3>(0) - b_omega * gains.k_b),
    );
    let rate_v = gains
        .gamma2
        .component_mul(&(-landmark_drive.fixed_rows::<3>(3) - b_v * gains.k_b));
    let mut bias_rate = Vector6::zeros();
    bias_rate.fixed_rows_mut::<3>(0).copy_from(&rate_omega);
    bias_rate.fixed_rows_mut::<3>(3).copy_from(&rate_v);

    let sigma_rate = ups_body.component_mul(&ups_body) * (gains.gamma_sigma / 8.0 * bundle.tau_sigma)
        - state.sigma * (gains.k_sigma * gains.gamma_sigma);
    (bias_rate, sigma_rate)
}

/// Landmark estimate rates `-(k2/varrho) e_i + R^ [y_i]x W_Omega`.
pub fn stoch_landmark_rates(
    bundle: &InnovationBundle,
    state: &FilterState,
    y: &[Vector3<f64>],
    w_omega: &Vector3<f64>,
    gains: &Gains,
) -> Vec<Vector3<f64>> {
    let rh = state.pose.rotation.matrix();
    let k = gains.k2 / gains.varrho;
    bundle
        .e
        .iter()
        .zip(y)
        .map(|(ei, yi)| -k * ei + rh * yi.cross(w_omega))
        .collect()
}

/// Upper estimate of the fastest local time scale (1/s). Used only to size
/// sub-steps.
fn stiffness(bundle: &InnovationBundle, state: &FilterState, y: &[Vector3<f64>], gains: &Gains) -> f64 {
    let mut cubic = 0.0;
    let mut cubic_lever = 0.0;
    for ((ei, yi), a) in bundle.e.iter().zip(y).zip(&gains.alpha) {
        let w = 3.0 * ei.norm_squared() / a;
        cubic += w;
        cubic_lever += w * yi.norm_squared();
    }
    let g1 = gains.gamma1.max();
    let g2 = gains.gamma2.max();
    let sigma_max = state.sigma.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let e = bundle.e_att;
    let attitude = 1.5 * (gains.k1 / bundle.tau_w + sigma_max * 0.25 * (e + 2.0) / (e + 1.0));
    [
        gains.k2 / gains.varrho,
        gains.k3 * cubic,
        (g2 * cubic).sqrt(),
        (g1 * (cubic_lever + 1.5 * bundle.tau_b)).sqrt(),
        attitude,
        gains.k_sigma * gains.gamma_sigma,
        gains.k_b * g1.max(g2),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Advances the stochastic filter over one frame of length `dt`.
///
/// The laws are re-evaluated at every sub-step along the nominal in-frame
/// motion described at `FrameHold`; a single-piece frame is plain forward
/// Euler. A frame needing more than `control.max_substeps` pieces aborts with
/// [`FilterError::TooStiff`].
pub fn stoch_step(
    state: &FilterState,
    frame: &MeasurementFrame,
    gains: &Gains,
    dt: f64,
    control: &StepControl,
) -> Result<FilterState, FilterError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FilterError::BadStep(dt));
    }
    let y0 = frame.landmarks();
    let u_m = &frame.velocity_meas;
    let hold = FrameHold::new(u_m, state.bias_angular(), state.bias_translational());
    let mut s = state.clone();
    let mut remaining = dt;
    let mut count = 0usize;
    while remaining > 0.0 {
        let at = hold.at(dt - remaining);
        let y = at.landmarks(&y0);
        let pairs = at.pairs(&frame.imu);
        let bundle = innovation_bundle(&s, &y, &pairs)?;
        let h = control.substep(stiffness(&bundle, &s, &y, gains), remaining);
        if !(h > 0.0) {
            return Err(FilterError::NonFinite);
        }
        count += 1;
        if count > control.max_substeps {
            return Err(FilterError::TooStiff(control.max_substeps));
        }
        let (w_omega, w_v) = stoch_correction(&bundle, &s, gains);
        let lm_rates = stoch_landmark_rates(&bundle, &s, &y, &w_omega, gains);
        let (bias_rate, sigma_rate) = stoch_adaptation(&bundle, &s, &y, gains);
        let twist = Twist::new(
            u_m.angular - s.bias_angular() - w_omega,
            u_m.translational - s.bias_translational() - w_v + at.heading_fix(),
        );
        s.pose = integrate_pose(&s.pose, &twist, h);
        for (p, dp) in s.landmarks.iter_mut().zip(&lm_rates) {
            *p += dp * h;
        }
        s.bias += bias_rate * h;
        s.sigma += sigma_rate * h;
        remaining = if h == remaining { 0.0 } else { remaining - h };
    }
    if !s.is_finite() {
        return Err(FilterError::NonFinite);
    }
    s.pose.rotation.check(ROTATION_TOL)?;
    Ok(s)
}
