//! Geometric SLAM estimation on SE(3) x landmarks.
//!
//! * [`manifold`]: SO(3)/SE(3) primitives and the operators used by the filters.
//! * [`scenario`]: ground-truth kinematics and measurement corruption.
//! * [`filters`]: the landmark-only and IMU-aided estimators.
//! * [`metrics`]: error criteria, Lyapunov diagnostics and run scoring.
//! * [`harness`]: configuration, closed-loop simulation, replay and logging.

pub mod filters;
pub mod harness;
pub mod manifold;
pub mod metrics;
pub mod scenario;
