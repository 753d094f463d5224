//! Discrete double-integrator propagation for the UAV and the target.

use nalgebra::{Matrix6, Matrix6x3, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::types::{FrameRotation, State6};

/// Slack on acceleration bounds before a command is treated as a saturation violation.
const BOUND_TOL: f64 = 1e-9;

/// State transition `A` and input matrix `B` of the double integrator with step `dt`.
pub fn make_transition_matrices(dt: f64) -> Result<(Matrix6<f64>, Matrix6x3<f64>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let mut a = Matrix6::identity();
    let mut b = Matrix6x3::zeros();
    for i in 0..3 {
        a[(i, i + 3)] = dt;
        b[(i, i)] = 0.5 * dt * dt;
        b[(i + 3, i)] = dt;
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavState {
    pub state: State6,
    pub pose_rotation: FrameRotation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub state: State6,
}

fn propagate(state: &State6, accel: &Vector3<f64>, dt: f64) -> State6 {
    // closed form of A x + B u, exact in the position increment
    State6::new(
        state.position + state.velocity * dt + accel * (0.5 * dt * dt),
        state.velocity + accel * dt,
    )
}

/// Advances the UAV by one step. The rotation is carried over unchanged; the
/// caller applies its yaw policy afterwards.
pub fn step_uav(x: &UavState, u: &Vector3<f64>, dt: f64, u_bounds: (f64, f64)) -> Result<UavState> {
    if u.iter().any(|c| *c < u_bounds.0 - BOUND_TOL || *c > u_bounds.1 + BOUND_TOL) {
        return Err(Error::InvalidInput(format!(
            "UAV input {u:?} outside [{}, {}]: controller saturation bug",
            u_bounds.0, u_bounds.1
        )));
    }
    if dt < 0.0 || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be >= 0, got {dt}")));
    }
    Ok(UavState { state: propagate(&x.state, u, dt), pose_rotation: x.pose_rotation })
}

/// Advances the target: scenario acceleration through `B` plus additive 6-vector process noise.
pub fn step_target(
    x: &TargetState,
    a_true: &Vector3<f64>,
    dt: f64,
    noise: &Vector6<f64>,
    a_max: f64,
) -> Result<TargetState> {
    if a_true.norm() > a_max * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::InvalidInput(format!(
            "target acceleration {} exceeds a_max {a_max}",
            a_true.norm()
        )));
    }
    if dt < 0.0 || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be >= 0, got {dt}")));
    }
    let det = propagate(&x.state, a_true, dt);
    Ok(TargetState { state: State6::from_vector(&(det.to_vector() + noise)) })
}

/// Vertical separation `z_R - z_T`.
pub fn altitude_error(uav: &UavState, target: &TargetState) -> f64 {
    uav.state.position.z - target.state.position.z
}

/// Sensor rotation whose x-axis points at `aim` in the horizontal plane.
/// Keeps `fallback` when `aim` is (horizontally) on top of the UAV.
pub fn yaw_towards(p_uav: &Vector3<f64>, aim: &Vector3<f64>, fallback: FrameRotation) -> FrameRotation {
    let dx = aim.x - p_uav.x;
    let dy = aim.y - p_uav.y;
    if dx.hypot(dy) < 1e-6 {
        return fallback;
    }
    FrameRotation::from_yaw(dy.atan2(dx))
}
