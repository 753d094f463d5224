//! Nominal target trajectories, UAV initial conditions and sensing-degradation schedules.

use nalgebra::Vector3;

use crate::config::SimConfig;
use crate::dynamics::UavState;
use crate::error::{Error, Result};
use crate::types::{FrameRotation, State6};

/// Nominal target kinematics at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Smooth 3D target, UAV on a scripted orbit around it.
    Estimation,
    /// Staged 1D motion profile with a degraded-sensing interval, closed loop.
    Control,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub kind: ScenarioKind,
    pub dt: f64,
    /// Nominal target samples for steps `0..=horizon`.
    pub target: Vec<TargetSample>,
    pub uav_initial: UavState,
    /// Per-step multiplier on injected measurement noise and reported covariance.
    pub degradation: Vec<f64>,
    /// Degraded-sensing interval `[start, end)` in steps, if any.
    pub degraded_steps: Option<(usize, usize)>,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.target.len() - 1
    }

    pub fn is_degraded(&self, step: usize) -> bool {
        self.degraded_steps.is_some_and(|(a, b)| step >= a && step < b)
    }
}

/// Offset of the scripted UAV from the target in the estimation scenario.
pub fn estimation_uav_offset(t: f64) -> Vector3<f64> {
    let phase = 0.1 * t;
    Vector3::new(3.5 * phase.cos(), 3.5 * phase.sin(), 1.5)
}

fn sinusoid(amp: f64, freq: f64, phase: f64, t: f64) -> (f64, f64, f64) {
    let arg = freq * t + phase;
    (amp * arg.sin(), amp * freq * arg.cos(), -amp * freq * freq * arg.sin())
}

/// Target path as a sum of low-frequency sinusoids.
pub fn estimation_target(t: f64) -> TargetSample {
    let (x, vx, ax) = sinusoid(4.0, 0.25, 0.0, t);
    let (y, vy, ay) = sinusoid(3.0, 0.2, 0.5, t);
    let (z, vz, az) = sinusoid(0.5, 0.3, 0.0, t);
    TargetSample {
        position: Vector3::new(x, y, 1.0 + z),
        velocity: Vector3::new(vx, vy, vz),
        acceleration: Vector3::new(ax, ay, az),
    }
}

pub fn scenario_estimation(cfg: &SimConfig) -> Result<Scenario> {
    let target: Vec<TargetSample> = (0..=cfg.horizon).map(|k| estimation_target(k as f64 * cfg.dt)).collect();
    check_accel(&target, cfg.a_max)?;
    let p0 = target[0].position + estimation_uav_offset(0.0);
    Ok(Scenario {
        name: "estimation",
        kind: ScenarioKind::Estimation,
        dt: cfg.dt,
        uav_initial: UavState {
            state: State6::new(p0, Vector3::zeros()),
            pose_rotation: crate::dynamics::yaw_towards(&p0, &target[0].position, FrameRotation::identity()),
        },
        target,
        degradation: vec![1.0; cfg.horizon + 1],
        degraded_steps: None,
    })
}

/// Staged straight-line profile along x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlProfile {
    /// Stationary lead-in (s).
    pub rest: f64,
    /// Acceleration during the speed-up phase (m/s^2).
    pub accel: f64,
    /// Cruise speed (m/s).
    pub cruise_speed: f64,
    /// Cruise duration (s).
    pub cruise: f64,
    /// Degraded-sensing interval (s).
    pub degraded_from: f64,
    pub degraded_to: f64,
}

impl Default for ControlProfile {
    fn default() -> Self {
        Self { rest: 8.0, accel: 0.6, cruise_speed: 2.5, cruise: 14.0, degraded_from: 22.0, degraded_to: 40.0 }
    }
}

impl ControlProfile {
    /// Target kinematics at time `t`; braking uses `a_max`.
    pub fn sample(&self, t: f64, a_max: f64) -> TargetSample {
        let t_acc = self.cruise_speed / self.accel;
        let t_brake = self.cruise_speed / a_max;
        let t1 = self.rest;
        let t2 = t1 + t_acc;
        let t3 = t2 + self.cruise;
        let t4 = t3 + t_brake;
        let x2 = 0.5 * self.accel * t_acc * t_acc;
        let x3 = x2 + self.cruise_speed * self.cruise;
        let x4 = x3 + 0.5 * self.cruise_speed * t_brake;
        let (x, v, a) = if t < t1 {
            (0.0, 0.0, 0.0)
        } else if t < t2 {
            let s = t - t1;
            (0.5 * self.accel * s * s, self.accel * s, self.accel)
        } else if t < t3 {
            (x2 + self.cruise_speed * (t - t2), self.cruise_speed, 0.0)
        } else if t < t4 {
            let s = t - t3;
            (x3 + self.cruise_speed * s - 0.5 * a_max * s * s, self.cruise_speed - a_max * s, -a_max)
        } else {
            (x4, 0.0, 0.0)
        };
        TargetSample {
            position: Vector3::new(x, 0.0, 0.0),
            velocity: Vector3::new(v, 0.0, 0.0),
            acceleration: Vector3::new(a, 0.0, 0.0),
        }
    }

    /// Start and end of the braking phase (s).
    pub fn braking_interval(&self, a_max: f64) -> (f64, f64) {
        let t3 = self.rest + self.cruise_speed / self.accel + self.cruise;
        (t3, t3 + self.cruise_speed / a_max)
    }
}

pub fn scenario_control(cfg: &SimConfig) -> Result<Scenario> {
    scenario_control_with(cfg, &ControlProfile::default())
}

pub fn scenario_control_with(cfg: &SimConfig, profile: &ControlProfile) -> Result<Scenario> {
    if profile.accel > cfg.a_max || profile.accel <= 0.0 || profile.cruise_speed <= 0.0 {
        return Err(Error::InvalidInput("control profile acceleration must lie in (0, a_max]".into()));
    }
    let target: Vec<TargetSample> = (0..=cfg.horizon).map(|k| profile.sample(k as f64 * cfg.dt, cfg.a_max)).collect();
    check_accel(&target, cfg.a_max)?;
    let from = (profile.degraded_from / cfg.dt).round() as usize;
    let to = ((profile.degraded_to / cfg.dt).round() as usize).min(cfg.horizon + 1);
    let degradation = (0..=cfg.horizon)
        .map(|k| if k >= from && k < to { cfg.degrade_factor } else { 1.0 })
        .collect();
    let p0 = target[0].position - Vector3::new(cfg.d_star, 0.0, 0.0);
    Ok(Scenario {
        name: "control",
        kind: ScenarioKind::Control,
        dt: cfg.dt,
        uav_initial: UavState { state: State6::new(p0, Vector3::zeros()), pose_rotation: FrameRotation::identity() },
        target,
        degradation,
        degraded_steps: (from < to).then_some((from, to)),
    })
}

fn check_accel(target: &[TargetSample], a_max: f64) -> Result<()> {
    match target.iter().position(|s| s.acceleration.norm() > a_max * (1.0 + 1e-12)) {
        Some(k) => Err(Error::InvalidInput(format!("scenario acceleration exceeds a_max at step {k}"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimation_path_is_bounded_and_smooth() {
        let cfg = SimConfig::default();
        let s = scenario_estimation(&cfg).unwrap();
        assert_eq!(s.horizon(), cfg.horizon);
        let dt = cfg.dt;
        for k in 1..s.horizon() {
            assert!(s.target[k].acceleration.norm() <= cfg.a_max);
            let fd = (s.target[k + 1].position - 2.0 * s.target[k].position + s.target[k - 1].position) / (dt * dt);
            assert!((fd - s.target[k].acceleration).norm() < 1e-3);
            let fv = (s.target[k + 1].position - s.target[k - 1].position) / (2.0 * dt);
            assert!((fv - s.target[k].velocity).norm() < 1e-3);
        }
        assert_eq!(s, scenario_estimation(&cfg).unwrap());
    }

    #[test]
    fn control_profile_phases() {
        let cfg = SimConfig::default();
        let prof = ControlProfile::default();
        let s = scenario_control(&cfg).unwrap();
        // velocity is continuous across phase boundaries
        for k in 1..s.target.len() {
            let dv = (s.target[k].velocity - s.target[k - 1].velocity).norm();
            assert!(dv <= cfg.a_max * cfg.dt + 1e-12);
        }
        let (b0, b1) = prof.braking_interval(cfg.a_max);
        let mid = prof.sample(0.5 * (b0 + b1), cfg.a_max);
        assert_eq!(mid.acceleration.x, -cfg.a_max);
        let end = prof.sample(b1 + 1.0, cfg.a_max);
        assert_eq!(end.velocity.x, 0.0);
        assert!(s.target.iter().any(|t| (t.velocity.x - prof.cruise_speed).abs() < 1e-12));
        let (d0, d1) = s.degraded_steps.unwrap();
        assert!(s.degradation[d0] >= 3.0 && s.degradation[d1] == 1.0);
        assert!(d0 as f64 * cfg.dt <= b0 && d1 as f64 * cfg.dt >= b1);
    }

    #[test]
    fn rejects_profile_above_limit() {
        let cfg = SimConfig::default();
        let prof = ControlProfile { accel: 2.0 * cfg.a_max, ..ControlProfile::default() };
        assert!(scenario_control_with(&cfg, &prof).is_err());
    }
}
