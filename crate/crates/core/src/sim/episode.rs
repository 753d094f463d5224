//! One synchronous closed-loop (or scripted) episode and its metrics.

use nalgebra::{Matrix6, Vector3, Vector6};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::config::SimConfig;
use crate::control::{compute_control, CommandStatus, ControllerKind};
use crate::dynamics::{make_transition_matrices, step_target, step_uav, yaw_towards, TargetState, UavState};
use crate::error::{Error, Result};
use crate::estimation::window::process_covariance;
use crate::estimation::{ekf_step, initialize_belief, EstimatorKind, FactorGraphWindow, GaussianBelief};
use crate::sensing::{measure_bearing, measure_range, true_bearing_angles, true_range, BearingNoise};
use crate::sim::scenario::{estimation_uav_offset, Scenario};
use crate::stats::{rng_stream, Rng};
use crate::types::{State6, Sym6};

pub const STREAM_TARGET: u64 = 0;
pub const STREAM_RANGE: u64 = 1;
pub const STREAM_BEARING: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerMode {
    /// UAV follows a fixed offset from the true target; no feedback.
    Scripted,
    Closed(ControllerKind),
}

impl ControllerMode {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerMode::Scripted => "scripted",
            ControllerMode::Closed(k) => k.name(),
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        if s == "scripted" {
            return Some(ControllerMode::Scripted);
        }
        ControllerKind::from_name(s).map(ControllerMode::Closed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub target: State6,
    pub uav: State6,
    pub z_r: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub belief: GaussianBelief,
    pub radius: f64,
    pub u: Vector3<f64>,
    pub qp_status: Option<CommandStatus>,
    /// NaN when no envelope was formed.
    pub h_near: f64,
    pub h_far: f64,
    pub d_hat: f64,
    pub d_true: f64,
    pub degradation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub estimator: EstimatorKind,
    pub controller: ControllerMode,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    /// Final estimate of every step: fixed-lag smoothed for the factor graphs, filtered for the EKF.
    pub smoothed: Vec<Vector6<f64>>,
    /// Degraded-sensing interval copied from the scenario.
    pub degraded_steps: Option<(usize, usize)>,
}

enum Estimator {
    Window { window: FactorGraphWindow, robust: bool },
    Ekf { belief: Option<GaussianBelief>, transition: Matrix6<f64>, process: Sym6 },
}

impl Estimator {
    fn new(kind: EstimatorKind, cfg: &SimConfig) -> Result<Self> {
        Ok(match kind {
            EstimatorKind::RobustFactorGraph => Estimator::Window { window: FactorGraphWindow::from_config(cfg, true)?, robust: true },
            EstimatorKind::FactorGraph => Estimator::Window { window: FactorGraphWindow::from_config(cfg, false)?, robust: false },
            EstimatorKind::Ekf => Estimator::Ekf {
                belief: None,
                transition: make_transition_matrices(cfg.dt)?.0,
                process: process_covariance(cfg)?,
            },
        })
    }

    fn update(
        &mut self,
        pose: &UavState,
        z_r: &crate::sensing::RangeMeasurement,
        z_b: &crate::sensing::BearingMeasurement,
        cfg: &SimConfig,
    ) -> Result<GaussianBelief> {
        match self {
            Estimator::Window { window, robust } => {
                window.push_timestep(pose, z_r, z_b, cfg)?;
                let beliefs = window.optimize(*robust)?;
                beliefs.last().copied().ok_or(Error::InvalidInput("empty window".into()))
            }
            Estimator::Ekf { belief, transition, process } => {
                let next = match belief {
                    None => initialize_belief(pose, z_r, z_b, cfg)?,
                    Some(b) => {
                        ekf_step(b, transition, process, &pose.state.position, &pose.pose_rotation, z_r, z_b)?.belief
                    }
                };
                *belief = Some(next);
                Ok(next)
            }
        }
    }
}

fn process_noise(rng: &mut Rng, cfg: &SimConfig) -> Vector6<f64> {
    let sp = cfg.q_pos_std * cfg.truth_noise_scale;
    let sv = cfg.q_vel_std * cfg.truth_noise_scale;
    let mut n = Vector6::zeros();
    for i in 0..6 {
        let z: f64 = rng.sample(StandardNormal);
        n[i] = z * if i < 3 { sp } else { sv };
    }
    n
}

fn scripted_uav(target: &State6, t: f64, dt: f64) -> UavState {
    let p = target.position + estimation_uav_offset(t);
    let v = target.velocity + (estimation_uav_offset(t + dt) - estimation_uav_offset(t)) / dt;
    UavState { state: State6::new(p, v), pose_rotation: yaw_towards(&p, &target.position, crate::FrameRotation::identity()) }
}

/// Runs one episode: propagate truth, sense, estimate, control, actuate, once per step.
pub fn run_episode(
    scenario: &Scenario,
    estimator_kind: EstimatorKind,
    controller: ControllerMode,
    cfg: &SimConfig,
    seed: u64,
) -> Result<EpisodeTrace> {
    cfg.validate()?;
    let dt = scenario.dt;
    let horizon = scenario.horizon();
    let mut rng_target = rng_stream(seed, STREAM_TARGET);
    let mut rng_range = rng_stream(seed, STREAM_RANGE);
    let mut rng_bearing = rng_stream(seed, STREAM_BEARING);
    let mut estimator = Estimator::new(estimator_kind, cfg)?;
    let nominal_bearing = BearingNoise::from_config(cfg);

    let t0 = scenario.target[0];
    let mut target = TargetState { state: State6::new(t0.position, t0.velocity) };
    let mut uav = match controller {
        ControllerMode::Scripted => scripted_uav(&target.state, 0.0, dt),
        ControllerMode::Closed(_) => scenario.uav_initial,
    };
    let mut records = Vec::with_capacity(horizon);

    for k in 0..horizon {
        let t = k as f64 * dt;
        let mult = scenario.degradation[k];
        let d_true = true_range(&uav.state.position, &target.state.position)?;
        let z_r = measure_range(d_true, &mut rng_range, cfg.sigma_r * cfg.sensor_noise_scale, cfg.sigma_r);
        let angles = true_bearing_angles(&uav.pose_rotation, &uav.state.position, &target.state.position)?;
        let z_b = measure_bearing(angles, &mut rng_bearing, &nominal_bearing.degraded(mult));
        let belief = estimator.update(&uav, &z_r, &z_b, cfg)?;

        let (u, status, radius, h_near, h_far, d_hat) = match controller {
            ControllerMode::Scripted => {
                let radius = crate::control::confidence_radius(&belief.cov.position_block(), cfg.alpha_risk)?;
                let d_hat = (belief.mean.position - uav.state.position).norm();
                (Vector3::zeros(), None, radius, f64::NAN, f64::NAN, d_hat)
            }
            ControllerMode::Closed(kind) => {
                let cmd = compute_control(&belief, &uav, cfg, kind);
                let (hn, hf) = cmd.envelope.map_or((f64::NAN, f64::NAN), |e| (e.h_near, e.h_far));
                let d_hat = cmd.kinematics.map_or((belief.mean.position - uav.state.position).norm(), |k| k.d_hat);
                (cmd.u, Some(cmd.qp_status), cmd.radius, hn, hf, d_hat)
            }
        };
        records.push(StepRecord {
            step: k,
            t,
            target: target.state,
            uav: uav.state,
            z_r: z_r.z_r,
            azimuth: z_b.azimuth,
            elevation: z_b.elevation,
            belief,
            radius,
            u,
            qp_status: status,
            h_near,
            h_far,
            d_hat,
            d_true,
            degradation: mult,
        });

        let noise = process_noise(&mut rng_target, cfg);
        target = step_target(&target, &scenario.target[k].acceleration, dt, &noise, cfg.a_max)?;
        uav = match controller {
            ControllerMode::Scripted => scripted_uav(&target.state, t + dt, dt),
            ControllerMode::Closed(_) => {
                let mut next = step_uav(&uav, &u, dt, (cfg.u_min, cfg.u_max))?;
                next.pose_rotation = yaw_towards(&next.state.position, &belief.mean.position, uav.pose_rotation);
                next
            }
        };
    }

    let mut smoothed: Vec<Vector6<f64>> = records.iter().map(|r| r.belief.mean.to_vector()).collect();
    if let Estimator::Window { window, .. } = &mut estimator {
        for (step, x) in window.take_finalized() {
            smoothed[step] = x;
        }
        for (step, x) in window.steps().into_iter().zip(window.states()) {
            smoothed[step] = x;
        }
    }
    Ok(EpisodeTrace {
        estimator: estimator_kind,
        controller,
        seed,
        records,
        smoothed,
        degraded_steps: scenario.degraded_steps,
    })
}

/// Per-episode summary statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub steps: usize,
    /// Position RMSE of the final per-step estimates (see [`EpisodeTrace::smoothed`]).
    pub rmse: f64,
    /// Position RMSE of the estimates available online at each step.
    pub rmse_filtered: f64,
    pub violation_steps: usize,
    pub min_d: f64,
    pub max_d: f64,
    pub mean_radius: f64,
    pub max_radius: f64,
    pub median_radius_degraded: f64,
    pub median_radius_nominal: f64,
    pub relaxed_steps: usize,
    pub fallback_steps: usize,
    pub degraded_beliefs: usize,
    /// Steps with the true target inside the confidence ball of the online estimate.
    pub covered_steps: usize,
    /// UAV speed bound respected on every step (per axis).
    pub max_speed_excess: f64,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl RunMetrics {
    pub fn from_trace(trace: &EpisodeTrace, cfg: &SimConfig) -> Self {
        let recs = &trace.records;
        let n = recs.len().max(1) as f64;
        let sq = |a: &Vector3<f64>, b: &Vector3<f64>| (a - b).norm_squared();
        let rmse = (recs
            .iter()
            .zip(&trace.smoothed)
            .map(|(r, s)| sq(&r.target.position, &s.fixed_rows::<3>(0).into_owned()))
            .sum::<f64>()
            / n)
            .sqrt();
        let rmse_filtered =
            (recs.iter().map(|r| sq(&r.target.position, &r.belief.mean.position)).sum::<f64>() / n).sqrt();
        let in_window = |k: usize| trace.degraded_steps.is_some_and(|(a, b)| k >= a && k < b);
        let mut r_in: Vec<f64> = recs.iter().filter(|r| in_window(r.step)).map(|r| r.radius).collect();
        let mut r_out: Vec<f64> = recs.iter().filter(|r| !in_window(r.step)).map(|r| r.radius).collect();
        Self {
            seed: trace.seed,
            steps: recs.len(),
            rmse,
            rmse_filtered,
            violation_steps: recs.iter().filter(|r| r.d_true < cfg.d_min || r.d_true > cfg.d_max).count(),
            min_d: recs.iter().map(|r| r.d_true).fold(f64::INFINITY, f64::min),
            max_d: recs.iter().map(|r| r.d_true).fold(f64::NEG_INFINITY, f64::max),
            mean_radius: recs.iter().map(|r| r.radius).sum::<f64>() / n,
            max_radius: recs.iter().map(|r| r.radius).fold(0.0, f64::max),
            median_radius_degraded: median(&mut r_in),
            median_radius_nominal: median(&mut r_out),
            relaxed_steps: recs.iter().filter(|r| r.qp_status == Some(CommandStatus::Relaxed)).count(),
            fallback_steps: recs.iter().filter(|r| r.qp_status == Some(CommandStatus::Fallback)).count(),
            degraded_beliefs: recs.iter().filter(|r| r.belief.degraded).count(),
            covered_steps: recs
                .iter()
                .filter(|r| (r.target.position - r.belief.mean.position).norm() <= r.radius)
                .count(),
            max_speed_excess: recs
                .iter()
                .map(|r| r.uav.velocity.amax() - cfg.v_max)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::{scenario_control, scenario_estimation};

    fn short(cfg: &mut SimConfig, horizon: usize) {
        cfg.horizon = horizon;
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let mut cfg = SimConfig::default();
        short(&mut cfg, 200);
        let s = scenario_control(&cfg).unwrap();
        let mode = ControllerMode::Closed(ControllerKind::CovarianceAware);
        let a = run_episode(&s, EstimatorKind::RobustFactorGraph, mode, &cfg, 9).unwrap();
        let b = run_episode(&s, EstimatorKind::RobustFactorGraph, mode, &cfg, 9).unwrap();
        assert_eq!(a, b);
        let c = run_episode(&s, EstimatorKind::RobustFactorGraph, mode, &cfg, 10).unwrap();
        assert_ne!(a.records[5].z_r, c.records[5].z_r);
    }

    #[test]
    fn record_per_step() {
        let mut cfg = SimConfig::default();
        short(&mut cfg, 60);
        let s = scenario_estimation(&cfg).unwrap();
        for kind in EstimatorKind::ALL {
            let tr = run_episode(&s, kind, ControllerMode::Scripted, &cfg, 3).unwrap();
            assert_eq!(tr.records.len(), 60);
            assert!(tr.records.iter().enumerate().all(|(i, r)| r.step == i));
            let m = RunMetrics::from_trace(&tr, &cfg);
            assert!(m.rmse >= 0.0 && m.rmse.is_finite());
            assert!(m.violation_steps <= 60);
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
