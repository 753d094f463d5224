//! Covariance-aware CLF-CBF standoff controller.
//!
//! The estimator's position covariance sets a confidence radius `R`. `R` widens the
//! dead-zone of the tracking errors and shrinks the admissible distance band. A QP then
//! filters the CLF reference acceleration through two high-order barrier constraints,
//! the per-axis input box and the per-axis speed limit.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::config::SimConfig;
use crate::dynamics::UavState;
use crate::error::{Error, Result};
use crate::estimation::GaussianBelief;
use crate::qp::{solve, QpProblem, QpStatus};
use crate::stats::chi2_quantile;
use crate::types::Sym3;

/// Minimum estimated distance for which LoS quantities are defined.
pub const D_FLOOR: f64 = 0.05;
/// Fraction of the physical band the radius may consume on each side.
pub const RADIUS_CLAMP: f64 = 0.45;
/// Penalty on the shared barrier slack of the relaxed QP.
pub const SLACK_WEIGHT: f64 = 1e4;

/// Row layout of the safety-filter QP.
pub const ROW_NEAR: usize = 0;
pub const ROW_FAR: usize = 1;
pub const ROW_BOX: usize = 2;
pub const ROW_SPEED: usize = 8;

/// `sqrt(chi2_3^{-1}(1 - alpha) * lambda_max(cov))`.
pub fn confidence_radius(cov_pos: &Sym3, alpha_risk: f64) -> Result<f64> {
    let q = chi2_quantile(3, 1.0 - alpha_risk)?;
    Ok((q * cov_pos.max_eigenvalue().max(0.0)).sqrt())
}

/// Estimated relative geometry between UAV and target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeKinematics {
    pub d_hat: f64,
    /// Unit line of sight from UAV to target, global frame.
    pub n_hat: Vector3<f64>,
    /// Range rate.
    pub v_r_hat: f64,
    /// Relative velocity orthogonal to the line of sight.
    pub v_tau_hat: Vector3<f64>,
    /// Altitude error `z_R - z_T`.
    pub e_z_hat: f64,
    /// Altitude error rate.
    pub v_z_hat: f64,
}

pub fn relative_kinematics(belief: &GaussianBelief, uav: &UavState) -> Result<RelativeKinematics> {
    let rel = belief.mean.position - uav.state.position;
    let d_hat = rel.norm();
    if !(d_hat > D_FLOOR) {
        return Err(Error::DegenerateGeometry("estimated range below d_floor"));
    }
    let n_hat = rel / d_hat;
    let v_rel = belief.mean.velocity - uav.state.velocity;
    let v_r_hat = n_hat.dot(&v_rel);
    Ok(RelativeKinematics {
        d_hat,
        n_hat,
        v_r_hat,
        v_tau_hat: v_rel - n_hat * v_r_hat,
        e_z_hat: uav.state.position.z - belief.mean.position.z,
        v_z_hat: uav.state.velocity.z - belief.mean.velocity.z,
    })
}

fn deadzone(x: f64, r: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    (x.abs() - r).max(0.0) * x.signum()
}

/// Range and altitude errors with a dead-zone of half-width `r`.
pub fn deadzone_errors(d_hat: f64, e_z_hat: f64, r: f64, d_star: f64) -> (f64, f64) {
    (deadzone(d_hat - d_star, r), deadzone(e_z_hat, r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub k_r: f64,
    pub k_vr: f64,
    pub k_z: f64,
    pub k_vz: f64,
    pub k_tau: f64,
}

impl Gains {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self { k_r: cfg.k_r, k_vr: cfg.k_vr, k_z: cfg.k_z, k_vz: cfg.k_vz, k_tau: cfg.k_tau }
    }
}

pub fn clf_value(kin: &RelativeKinematics, errors: (f64, f64), g: &Gains) -> f64 {
    let (er, ez) = errors;
    0.5 * (g.k_r * er * er
        + g.k_vr * kin.v_r_hat * kin.v_r_hat
        + g.k_z * ez * ez
        + g.k_vz * kin.v_z_hat * kin.v_z_hat
        + g.k_tau * kin.v_tau_hat.norm_squared())
}

pub fn reference_accel(kin: &RelativeKinematics, errors: (f64, f64), g: &Gains) -> Vector3<f64> {
    let (er, ez) = errors;
    kin.n_hat * (g.k_r * er + g.k_vr * kin.v_r_hat) + kin.v_tau_hat * g.k_tau
        - Vector3::z() * (g.k_z * ez + g.k_vz * kin.v_z_hat)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyEnvelope {
    pub radius: f64,
    pub d_min_eff: f64,
    pub d_max_eff: f64,
    pub h_near: f64,
    pub h_far: f64,
}

/// Distance band shrunk by the (clamped) radius, and the two barrier values at `d_hat`.
pub fn safety_envelope(d_hat: f64, radius: f64, d_min: f64, d_max: f64) -> SafetyEnvelope {
    let rc = radius.min(RADIUS_CLAMP * (d_max - d_min)).max(0.0);
    let d_min_eff = d_min + rc;
    let d_max_eff = d_max - rc;
    SafetyEnvelope { radius, d_min_eff, d_max_eff, h_near: d_hat - d_min_eff, h_far: d_max_eff - d_hat }
}

/// One affine constraint `a' u <= b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Halfspace {
    pub a: Vector3<f64>,
    pub b: f64,
}

/// Near and far barrier constraints under the worst-case target acceleration.
pub fn hocbf_halfspaces(kin: &RelativeKinematics, env: &SafetyEnvelope, omega: f64, a_max: f64) -> [Halfspace; 2] {
    let centripetal = kin.v_tau_hat.norm_squared() / kin.d_hat;
    let w2 = omega * omega;
    [
        Halfspace { a: kin.n_hat, b: -a_max + centripetal + 2.0 * omega * kin.v_r_hat + w2 * env.h_near },
        Halfspace { a: -kin.n_hat, b: -a_max - centripetal - 2.0 * omega * kin.v_r_hat + w2 * env.h_far },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// Reference acceleration through boxes and speed limits only.
    ClfOnly,
    /// Barrier constraints on the physical band (no radius in the envelope).
    FixedClfCbf,
    /// Barrier constraints on the radius-shrunk band.
    CovarianceAware,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] =
        [ControllerKind::ClfOnly, ControllerKind::FixedClfCbf, ControllerKind::CovarianceAware];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::ClfOnly => "clf_only",
            ControllerKind::FixedClfCbf => "fixed_clf_cbf",
            ControllerKind::CovarianceAware => "ca_clf_cbf",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandStatus {
    Optimal,
    Relaxed,
    Fallback,
}

impl CommandStatus {
    pub fn name(&self) -> &'static str {
        match self {
            CommandStatus::Optimal => "optimal",
            CommandStatus::Relaxed => "relaxed",
            CommandStatus::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlCommand {
    pub u: Vector3<f64>,
    pub u_ref: Vector3<f64>,
    pub qp_status: CommandStatus,
    /// Active QP rows, see `ROW_*`.
    pub active_constraints: Vec<usize>,
    /// Confidence radius of the belief.
    pub radius: f64,
    pub envelope: Option<SafetyEnvelope>,
    pub kinematics: Option<RelativeKinematics>,
}

/// Rows `G u <= h` for the box and speed limits.
fn actuation_rows(uav: &UavState, cfg: &SimConfig) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let mut a = Vec::with_capacity(12);
    let mut b = Vec::with_capacity(12);
    for i in 0..3 {
        let e = Vector3::ith(i, 1.0);
        a.push(e);
        b.push(cfg.u_max);
        a.push(-e);
        b.push(-cfg.u_min);
    }
    for i in 0..3 {
        let e = Vector3::ith(i, 1.0);
        let v = uav.state.velocity[i];
        a.push(e * cfg.dt);
        b.push(cfg.v_max - v);
        a.push(-e * cfg.dt);
        b.push(cfg.v_max + v);
    }
    (a, b)
}

fn fallback(uav: &UavState, cfg: &SimConfig, u_ref: Vector3<f64>, radius: f64) -> ControlCommand {
    let u = (-uav.state.velocity * cfg.k_vr).map(|c| c.clamp(cfg.u_min, cfg.u_max));
    ControlCommand {
        u,
        u_ref,
        qp_status: CommandStatus::Fallback,
        active_constraints: Vec::new(),
        radius,
        envelope: None,
        kinematics: None,
    }
}

fn clamp_to_box(u: Vector3<f64>, cfg: &SimConfig) -> Vector3<f64> {
    // solver tolerance can leave u a hair outside the physical box
    u.map(|c| c.clamp(cfg.u_min, cfg.u_max))
}

/// Safety-filter QP over `u` (plus the shared barrier slack when `relaxed`).
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyQp {
    pub problem: QpProblem,
    /// Row index (`ROW_NEAR` .. `ROW_SPEED + 5`) of each problem row.
    pub rows: Vec<usize>,
}

/// Builds `min 1/2 |u - u_ref|^2 (+ 1/2 w s^2)` subject to the barrier, box and speed rows.
/// `ClfOnly` omits the barrier rows.
pub fn safety_qp(
    kin: &RelativeKinematics,
    env: &SafetyEnvelope,
    u_ref: &Vector3<f64>,
    uav: &UavState,
    cfg: &SimConfig,
    kind: ControllerKind,
    relaxed: bool,
) -> Result<SafetyQp> {
    let use_barriers = kind != ControllerKind::ClfOnly;
    let barriers = hocbf_halfspaces(kin, env, cfg.omega, cfg.a_max);
    let (act_a, act_b) = actuation_rows(uav, cfg);
    let mut rows: Vec<(Vector3<f64>, f64, bool)> = Vec::with_capacity(14);
    for hs in barriers.iter() {
        rows.push((hs.a, hs.b, true));
    }
    for (a, b) in act_a.iter().zip(&act_b) {
        rows.push((*a, *b, false));
    }
    let kept: Vec<usize> = (0..rows.len()).filter(|&i| use_barriers || !rows[i].2).collect();
    let slack = relaxed && use_barriers;
    let n = if slack { 4 } else { 3 };
    let mut p = DMatrix::identity(n, n);
    if slack {
        p[(3, 3)] = SLACK_WEIGHT;
    }
    let mut q = DVector::zeros(n);
    for i in 0..3 {
        q[i] = -u_ref[i];
    }
    let mut g = DMatrix::zeros(kept.len(), n);
    let mut h = DVector::zeros(kept.len());
    for (r, &i) in kept.iter().enumerate() {
        let (a, b, barrier) = rows[i];
        for j in 0..3 {
            g[(r, j)] = a[j];
        }
        if slack && barrier {
            g[(r, 3)] = -1.0;
        }
        h[r] = b;
    }
    Ok(SafetyQp { problem: QpProblem::new(p, q, g, h)?, rows: kept })
}

/// Safety-filtered command for the current belief. Infeasible barrier constraints are
/// softened by one shared slack; degenerate geometry or solver failure falls back to
/// velocity damping.
pub fn compute_control(
    belief: &GaussianBelief,
    uav: &UavState,
    cfg: &SimConfig,
    kind: ControllerKind,
) -> ControlCommand {
    let radius = confidence_radius(&belief.cov.position_block(), cfg.alpha_risk).unwrap_or(f64::INFINITY);
    let kin = match relative_kinematics(belief, uav) {
        Ok(k) if radius.is_finite() && belief.mean.is_finite() => k,
        _ => return fallback(uav, cfg, Vector3::zeros(), radius),
    };
    let gains = Gains::from_config(cfg);
    let errors = deadzone_errors(kin.d_hat, kin.e_z_hat, radius, cfg.d_star);
    let u_ref = reference_accel(&kin, errors, &gains);

    let envelope_radius = if kind == ControllerKind::CovarianceAware { radius } else { 0.0 };
    let env = safety_envelope(kin.d_hat, envelope_radius, cfg.d_min, cfg.d_max);
    let use_barriers = kind != ControllerKind::ClfOnly;
    let build = |relaxed: bool| safety_qp(&kin, &env, &u_ref, uav, cfg, kind, relaxed).ok();

    let finish = |qp: &SafetyQp, x: &DVector<f64>, active: &[usize], status: CommandStatus| ControlCommand {
        u: clamp_to_box(Vector3::new(x[0], x[1], x[2]), cfg),
        u_ref,
        qp_status: status,
        active_constraints: active.iter().map(|&r| qp.rows[r]).collect(),
        radius,
        envelope: Some(env),
        kinematics: Some(kin),
    };

    if let Some(qp) = build(false) {
        if let Ok(sol) = solve(&qp.problem) {
            if sol.status == QpStatus::Optimal {
                return finish(&qp, &sol.x, &sol.active, CommandStatus::Optimal);
            }
        }
    }
    if use_barriers {
        if let Some(qp) = build(true) {
            if let Ok(sol) = solve(&qp.problem) {
                if sol.status == QpStatus::Optimal {
                    return finish(&qp, &sol.x, &sol.active, CommandStatus::Relaxed);
                }
            }
        }
    }
    let mut cmd = fallback(uav, cfg, u_ref, radius);
    cmd.envelope = Some(env);
    cmd.kinematics = Some(kin);
    cmd
}
