//! Fixed-lag factor-graph smoother over target states.
//!
//! The window holds up to `window_size` consecutive target nodes joined by dynamics
//! factors, one Gaussian prior on the oldest node, and per-node range/bearing (or linear
//! position) factors. When the window overflows, the oldest node is marginalized into a
//! Gaussian prior on its successor via the Schur complement of the linearized system.

use std::collections::VecDeque;

use nalgebra::{Matrix2, Matrix3, Matrix6, Vector2, Vector3, Vector6};

use crate::config::SimConfig;
use crate::dynamics::{make_transition_matrices, UavState};
use crate::error::{Error, Result};
use crate::estimation::blocktri::BlockTridiagonal;
use crate::estimation::factor::{bearing_jacobian, Factor};
use crate::estimation::loss::{cauchy_loss, cauchy_weight};
use crate::estimation::{initialize_belief, GaussianBelief};
use crate::sensing::{
    bearing_residual, geodesic_angle, measurement_to_unit, predicted_unit_bearing, tangent_basis, BearingMeasurement,
    RangeMeasurement, UnitBearing, ANTIPODAL_MARGIN,
};
use crate::types::{FrameRotation, Sym3, Sym6};

pub const MAX_ITERATIONS: usize = 25;
pub const STEP_TOLERANCE: f64 = 1e-8;
const INITIAL_DAMPING: f64 = 1e-4;
const MAX_DAMPING: f64 = 1e8;
const SINGULAR_REGULARIZATION: f64 = 1e-9;
const COST_ROUNDING: f64 = 1e-12;

/// Known UAV pose at the time of a measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSnapshot {
    pub position: Vector3<f64>,
    pub rotation: FrameRotation,
}

impl From<&UavState> for PoseSnapshot {
    fn from(u: &UavState) -> Self {
        Self { position: u.state.position, rotation: u.pose_rotation }
    }
}

/// Measurements attached to one node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeMeasurements {
    pub range: Option<RangeMeasurement>,
    pub bearing: Option<BearingMeasurement>,
    /// Direct position observation with its covariance.
    pub position: Option<(Vector3<f64>, Sym3)>,
}

#[derive(Debug, Clone)]
struct WindowNode {
    step: usize,
    estimate: Vector6<f64>,
    pose: PoseSnapshot,
    measurements: NodeMeasurements,
    terms: NodeTerms,
}

#[derive(Debug, Clone, Copy)]
struct GaussianPrior {
    mean: Vector6<f64>,
    information: Matrix6<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSettings {
    pub window_size: usize,
    pub transition: Matrix6<f64>,
    pub process_information: Matrix6<f64>,
    pub cauchy_c: f64,
}

impl WindowSettings {
    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        let (a, _) = make_transition_matrices(cfg.dt)?;
        Ok(Self {
            window_size: cfg.window_size,
            transition: a,
            process_information: process_covariance(cfg)?
                .matrix()
                .try_inverse()
                .ok_or(Error::InvalidInput("singular process covariance".into()))?,
            cauchy_c: cfg.cauchy_c,
        })
    }
}

/// Diagonal target process covariance from the configured per-step standard deviations.
pub fn process_covariance(cfg: &SimConfig) -> Result<Sym6> {
    let p = cfg.q_pos_std * cfg.q_pos_std;
    let v = cfg.q_vel_std * cfg.q_vel_std;
    Sym6::from_diagonal([p, p, p, v, v, v])
}

/// Sliding-window smoother state.
#[derive(Debug, Clone)]
pub struct FactorGraphWindow {
    settings: WindowSettings,
    dynamics: DynamicsBlocks,
    nodes: VecDeque<WindowNode>,
    prior: Option<GaussianPrior>,
    /// Prior for the first node when supplied explicitly instead of from measurements.
    pending_prior: Option<GaussianPrior>,
    /// Loss used for linearization during marginalization; follows the last optimize call.
    robust: bool,
    next_step: usize,
    finalized: Vec<(usize, Vector6<f64>)>,
    degraded: bool,
}

/// Summary of one optimize call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_cost: f64,
    pub degraded: bool,
}

struct Normal {
    hessian: BlockTridiagonal,
    neg_gradient: Vec<Vector6<f64>>,
}

/// Constant Hessian blocks of a dynamics factor: `A^T W A` and `A^T W`.
#[derive(Debug, Clone, Copy)]
struct DynamicsBlocks {
    at_w_a: Matrix6<f64>,
    at_w: Matrix6<f64>,
}

impl DynamicsBlocks {
    fn new(s: &WindowSettings) -> Self {
        let at_w = s.transition.transpose() * s.process_information;
        Self { at_w_a: at_w * s.transition, at_w }
    }
}

/// Measurement data of a node in the form used by the solver.
#[derive(Debug, Clone, Copy, Default)]
struct NodeTerms {
    /// Range and its information `1 / sigma^2`.
    range: Option<(f64, f64)>,
    bearing: Option<(UnitBearing, Matrix2<f64>)>,
    position: Option<(Vector3<f64>, Matrix3<f64>)>,
}

impl NodeTerms {
    fn new(m: &NodeMeasurements) -> Self {
        Self {
            range: m.range.map(|r| (r.z_r, 1.0 / (r.sigma_r * r.sigma_r))),
            bearing: m
                .bearing
                .map(|b| (measurement_to_unit(&b), b.cov.matrix().try_inverse().unwrap_or_else(Matrix2::zeros))),
            position: m.position.map(|(p, cov)| (p, cov.matrix().try_inverse().unwrap_or_else(Matrix3::zeros))),
        }
    }
}

fn bearing_residual_at(pose: &PoseSnapshot, z: &UnitBearing, p: &Vector3<f64>) -> Option<Vector2<f64>> {
    let h = predicted_unit_bearing(&pose.rotation, &pose.position, p).ok()?;
    bearing_residual(z, &h, &tangent_basis(&h)).ok()
}

struct NormalEquations {
    hessian: BlockTridiagonal,
    neg_gradient: Vec<Vector6<f64>>,
    cost: f64,
}

impl FactorGraphWindow {
    pub fn new(settings: WindowSettings, robust: bool) -> Self {
        Self {
            dynamics: DynamicsBlocks::new(&settings),
            settings,
            nodes: VecDeque::new(),
            prior: None,
            pending_prior: None,
            robust,
            next_step: 0,
            finalized: Vec::new(),
            degraded: false,
        }
    }

    pub fn from_config(cfg: &SimConfig, robust: bool) -> Result<Self> {
        Ok(Self::new(WindowSettings::from_config(cfg)?, robust))
    }

    /// Window whose first node receives the given prior; that node's measurements are
    /// attached as ordinary factors.
    pub fn with_prior(settings: WindowSettings, robust: bool, mean: Vector6<f64>, cov: &Sym6) -> Result<Self> {
        let information = cov
            .matrix()
            .try_inverse()
            .ok_or(Error::InvalidInput("singular prior covariance".into()))?;
        let mut w = Self::new(settings, robust);
        w.pending_prior = Some(GaussianPrior { mean, information });
        Ok(w)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn settings(&self) -> &WindowSettings {
        &self.settings
    }

    /// Current estimates of the window nodes, oldest first.
    pub fn states(&self) -> Vec<Vector6<f64>> {
        self.nodes.iter().map(|n| n.estimate).collect()
    }

    /// Simulation steps of the window nodes, oldest first.
    pub fn steps(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.step).collect()
    }

    /// Estimates of nodes that have left the window, in step order, as `(step, state)`.
    pub fn take_finalized(&mut self) -> Vec<(usize, Vector6<f64>)> {
        std::mem::take(&mut self.finalized)
    }

    /// Adds one timestep of UWB measurements.
    pub fn push_timestep(
        &mut self,
        pose: &UavState,
        z_r: &RangeMeasurement,
        z_b: &BearingMeasurement,
        cfg: &SimConfig,
    ) -> Result<()> {
        if self.nodes.is_empty() && self.prior.is_none() && self.pending_prior.is_none() {
            let belief = initialize_belief(pose, z_r, z_b, cfg)?;
            let information = belief
                .cov
                .matrix()
                .try_inverse()
                .ok_or(Error::InvalidInput("singular initial covariance".into()))?;
            self.prior = Some(GaussianPrior { mean: belief.mean.to_vector(), information });
            self.nodes.push_back(WindowNode {
                step: self.next_step,
                estimate: belief.mean.to_vector(),
                pose: PoseSnapshot::from(pose),
                measurements: NodeMeasurements::default(),
                terms: NodeTerms::default(),
            });
            self.next_step += 1;
            return Ok(());
        }
        let meas = NodeMeasurements { range: Some(*z_r), bearing: Some(*z_b), position: None };
        self.push_measurements(PoseSnapshot::from(pose), meas)
    }

    /// Adds a node with arbitrary measurements. On an empty window a prior must have been
    /// supplied through [`FactorGraphWindow::with_prior`].
    pub fn push_measurements(&mut self, pose: PoseSnapshot, mut measurements: NodeMeasurements) -> Result<()> {
        let estimate = match self.nodes.back() {
            Some(prev) => self.settings.transition * prev.estimate,
            None => {
                let prior = self
                    .pending_prior
                    .take()
                    .ok_or(Error::InvalidInput("window has no prior for its first node".into()))?;
                self.prior = Some(prior);
                prior.mean
            }
        };
        if let Some(b) = measurements.bearing {
            let p = estimate.fixed_rows::<3>(0).into_owned();
            let usable = predicted_unit_bearing(&pose.rotation, &pose.position, &p)
                .map(|h| geodesic_angle(&h, &measurement_to_unit(&b)) <= std::f64::consts::PI - ANTIPODAL_MARGIN)
                .unwrap_or(false);
            if !usable {
                measurements.bearing = None;
            }
        }
        let terms = NodeTerms::new(&measurements);
        self.nodes.push_back(WindowNode { step: self.next_step, estimate, pose, measurements, terms });
        self.next_step += 1;
        while self.nodes.len() > self.settings.window_size {
            self.marginalize_oldest();
        }
        Ok(())
    }

    /// Factors of the current window; node indices are window-relative.
    pub fn factors(&self, robust: bool) -> Vec<Factor> {
        let mut out = Vec::with_capacity(1 + 3 * self.nodes.len());
        if let Some(p) = &self.prior {
            out.push(Factor::Prior { node: 0, mean: p.mean, information: p.information });
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if i + 1 < self.nodes.len() {
                out.push(Factor::Dynamics {
                    from: i,
                    transition: self.settings.transition,
                    information: self.settings.process_information,
                });
            }
            self.measurement_factors(i, node, robust, &mut out);
        }
        out
    }

    fn measurement_factors(&self, index: usize, node: &WindowNode, robust: bool, out: &mut Vec<Factor>) {
        let m = &node.measurements;
        if let Some(r) = m.range {
            out.push(Factor::Range { node: index, uav_position: node.pose.position, z_r: r.z_r, sigma_r: r.sigma_r });
        }
        if let Some(b) = m.bearing {
            let information = b.cov.matrix().try_inverse().unwrap_or_else(Matrix2::zeros);
            out.push(Factor::Bearing {
                node: index,
                uav_position: node.pose.position,
                rotation: node.pose.rotation,
                measured: measurement_to_unit(&b),
                information,
                cauchy_c: robust.then_some(self.settings.cauchy_c),
            });
        }
        if let Some((p, cov)) = m.position {
            let information = cov.matrix().try_inverse().unwrap_or_else(Matrix3::zeros);
            out.push(Factor::Position { node: index, measured: p, information });
        }
    }

    fn normal_equations(&self, states: &[Vector6<f64>], robust: bool) -> NormalEquations {
        let n = states.len();
        let mut sys = Normal { hessian: BlockTridiagonal::zeros(n), neg_gradient: vec![Vector6::zeros(); n] };
        let cost = self.assemble(states, robust, Some(&mut sys));
        NormalEquations { hessian: sys.hessian, neg_gradient: sys.neg_gradient, cost }
    }

    /// MAP objective; when `sys` is given, also adds the IRLS-weighted Gauss-Newton system.
    /// Factors with degenerate geometry are skipped.
    fn assemble(&self, states: &[Vector6<f64>], robust: bool, mut sys: Option<&mut Normal>) -> f64 {
        let mut cost = self.add_prior(states, sys.as_deref_mut());
        for k in 0..states.len() {
            if k + 1 < states.len() {
                cost += self.add_dynamics(k, states, sys.as_deref_mut());
            }
            cost += self.add_measurements(k, states, robust, sys.as_deref_mut());
        }
        cost
    }

    fn add_prior(&self, states: &[Vector6<f64>], sys: Option<&mut Normal>) -> f64 {
        let Some(prior) = &self.prior else { return 0.0 };
        let r = states[0] - prior.mean;
        let wr = prior.information * r;
        if let Some(sys) = sys {
            sys.hessian.diag[0] += prior.information;
            sys.neg_gradient[0] -= wr;
        }
        r.dot(&wr)
    }

    fn add_dynamics(&self, k: usize, states: &[Vector6<f64>], sys: Option<&mut Normal>) -> f64 {
        let d = &self.dynamics;
        let r = states[k + 1] - self.settings.transition * states[k];
        let wr = self.settings.process_information * r;
        if let Some(sys) = sys {
            sys.hessian.diag[k] += d.at_w_a;
            sys.hessian.diag[k + 1] += self.settings.process_information;
            sys.hessian.upper[k] -= d.at_w;
            sys.neg_gradient[k] += d.at_w * r;
            sys.neg_gradient[k + 1] -= wr;
        }
        r.dot(&wr)
    }

    fn add_measurements(&self, k: usize, states: &[Vector6<f64>], robust: bool, mut sys: Option<&mut Normal>) -> f64 {
        let node = &self.nodes[k];
        let terms = &node.terms;
        let p = states[k].fixed_rows::<3>(0).into_owned();
        let mut h_pp = Matrix3::zeros();
        let mut g_p = Vector3::zeros();
        let mut cost = 0.0;
        if let Some((z_r, w)) = terms.range {
            let rel = p - node.pose.position;
            let d = rel.norm();
            if d >= 1e-9 {
                let r = z_r - d;
                cost += w * r * r;
                if sys.is_some() {
                    let u = rel / d;
                    h_pp += u * u.transpose() * w;
                    g_p += u * (w * r);
                }
            }
        }
        if let Some((z, info)) = &terms.bearing {
            if sys.is_some() {
                if let Ok((r, jp, _)) = bearing_jacobian(&node.pose.position, &node.pose.rotation, z, &p) {
                    let s = r.dot(&(info * r));
                    let c = self.settings.cauchy_c;
                    cost += if robust { cauchy_loss(s, c) } else { s };
                    let weight = if robust { cauchy_weight(s, c) } else { 1.0 };
                    let jtw = jp.transpose() * (info * weight);
                    h_pp += jtw * jp;
                    g_p -= jtw * r;
                }
            } else if let Some(r) = bearing_residual_at(&node.pose, z, &p) {
                let s = r.dot(&(info * r));
                cost += if robust { cauchy_loss(s, self.settings.cauchy_c) } else { s };
            }
        }
        if let Some((z, info)) = &terms.position {
            let r = p - z;
            let wr = info * r;
            cost += r.dot(&wr);
            if sys.is_some() {
                h_pp += info;
                g_p -= wr;
            }
        }
        if let Some(sys) = sys.as_deref_mut() {
            let mut blk = sys.hessian.diag[k].fixed_view_mut::<3, 3>(0, 0);
            blk += h_pp;
            let mut g = sys.neg_gradient[k].fixed_rows_mut::<3>(0);
            g += g_p;
        }
        cost
    }

    /// Damped Gauss-Newton with IRLS reweighting of robust bearing factors. Returns the
    /// marginal belief of every window node, oldest first.
    pub fn optimize(&mut self, robust: bool) -> Result<Vec<GaussianBelief>> {
        self.optimize_with_report(robust).map(|(b, _)| b)
    }

    pub fn optimize_with_report(&mut self, robust: bool) -> Result<(Vec<GaussianBelief>, SolveReport)> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidInput("optimize on an empty window".into()));
        }
        self.robust = robust;
        let mut states = self.states();
        let mut system = self.normal_equations(&states, robust);
        let mut lambda = INITIAL_DAMPING;
        let mut iterations = 0;
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            let mut step_norm = None;
            while lambda <= MAX_DAMPING {
                let damped = system.hessian.damped(lambda);
                let fact = match damped.factorize() {
                    Some(f) => f,
                    None => match damped.regularized(SINGULAR_REGULARIZATION).factorize() {
                        Some(f) => f,
                        None => {
                            lambda *= 10.0;
                            continue;
                        }
                    },
                };
                let delta = fact.solve(&system.neg_gradient);
                let trial: Vec<Vector6<f64>> = states.iter().zip(&delta).map(|(x, d)| x + d).collect();
                let trial_cost = self.assemble(&trial, robust, None);
                // cost rounding noise must not block the final Gauss-Newton steps
                if trial_cost.is_finite() && trial_cost <= system.cost + COST_ROUNDING * system.cost.abs() {
                    states = trial;
                    step_norm = Some(delta.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt());
                    lambda = (lambda / 10.0).max(1e-12);
                    break;
                }
                lambda *= 10.0;
            }
            let Some(step) = step_norm else { break };
            system = self.normal_equations(&states, robust);
            if step < STEP_TOLERANCE {
                break;
            }
        }
        for (node, x) in self.nodes.iter_mut().zip(&states) {
            node.estimate = *x;
        }
        let (fact, degraded) = match system.hessian.factorize() {
            Some(f) => (f, false),
            None => (
                system
                    .hessian
                    .regularized(SINGULAR_REGULARIZATION)
                    .factorize()
                    .ok_or(Error::InvalidInput("information matrix cannot be conditioned".into()))?,
                true,
            ),
        };
        self.degraded = degraded;
        let covs = fact.inverse_diagonal();
        let beliefs = states
            .iter()
            .zip(covs)
            .map(|(x, c)| GaussianBelief::from_parts(x, &c, degraded))
            .collect::<Result<Vec<_>>>()?;
        Ok((beliefs, SolveReport { iterations, final_cost: system.cost, degraded }))
    }

    /// Replaces the oldest node and its factors by a Gaussian prior on its successor.
    fn marginalize_oldest(&mut self) {
        let states = [self.nodes[0].estimate, self.nodes[1].estimate];
        let mut sys = Normal { hessian: BlockTridiagonal::zeros(2), neg_gradient: vec![Vector6::zeros(); 2] };
        self.add_prior(&states, Some(&mut sys));
        self.add_dynamics(0, &states, Some(&mut sys));
        self.add_measurements(0, &states, self.robust, Some(&mut sys));
        let Normal { hessian, neg_gradient } = sys;
        let h00 = sym(&hessian.diag[0]);
        let h00_inv = match h00.cholesky() {
            Some(c) => c.inverse(),
            None => (h00 + Matrix6::identity() * SINGULAR_REGULARIZATION)
                .try_inverse()
                .unwrap_or_else(Matrix6::zeros),
        };
        let h01 = hessian.upper[0];
        let info = sym(&(hessian.diag[1] - h01.transpose() * h00_inv * h01));
        let b = neg_gradient[1] - h01.transpose() * h00_inv * neg_gradient[0];
        // prior mean: minimizer of the reduced quadratic around the current estimate
        let shift = info
            .cholesky()
            .map(|c| c.solve(&b))
            .unwrap_or_else(Vector6::zeros);
        let mean = states[1] + shift;
        self.prior = Some(GaussianPrior { mean, information: info });
        let gone = self.nodes.pop_front().expect("window has a node to marginalize");
        self.finalized.push((gone.step, gone.estimate));
    }
}

fn sym(m: &Matrix6<f64>) -> Matrix6<f64> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
/// Adds the IRLS-weighted contribution of one linearized factor to chain normal equations.
/// `offset` shifts factor node indices.
fn accumulate(lin: &crate::estimation::factor::Linearization, offset: usize, h: &mut BlockTridiagonal, neg_g: &mut [Vector6<f64>]) {
    let w = lin.information * lin.weight();
    let jac = lin.jacobians();
    for (i, ji) in jac {
        let jtw = ji.transpose() * w;
        let ii = i - offset;
        neg_g[ii] -= jtw * lin.residual;
        for (j, jj) in jac {
            let jj_idx = j - offset;
            let block = jtw * jj;
            if ii == jj_idx {
                h.diag[ii] += block;
            } else if jj_idx == ii + 1 {
                h.upper[ii] += block;
            }
        }
    }
}
