//! Target state estimation: sliding-window factor graph (robust or plain) and an EKF baseline.

pub mod blocktri;
pub mod ekf;
pub mod factor;
pub mod loss;
pub mod window;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

pub use ekf::{ekf_step, measurement_model, EkfStep};
pub use factor::{evaluate_factor, Factor, FactorKind, Linearization};
pub use loss::{cauchy_loss, cauchy_weight};
pub use window::{FactorGraphWindow, NodeMeasurements, PoseSnapshot, SolveReport, WindowSettings};

use crate::config::SimConfig;
use crate::dynamics::UavState;
use crate::error::Result;
use crate::sensing::{BearingMeasurement, RangeMeasurement};
use crate::types::{State6, Sym6};

/// Gaussian target belief. `degraded` marks beliefs produced after a numerical fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    pub mean: State6,
    pub cov: Sym6,
    pub degraded: bool,
}

impl GaussianBelief {
    pub fn from_parts(mean: &Vector6<f64>, cov: &Matrix6<f64>, degraded: bool) -> Result<Self> {
        Ok(Self { mean: State6::from_vector(mean), cov: Sym6::from_symmetrized(*cov)?, degraded })
    }

    /// Position covariance block.
    pub fn position_cov(&self) -> Matrix3<f64> {
        self.cov.matrix().fixed_view::<3, 3>(0, 0).into_owned()
    }
}

/// Which estimator drives an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    RobustFactorGraph,
    FactorGraph,
    Ekf,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::RobustFactorGraph, EstimatorKind::FactorGraph, EstimatorKind::Ekf];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::RobustFactorGraph => "robust_fg",
            EstimatorKind::FactorGraph => "fg",
            EstimatorKind::Ekf => "ekf",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Belief from a single range/bearing pair: position by back-projection with first-order
/// covariance, velocity zero-mean with isotropic `init_vel_std`.
pub fn initialize_belief(
    pose: &UavState,
    z_r: &RangeMeasurement,
    z_b: &BearingMeasurement,
    cfg: &SimConfig,
) -> Result<GaussianBelief> {
    let (sa, ca) = z_b.azimuth.sin_cos();
    let (se, ce) = z_b.elevation.sin_cos();
    let u = Vector3::new(ce * ca, ce * sa, se);
    let du_daz = Vector3::new(-ce * sa, ce * ca, 0.0);
    let du_del = Vector3::new(-se * ca, -se * sa, ce);
    let rt = pose.pose_rotation.matrix().transpose();
    let position = pose.state.position + rt * u * z_r.z_r;

    let mut jac = Matrix3::zeros();
    jac.set_column(0, &(rt * u));
    jac.set_column(1, &(rt * du_daz * z_r.z_r));
    jac.set_column(2, &(rt * du_del * z_r.z_r));
    let mut meas_cov = Matrix3::zeros();
    meas_cov[(0, 0)] = z_r.sigma_r * z_r.sigma_r;
    meas_cov.fixed_view_mut::<2, 2>(1, 1).copy_from(z_b.cov.matrix());
    let pos_cov = jac * meas_cov * jac.transpose();

    let mut cov = Matrix6::zeros();
    cov.fixed_view_mut::<3, 3>(0, 0).copy_from(&pos_cov);
    let v2 = cfg.init_vel_std * cfg.init_vel_std;
    for i in 3..6 {
        cov[(i, i)] = v2;
    }
    let mean = State6::new(position, Vector3::zeros()).to_vector();
    GaussianBelief::from_parts(&mean, &cov, false)
}
