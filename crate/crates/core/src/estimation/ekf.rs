//! Extended Kalman filter on raw range/azimuth/elevation, used as a baseline.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::estimation::GaussianBelief;
use crate::sensing::{wrap_angle, BearingMeasurement, RangeMeasurement};
use crate::types::{FrameRotation, Sym6};

/// Result of one predict/update cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfStep {
    pub belief: GaussianBelief,
    /// True when the update was skipped because the innovation covariance was not PD.
    pub update_skipped: bool,
}

/// Predicted `[range, azimuth, elevation]` and its Jacobian with respect to the state.
pub fn measurement_model(
    x: &Vector6<f64>,
    uav_position: &Vector3<f64>,
    rotation: &FrameRotation,
) -> Result<(Vector3<f64>, Matrix3x6<f64>)> {
    let rel = x.fixed_rows::<3>(0) - uav_position;
    let d = rel.norm();
    let s = rotation.to_sensor(&rel);
    let rho2 = s.x * s.x + s.y * s.y;
    let rho = rho2.sqrt();
    if d < 1e-9 || rho < 1e-9 {
        return Err(Error::DegenerateGeometry("target on the sensor axis"));
    }
    let h = Vector3::new(d, s.y.atan2(s.x), s.z.atan2(rho));
    let r = rotation.matrix();
    let d2 = d * d;
    let dd = rel.transpose() / d;
    let daz = Vector3::new(-s.y / rho2, s.x / rho2, 0.0).transpose() * r;
    let del = Vector3::new(-s.x * s.z / (rho * d2), -s.y * s.z / (rho * d2), rho / d2).transpose() * r;
    let mut jac = Matrix3x6::zeros();
    jac.fixed_view_mut::<1, 3>(0, 0).copy_from(&dd);
    jac.fixed_view_mut::<1, 3>(1, 0).copy_from(&daz);
    jac.fixed_view_mut::<1, 3>(2, 0).copy_from(&del);
    Ok((h, jac))
}

/// Predict with the double-integrator model, then a Joseph-form update on the wrapped
/// innovation. An innovation covariance that fails Cholesky (or degenerate geometry)
/// skips the update and doubles the predicted covariance.
#[allow(clippy::too_many_arguments)]
pub fn ekf_step(
    belief: &GaussianBelief,
    transition: &Matrix6<f64>,
    process_cov: &Sym6,
    uav_position: &Vector3<f64>,
    rotation: &FrameRotation,
    z_r: &RangeMeasurement,
    z_b: &BearingMeasurement,
) -> Result<EkfStep> {
    let x_pred = transition * belief.mean.to_vector();
    let p_pred = transition * belief.cov.matrix() * transition.transpose() + process_cov.matrix();
    let p_pred = (p_pred + p_pred.transpose()) * 0.5;

    let mut meas_cov = Matrix3::zeros();
    meas_cov[(0, 0)] = z_r.sigma_r * z_r.sigma_r;
    meas_cov.fixed_view_mut::<2, 2>(1, 1).copy_from(z_b.cov.matrix());

    let update = measurement_model(&x_pred, uav_position, rotation).ok().and_then(|(h, jac)| {
        let s = jac * p_pred * jac.transpose() + meas_cov;
        let chol = ((s + s.transpose()) * 0.5).cholesky()?;
        let innovation = Vector3::new(z_r.z_r - h[0], wrap_angle(z_b.azimuth - h[1]), z_b.elevation - h[2]);
        let gain = p_pred * jac.transpose() * chol.inverse();
        let ikh = Matrix6::identity() - gain * jac;
        let p = ikh * p_pred * ikh.transpose() + gain * meas_cov * gain.transpose();
        Some((x_pred + gain * innovation, p))
    });
    match update {
        Some((x, p)) => Ok(EkfStep { belief: GaussianBelief::from_parts(&x, &p, false)?, update_skipped: false }),
        None => Ok(EkfStep { belief: GaussianBelief::from_parts(&x_pred, &(p_pred * 2.0), true)?, update_skipped: true }),
    }
}
