//! UWB range and azimuth/elevation measurement generation, plus the unit-sphere
//! geometry (bearing vectors, tangent bases, logarithm map) consumed by the estimator.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::stats::Rng;
use crate::types::{FrameRotation, Sym2};

/// Below this geodesic angle the residual uses the first-order chord form.
pub const SMALL_ANGLE: f64 = 1e-6;
/// Geodesic angles closer than this to pi are treated as antipodal.
pub const ANTIPODAL_MARGIN: f64 = 1e-6;
const COINCIDENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeMeasurement {
    pub z_r: f64,
    pub sigma_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingMeasurement {
    pub azimuth: f64,
    pub elevation: f64,
    pub cov: Sym2,
}

/// Direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitBearing(Vector3<f64>);

impl UnitBearing {
    pub fn normalize(v: &Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !(n > COINCIDENT_TOL) || !n.is_finite() {
            return Err(Error::DegenerateGeometry("cannot normalize a zero vector"));
        }
        Ok(Self(v / n))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// Orthonormal 3x2 basis of the tangent plane at a unit bearing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentBasis(Matrix3x2<f64>);

impl TangentBasis {
    pub fn matrix(&self) -> &Matrix3x2<f64> {
        &self.0
    }
}

/// Noise model for one bearing sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingNoise {
    /// Nominal standard deviations (rad), as reported to the estimator.
    pub sigma_az: f64,
    pub sigma_el: f64,
    pub p_out: f64,
    pub sigma_out: f64,
    /// Multiplier on the injected nominal noise (not on outliers, not on the report).
    pub inject_scale: f64,
}

impl BearingNoise {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            sigma_az: cfg.sigma_az,
            sigma_el: cfg.sigma_el,
            p_out: cfg.p_out,
            sigma_out: cfg.sigma_out,
            inject_scale: cfg.sensor_noise_scale,
        }
    }

    /// Sensing degradation: nominal noise and reported covariance both scale by `factor`.
    pub fn degraded(mut self, factor: f64) -> Self {
        self.sigma_az *= factor;
        self.sigma_el *= factor;
        self
    }
}

pub fn true_range(p_r: &Vector3<f64>, p_t: &Vector3<f64>) -> Result<f64> {
    let d = (p_t - p_r).norm();
    if d <= COINCIDENT_TOL {
        return Err(Error::DegenerateGeometry("target coincides with UAV"));
    }
    Ok(d)
}

/// `z_r = d + injected_sigma * N(0,1)`; the measurement reports `reported_sigma`.
/// One normal draw is consumed regardless of the noise level.
pub fn measure_range(d: f64, rng: &mut Rng, injected_sigma: f64, reported_sigma: f64) -> RangeMeasurement {
    let n: f64 = rng.sample(StandardNormal);
    RangeMeasurement { z_r: d + injected_sigma * n, sigma_r: reported_sigma }
}

/// Azimuth and elevation of the target as seen in the sensor frame.
pub fn true_bearing_angles(rotation: &FrameRotation, p_r: &Vector3<f64>, p_t: &Vector3<f64>) -> Result<(f64, f64)> {
    true_range(p_r, p_t)?;
    let s = rotation.to_sensor(&(p_t - p_r));
    let rho = s.x.hypot(s.y);
    if rho <= COINCIDENT_TOL {
        return Err(Error::DegenerateGeometry("target on sensor z-axis: azimuth undefined"));
    }
    Ok((s.y.atan2(s.x), s.z.atan2(rho)))
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let y = (a + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Noisy bearing sample. Draw order is fixed (uniform, then two normals) so that
/// streams stay aligned across outlier probabilities and noise levels.
pub fn measure_bearing(truth: (f64, f64), rng: &mut Rng, noise: &BearingNoise) -> BearingMeasurement {
    let u: f64 = rng.random();
    let n_az: f64 = rng.sample(StandardNormal);
    let n_el: f64 = rng.sample(StandardNormal);
    let (s_az, s_el) = if u < noise.p_out {
        (noise.sigma_out, noise.sigma_out)
    } else {
        (noise.sigma_az * noise.inject_scale, noise.sigma_el * noise.inject_scale)
    };
    let azimuth = wrap_angle(truth.0 + s_az * n_az);
    let elevation = (truth.1 + s_el * n_el).clamp(-PI / 2.0, PI / 2.0);
    let cov = Sym2::new(Matrix2::new(noise.sigma_az.powi(2), 0.0, 0.0, noise.sigma_el.powi(2)))
        .expect("diagonal covariance with non-negative entries");
    BearingMeasurement { azimuth, elevation, cov }
}

pub fn angles_to_unit(azimuth: f64, elevation: f64) -> UnitBearing {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    UnitBearing(Vector3::new(ce * ca, ce * sa, se))
}

pub fn measurement_to_unit(b: &BearingMeasurement) -> UnitBearing {
    angles_to_unit(b.azimuth, b.elevation)
}

/// Inverse of [`angles_to_unit`].
pub fn unit_to_angles(n: &UnitBearing) -> (f64, f64) {
    let v = n.0;
    (v.y.atan2(v.x), v.z.atan2(v.x.hypot(v.y)))
}

/// Noise-free bearing of the target in the sensor frame.
pub fn predicted_unit_bearing(rotation: &FrameRotation, p_r: &Vector3<f64>, p_t: &Vector3<f64>) -> Result<UnitBearing> {
    true_range(p_r, p_t)?;
    UnitBearing::normalize(&rotation.to_sensor(&(p_t - p_r)))
}

/// Tangent basis at `n`: the canonical axis least aligned with `n`, one Gram-Schmidt
/// step, completed by a cross product.
pub fn tangent_basis(n: &UnitBearing) -> TangentBasis {
    let v = n.0;
    let a = v.abs();
    let axis = if a.x <= a.y && a.x <= a.z {
        Vector3::x()
    } else if a.y <= a.z {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let b1 = (axis - v * v.dot(&axis)).normalize();
    let b2 = v.cross(&b1);
    TangentBasis(Matrix3x2::from_columns(&[b1, b2]))
}

/// Geodesic angle between two unit vectors, accurate at both ends of [0, pi].
pub fn geodesic_angle(a: &UnitBearing, b: &UnitBearing) -> f64 {
    a.0.cross(&b.0).norm().atan2(a.0.dot(&b.0))
}

/// `theta / sin(theta)`.
fn theta_over_sin(theta: f64) -> f64 {
    if theta < 1e-4 {
        1.0 + theta * theta / 6.0
    } else {
        theta / theta.sin()
    }
}

/// Spherical logarithm map `Log_h(z)`: tangent vector at `h` pointing to `z`
/// with length equal to the geodesic angle.
pub fn log_map(h: &UnitBearing, z: &UnitBearing) -> Result<Vector3<f64>> {
    let theta = geodesic_angle(h, z);
    if theta > PI - ANTIPODAL_MARGIN {
        return Err(Error::Antipodal);
    }
    let c = h.0.dot(&z.0);
    Ok((z.0 - h.0 * c) * theta_over_sin(theta))
}

/// Derivative of `Log_h(z)` with respect to the base point `h` (treated as a free 3-vector).
pub fn log_map_jacobian_base(h: &UnitBearing, z: &UnitBearing) -> Result<Matrix3<f64>> {
    let theta = geodesic_angle(h, z);
    if theta > PI - ANTIPODAL_MARGIN {
        return Err(Error::Antipodal);
    }
    let (h, z) = (h.0, z.0);
    let c = h.dot(&z);
    let f = theta_over_sin(theta);
    // f'(theta) / sin(theta)
    let g = if theta < 1e-3 {
        1.0 / 3.0 + 2.0 * theta * theta / 15.0
    } else {
        let s = theta.sin();
        (s - theta * theta.cos()) / (s * s * s)
    };
    let w = z - h * c;
    Ok(-(w * z.transpose()) * g - (h * z.transpose()) * f - Matrix3::identity() * (f * c))
}

/// Tangent-plane bearing residual `B^T Log_h(z)`, using `B^T (z - h)` for tiny angles.
pub fn bearing_residual(z: &UnitBearing, h: &UnitBearing, basis: &TangentBasis) -> Result<Vector2<f64>> {
    let theta = geodesic_angle(h, z);
    if theta < SMALL_ANGLE {
        return Ok(basis.0.transpose() * (z.0 - h.0));
    }
    Ok(basis.0.transpose() * log_map(h, z)?)
}
