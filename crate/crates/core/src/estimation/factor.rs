//! Factor residuals and analytic Jacobians.
//!
//! Residual conventions: prior `x - m`, dynamics `x_{k+1} - A x_k`, range `z - |p - p_R|`,
//! bearing `B^T Log_h(z)` with `h` the predicted sensor-frame bearing, position `p - z`.
//! All residuals and Jacobians are zero-padded to six rows so linearizations stay on the stack.

use nalgebra::{Matrix2, Matrix3, Matrix6, SMatrix, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::estimation::loss::{cauchy_loss, cauchy_weight};
use crate::sensing::{
    bearing_residual, log_map_jacobian_base, predicted_unit_bearing, tangent_basis, TangentBasis, UnitBearing,
};
use crate::types::FrameRotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Prior,
    Dynamics,
    Range,
    Bearing,
    /// Linear position observation; used for linear-Gaussian validation instances.
    Position,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Prior { node: usize, mean: Vector6<f64>, information: Matrix6<f64> },
    Dynamics { from: usize, transition: Matrix6<f64>, information: Matrix6<f64> },
    Range { node: usize, uav_position: Vector3<f64>, z_r: f64, sigma_r: f64 },
    Bearing {
        node: usize,
        uav_position: Vector3<f64>,
        rotation: FrameRotation,
        measured: UnitBearing,
        information: Matrix2<f64>,
        /// Cauchy knee when robust, `None` for a plain quadratic factor.
        cauchy_c: Option<f64>,
    },
    Position { node: usize, measured: Vector3<f64>, information: Matrix3<f64> },
}

/// Linearized factor: residual `r`, Jacobian blocks `dr/dx_node` and information (unweighted).
#[derive(Debug, Clone, Copy)]
pub struct Linearization {
    pub dim: usize,
    pub residual: Vector6<f64>,
    pub blocks: [(usize, Matrix6<f64>); 2],
    pub n_blocks: usize,
    pub information: Matrix6<f64>,
    /// Cauchy knee for robust factors.
    pub robust_c: Option<f64>,
    /// Basis used by bearing factors, held fixed within one linearization.
    pub basis: Option<TangentBasis>,
}

impl Linearization {
    pub fn jacobians(&self) -> &[(usize, Matrix6<f64>)] {
        &self.blocks[..self.n_blocks]
    }

    /// Squared whitened residual norm.
    pub fn whitened_sq(&self) -> f64 {
        self.residual.dot(&(self.information * self.residual))
    }

    /// IRLS weight at the linearization point (1 for quadratic factors).
    pub fn weight(&self) -> f64 {
        self.robust_c.map_or(1.0, |c| cauchy_weight(self.whitened_sq(), c))
    }

    /// Contribution to the MAP objective.
    pub fn cost(&self) -> f64 {
        let s = self.whitened_sq();
        self.robust_c.map_or(s, |c| cauchy_loss(s, c))
    }
}

fn pad<const R: usize>(m: &SMatrix<f64, R, 6>) -> Matrix6<f64> {
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<R, 6>(0, 0).copy_from(m);
    out
}

fn pad_info<const R: usize>(m: &SMatrix<f64, R, R>) -> Matrix6<f64> {
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<R, R>(0, 0).copy_from(m);
    out
}

fn pad_vec<const R: usize>(v: &SMatrix<f64, R, 1>) -> Vector6<f64> {
    let mut out = Vector6::zeros();
    out.fixed_rows_mut::<R>(0).copy_from(v);
    out
}

impl Factor {
    pub fn kind(&self) -> FactorKind {
        match self {
            Factor::Prior { .. } => FactorKind::Prior,
            Factor::Dynamics { .. } => FactorKind::Dynamics,
            Factor::Range { .. } => FactorKind::Range,
            Factor::Bearing { .. } => FactorKind::Bearing,
            Factor::Position { .. } => FactorKind::Position,
        }
    }

    /// Node indices the factor touches.
    pub fn nodes(&self) -> Vec<usize> {
        match self {
            Factor::Dynamics { from, .. } => vec![*from, from + 1],
            Factor::Prior { node, .. }
            | Factor::Range { node, .. }
            | Factor::Bearing { node, .. }
            | Factor::Position { node, .. } => vec![*node],
        }
    }

    /// Residual only; bearing factors use `basis` when given, else the basis at the
    /// current predicted bearing.
    pub fn residual(&self, states: &[Vector6<f64>], basis: Option<&TangentBasis>) -> Result<Vector6<f64>> {
        Ok(match self {
            Factor::Prior { node, mean, .. } => states[*node] - mean,
            Factor::Dynamics { from, transition, .. } => states[from + 1] - transition * states[*from],
            Factor::Range { node, uav_position, z_r, .. } => {
                let d = range_of(&states[*node], uav_position)?;
                let mut r = Vector6::zeros();
                r[0] = z_r - d;
                r
            }
            Factor::Bearing { node, uav_position, rotation, measured, .. } => {
                let p = states[*node].fixed_rows::<3>(0).into_owned();
                let h = predicted_unit_bearing(rotation, uav_position, &p)?;
                let b = basis.copied().unwrap_or_else(|| tangent_basis(&h));
                pad_vec(&bearing_residual(measured, &h, &b)?)
            }
            Factor::Position { node, measured, .. } => {
                pad_vec(&(states[*node].fixed_rows::<3>(0).into_owned() - measured))
            }
        })
    }

    /// Residual and analytic Jacobians at `states`. Degenerate geometry yields an error
    /// and the caller excludes the factor from the update.
    pub fn linearize(&self, states: &[Vector6<f64>]) -> Result<Linearization> {
        let zero = (0usize, Matrix6::zeros());
        let mut lin = Linearization {
            dim: 0,
            residual: Vector6::zeros(),
            blocks: [zero, zero],
            n_blocks: 1,
            information: Matrix6::zeros(),
            robust_c: None,
            basis: None,
        };
        match self {
            Factor::Prior { node, mean, information } => {
                lin.dim = 6;
                lin.residual = states[*node] - mean;
                lin.blocks[0] = (*node, Matrix6::identity());
                lin.information = *information;
            }
            Factor::Dynamics { from, transition, information } => {
                lin.dim = 6;
                lin.residual = states[from + 1] - transition * states[*from];
                lin.blocks = [(*from, -transition), (from + 1, Matrix6::identity())];
                lin.n_blocks = 2;
                lin.information = *information;
            }
            Factor::Range { node, uav_position, z_r, sigma_r } => {
                let p = states[*node].fixed_rows::<3>(0).into_owned();
                let rel = p - uav_position;
                let d = rel.norm();
                if d < 1e-9 {
                    return Err(Error::DegenerateGeometry("range factor at UAV position"));
                }
                let mut j = SMatrix::<f64, 1, 6>::zeros();
                j.fixed_view_mut::<1, 3>(0, 0).copy_from(&(-rel.transpose() / d));
                lin.dim = 1;
                lin.residual[0] = z_r - d;
                lin.blocks[0] = (*node, pad(&j));
                lin.information[(0, 0)] = 1.0 / (sigma_r * sigma_r);
            }
            Factor::Bearing { node, uav_position, rotation, measured, information, cauchy_c } => {
                let p = states[*node].fixed_rows::<3>(0).into_owned();
                let (r, jp, b) = bearing_jacobian(uav_position, rotation, measured, &p)?;
                let mut j = SMatrix::<f64, 2, 6>::zeros();
                j.fixed_view_mut::<2, 3>(0, 0).copy_from(&jp);
                lin.dim = 2;
                lin.residual = pad_vec(&r);
                lin.blocks[0] = (*node, pad(&j));
                lin.information = pad_info(information);
                lin.robust_c = *cauchy_c;
                lin.basis = Some(b);
            }
            Factor::Position { node, measured, information } => {
                let mut j = SMatrix::<f64, 3, 6>::zeros();
                j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
                lin.dim = 3;
                lin.residual = pad_vec(&(states[*node].fixed_rows::<3>(0).into_owned() - measured));
                lin.blocks[0] = (*node, pad(&j));
                lin.information = pad_info(information);
            }
        }
        Ok(lin)
    }
}

/// Bearing residual, its Jacobian with respect to target position and the tangent basis used.
pub fn bearing_jacobian(
    uav_position: &Vector3<f64>,
    rotation: &FrameRotation,
    measured: &UnitBearing,
    p: &Vector3<f64>,
) -> Result<(Vector2<f64>, SMatrix<f64, 2, 3>, TangentBasis)> {
    let rel = p - uav_position;
    let d = rel.norm();
    if d < 1e-9 {
        return Err(Error::DegenerateGeometry("bearing factor at UAV position"));
    }
    let h = UnitBearing::normalize(&rotation.to_sensor(&rel))?;
    let b = tangent_basis(&h);
    let r = bearing_residual(measured, &h, &b)?;
    let u = rel / d;
    let dh_dp = rotation.matrix() * (Matrix3::identity() - u * u.transpose()) / d;
    let dlog_dh = if crate::sensing::geodesic_angle(&h, measured) < crate::sensing::SMALL_ANGLE {
        -Matrix3::identity()
    } else {
        log_map_jacobian_base(&h, measured)?
    };
    Ok((r, b.matrix().transpose() * dlog_dh * dh_dp, b))
}

fn range_of(state: &Vector6<f64>, uav_position: &Vector3<f64>) -> Result<f64> {
    let d = (state.fixed_rows::<3>(0) - uav_position).norm();
    if d < 1e-9 {
        return Err(Error::DegenerateGeometry("range factor at UAV position"));
    }
    Ok(d)
}

/// Evaluates `factor` against the node estimates of a window.
pub fn evaluate_factor(factor: &Factor, states: &[Vector6<f64>]) -> Result<Linearization> {
    if factor.nodes().iter().any(|n| *n >= states.len()) {
        return Err(Error::InvalidInput("factor references a node outside the window".into()));
    }
    factor.linearize(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::angles_to_unit;

    #[test]
    fn prior_zero_at_anchor() {
        let m = Vector6::new(1.0, 2.0, 3.0, 0.1, 0.2, 0.3);
        let f = Factor::Prior { node: 0, mean: m, information: Matrix6::identity() };
        let lin = evaluate_factor(&f, &[m]).unwrap();
        assert_eq!(lin.residual, Vector6::zeros());
    }

    #[test]
    fn dynamics_zero_on_model() {
        let (a, _) = crate::dynamics::make_transition_matrices(0.05).unwrap();
        let x0 = Vector6::new(1.0, 2.0, 3.0, 0.1, 0.2, 0.3);
        let f = Factor::Dynamics { from: 0, transition: a, information: Matrix6::identity() };
        let lin = evaluate_factor(&f, &[x0, a * x0]).unwrap();
        assert!(lin.residual.norm() < 1e-15);
    }

    #[test]
    fn degenerate_range_excluded() {
        let f = Factor::Range { node: 0, uav_position: Vector3::new(1.0, 1.0, 1.0), z_r: 2.0, sigma_r: 0.1 };
        let x = Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);
        assert!(matches!(evaluate_factor(&f, &[x]), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn out_of_window_node_rejected() {
        let f = Factor::Position { node: 3, measured: Vector3::zeros(), information: Matrix3::identity() };
        assert!(evaluate_factor(&f, &[Vector6::zeros()]).is_err());
    }

    #[test]
    fn robust_cost_and_weight() {
        let f = Factor::Bearing {
            node: 0,
            uav_position: Vector3::zeros(),
            rotation: FrameRotation::identity(),
            measured: angles_to_unit(0.5, 0.0),
            information: Matrix2::identity() * 4.0,
            cauchy_c: Some(1.0),
        };
        let x = Vector6::new(3.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let lin = evaluate_factor(&f, &[x]).unwrap();
        let s = 4.0 * 0.25;
        assert!((lin.whitened_sq() - s).abs() < 1e-12);
        assert!((lin.cost() - cauchy_loss(s, 1.0)).abs() < 1e-12);
        assert!((lin.weight() - 0.5).abs() < 1e-12);
    }
}
