//! Shared geometric and stochastic value types.

use nalgebra::{Matrix3, SMatrix, Vector3, Vector6};

use crate::error::{Error, Result};

/// Tolerance for orthonormality and unit determinant of a frame rotation.
pub const ROTATION_TOL: f64 = 1e-9;
/// Symmetry tolerance for [`SymMatrix`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Most negative eigenvalue accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;

/// Rotation taking vectors from the global frame into the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRotation(Matrix3<f64>);

impl FrameRotation {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("rotation has non-finite entries".into()));
        }
        let orth = (m.transpose() * m - Matrix3::identity()).abs().max();
        if orth > ROTATION_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation not orthonormal (deviation {orth:e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidInput(format!("rotation determinant {det} != 1")));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Sensor frame whose x-axis points along global heading `yaw` (rad) in the horizontal plane.
    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        // transpose of the body-to-global yaw rotation
        Self(Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_sensor(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn to_global(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.transpose() * v
    }
}

/// Stacked position and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State6 {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl State6 {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self { position, velocity }
    }

    pub fn zeros() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.position);
        v.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|v| v.is_finite())
    }
}

/// Symmetric positive semidefinite matrix of fixed dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix<const N: usize>(SMatrix<f64, N, N>);

pub type Sym2 = SymMatrix<2>;
pub type Sym3 = SymMatrix<3>;
pub type Sym6 = SymMatrix<6>;

impl<const N: usize> SymMatrix<N> {
    /// Validates symmetry and semidefiniteness.
    pub fn new(m: SMatrix<f64, N, N>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let asym = (m - m.transpose()).abs().max();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidInput(format!("matrix not symmetric (deviation {asym:e})")));
        }
        let s = Self(m);
        // Cholesky of m + tol I succeeds iff the smallest eigenvalue exceeds -tol
        let scale = m.diagonal().amax().max(1.0);
        let shifted = m + SMatrix::<f64, N, N>::identity() * (PSD_TOL * scale);
        if shifted.cholesky().is_none() {
            let min = s.min_eigenvalue();
            return Err(Error::InvalidInput(format!("matrix indefinite (min eigenvalue {min:e})")));
        }
        Ok(s)
    }

    /// Symmetrizes `m` before validating; for matrices produced by floating-point products.
    pub fn from_symmetrized(m: SMatrix<f64, N, N>) -> Result<Self> {
        Self::new((m + m.transpose()) * 0.5)
    }

    pub fn from_diagonal(d: [f64; N]) -> Result<Self> {
        let mut m = SMatrix::<f64, N, N>::zeros();
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        Self::new(m)
    }

    pub fn matrix(&self) -> &SMatrix<f64, N, N> {
        &self.0
    }

    pub fn eigenvalues(&self) -> [f64; N] {
        let e = nalgebra::DMatrix::from_column_slice(N, N, self.0.as_slice()).symmetric_eigenvalues();
        let mut out = [0.0; N];
        out.copy_from_slice(e.as_slice());
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.0.cholesky().is_some()
    }
}

impl Sym6 {
    pub fn position_block(&self) -> Sym3 {
        SymMatrix(self.0.fixed_view::<3, 3>(0, 0).into())
    }
}
