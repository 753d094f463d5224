//! Symmetric block-tridiagonal solves for chain-structured normal equations.

use nalgebra::{Matrix6, Vector6};

/// Normal equations `H x = b` of a chain: diagonal blocks `H_kk`, upper blocks `H_{k,k+1}`.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    pub diag: Vec<Matrix6<f64>>,
    pub upper: Vec<Matrix6<f64>>,
}

/// Block LDL^T factorization: pivots `S_k` (stored as inverses) and the original upper blocks.
#[derive(Debug, Clone)]
pub struct BlockFactorization {
    pivot_inv: Vec<Matrix6<f64>>,
    upper: Vec<Matrix6<f64>>,
}

impl BlockTridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self { diag: vec![Matrix6::zeros(); n], upper: vec![Matrix6::zeros(); n.saturating_sub(1)] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Adds `scale * diag(H)` to every diagonal block.
    pub fn damped(&self, scale: f64) -> Self {
        let mut out = self.clone();
        for d in out.diag.iter_mut() {
            for i in 0..6 {
                d[(i, i)] += scale * d[(i, i)];
            }
        }
        out
    }

    /// Adds `eps * I` to every diagonal block.
    pub fn regularized(&self, eps: f64) -> Self {
        let mut out = self.clone();
        for d in out.diag.iter_mut() {
            *d += Matrix6::identity() * eps;
        }
        out
    }

    /// Returns `None` when a pivot is not positive definite.
    pub fn factorize(&self) -> Option<BlockFactorization> {
        let n = self.len();
        let mut pivot_inv = Vec::with_capacity(n);
        for k in 0..n {
            let mut s = self.diag[k];
            if k > 0 {
                s -= congruence(&self.upper[k - 1], &pivot_inv[k - 1]);
            }
            pivot_inv.push(spd_inverse(&s)?);
        }
        Some(BlockFactorization { pivot_inv, upper: self.upper.clone() })
    }
}

/// `o^T m o`, skipping zero entries of `o` (chain couplings are sparse).
fn congruence(o: &Matrix6<f64>, m: &Matrix6<f64>) -> Matrix6<f64> {
    let mut mo = Matrix6::<f64>::zeros();
    for b in 0..6 {
        for j in 0..6 {
            let v = o[(j, b)];
            if v != 0.0 {
                for i in 0..6 {
                    mo[(i, b)] += m[(i, j)] * v;
                }
            }
        }
    }
    let mut out = Matrix6::<f64>::zeros();
    for a in 0..6 {
        for i in 0..6 {
            let v = o[(i, a)];
            if v != 0.0 {
                for b in 0..6 {
                    out[(a, b)] += v * mo[(i, b)];
                }
            }
        }
    }
    out
}

/// Inverse of a symmetric positive-definite block via Cholesky; reads the lower triangle
/// of the symmetrized input. `None` when not positive definite.
fn spd_inverse(s: &Matrix6<f64>) -> Option<Matrix6<f64>> {
    let mut l = [[0.0f64; 6]; 6];
    for j in 0..6 {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if d.is_nan() || d <= 0.0 {
            return None;
        }
        let ljj = d.sqrt();
        l[j][j] = ljj;
        for i in j + 1..6 {
            let mut v = 0.5 * (s[(i, j)] + s[(j, i)]);
            for k in 0..j {
                v -= l[i][k] * l[j][k];
            }
            l[i][j] = v / ljj;
        }
    }
    // w = L^{-1}, lower triangular
    let mut w = [[0.0f64; 6]; 6];
    for j in 0..6 {
        w[j][j] = 1.0 / l[j][j];
        for i in j + 1..6 {
            let mut v = 0.0;
            for k in j..i {
                v -= l[i][k] * w[k][j];
            }
            w[i][j] = v / l[i][i];
        }
    }
    let mut out = Matrix6::zeros();
    for i in 0..6 {
        for j in 0..=i {
            let mut v = 0.0;
            for k in i..6 {
                v += w[k][i] * w[k][j];
            }
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Some(out)
}

impl BlockFactorization {
    pub fn solve(&self, rhs: &[Vector6<f64>]) -> Vec<Vector6<f64>> {
        let n = self.pivot_inv.len();
        let mut y = rhs.to_vec();
        for k in 1..n {
            let corr = self.upper[k - 1].transpose() * (self.pivot_inv[k - 1] * y[k - 1]);
            y[k] -= corr;
        }
        let mut x = vec![Vector6::zeros(); n];
        for k in (0..n).rev() {
            let mut v = y[k];
            if k + 1 < n {
                v -= self.upper[k] * x[k + 1];
            }
            x[k] = self.pivot_inv[k] * v;
        }
        x
    }

    /// Diagonal blocks of the inverse matrix (marginal covariances).
    pub fn inverse_diagonal(&self) -> Vec<Matrix6<f64>> {
        let n = self.pivot_inv.len();
        let mut out = vec![Matrix6::zeros(); n];
        if n == 0 {
            return out;
        }
        out[n - 1] = self.pivot_inv[n - 1];
        for k in (0..n - 1).rev() {
            let g = self.pivot_inv[k] * self.upper[k];
            let s = self.pivot_inv[k] + g * out[k + 1] * g.transpose();
            out[k] = (s + s.transpose()) * 0.5;
        }
        out
    }
}
