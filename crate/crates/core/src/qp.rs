//! Dense strictly convex QP: `min 1/2 x'Px + q'x  s.t.  Gx <= h`.
//!
//! Dual active-set method of Goldfarb and Idnani. It starts from the unconstrained
//! minimizer and adds violated constraints one at a time while keeping dual feasibility,
//! so infeasibility is detected directly when a violated constraint cannot be satisfied.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of `Gx <= h`, non-negative.
    pub duals: DVector<f64>,
    pub active: Vec<usize>,
    pub status: QpStatus,
    pub iterations: usize,
}

const FEAS_TOL: f64 = 1e-10;
const ZERO_STEP: f64 = 1e-13;
const DEPENDENCE_TOL: f64 = 1e-10;

impl QpProblem {
    pub fn new(p: DMatrix<f64>, q: DVector<f64>, g: DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        let n = q.len();
        if p.nrows() != n || p.ncols() != n || g.ncols() != n || g.nrows() != h.len() {
            return Err(Error::InvalidInput("QP dimensions are inconsistent".into()));
        }
        if p.iter().chain(q.iter()).chain(g.iter()).chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("QP data has non-finite entries".into()));
        }
        Ok(Self { p, q, g, h })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.h.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    /// Largest violation `max_i (G x - h)_i`, clipped at zero.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.g * x - &self.h).iter().fold(0.0f64, |m, v| m.max(*v))
    }
}

pub fn solve(problem: &QpProblem) -> Result<QpSolution> {
    solve_with_hint(problem, &[])
}

/// Same as [`solve`]; violated constraints listed in `hint` (e.g. the previous active set)
/// are added first.
pub fn solve_with_hint(problem: &QpProblem, hint: &[usize]) -> Result<QpSolution> {
    let n = problem.dim();
    let m = problem.n_constraints();
    let chol = problem
        .p
        .clone()
        .cholesky()
        .ok_or(Error::InvalidInput("QP Hessian is not positive definite".into()))?;
    let p_inv = chol.inverse();
    // constraints as a_i' x >= b_i
    let normal = |i: usize| -> DVector<f64> { -problem.g.row(i).transpose() };
    let scale: Vec<f64> = (0..m).map(|i| problem.g.row(i).norm().max(1.0)).collect();

    let mut x = -(&p_inv * &problem.q);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let max_iter = 10 * (n + m) + 50;
    let mut iterations = 0;

    let slack = |x: &DVector<f64>, i: usize| problem.h[i] - problem.g.row(i).dot(&x.transpose());

    loop {
        // choose the violated constraint to add
        let violated = |i: usize| !active.contains(&i) && slack(&x, i) < -FEAS_TOL * scale[i];
        let pick = hint.iter().copied().filter(|&i| i < m).find(|&i| violated(i)).or_else(|| {
            (0..m)
                .filter(|&i| violated(i))
                .min_by(|&a, &b| (slack(&x, a) / scale[a]).total_cmp(&(slack(&x, b) / scale[b])))
        });
        let Some(p) = pick else {
            return Ok(finish(problem, x, &active, &u, QpStatus::Optimal, iterations));
        };
        let np = normal(p);
        let z_scale = (&p_inv * &np).norm();
        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Ok(finish(problem, x, &active, &u, QpStatus::MaxIter, iterations));
            }
            // step directions for the current active set
            let (z, r) = directions(&p_inv, &active, &normal, &np);
            let t1 = active
                .iter()
                .enumerate()
                .filter(|(j, _)| r[*j] > ZERO_STEP)
                .map(|(j, _)| (u[j] / r[j], j))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let znp = z.dot(&np);
            // relative test: rounding leaves a tiny z once the active normals span n_p
            let full_step = active.len() < n
                && z.norm() > DEPENDENCE_TOL * z_scale
                && znp > DEPENDENCE_TOL * z_scale * np.norm();
            let t2 = if full_step { Some(-slack(&x, p) / znp) } else { None };
            match (t1, t2) {
                (None, None) => {
                    return Ok(finish(problem, x, &active, &u, QpStatus::Infeasible, iterations));
                }
                (Some((t, l)), None) => {
                    // dual step only, then drop the blocking constraint
                    for (j, uj) in u.iter_mut().enumerate() {
                        *uj -= t * r[j];
                    }
                    u_p += t;
                    active.remove(l);
                    u.remove(l);
                }
                (t1, Some(t2v)) => {
                    let (t, drop) = match t1 {
                        Some((t1v, l)) if t1v < t2v => (t1v, Some(l)),
                        _ => (t2v, None),
                    };
                    x += &z * t;
                    for (j, uj) in u.iter_mut().enumerate() {
                        *uj -= t * r[j];
                    }
                    u_p += t;
                    match drop {
                        None => {
                            active.push(p);
                            u.push(u_p);
                            break;
                        }
                        Some(l) => {
                            active.remove(l);
                            u.remove(l);
                        }
                    }
                }
            }
        }
    }
}

/// Primal direction `z = H n_p` and dual direction `r = N^* n_p` for active normals `N`.
fn directions(
    p_inv: &DMatrix<f64>,
    active: &[usize],
    normal: &dyn Fn(usize) -> DVector<f64>,
    np: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = np.len();
    let k = active.len();
    let pinv_np = p_inv * np;
    if k == 0 {
        return (pinv_np, DVector::zeros(0));
    }
    let mut nmat = DMatrix::zeros(n, k);
    for (j, &i) in active.iter().enumerate() {
        nmat.set_column(j, &normal(i));
    }
    let pinv_n = p_inv * &nmat;
    let gram = nmat.transpose() * &pinv_n;
    let rhs = nmat.transpose() * &pinv_np;
    let r = match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(k)),
    };
    let z = pinv_np - pinv_n * &r;
    (z, r)
}

fn finish(problem: &QpProblem, x: DVector<f64>, active: &[usize], u: &[f64], status: QpStatus, iterations: usize) -> QpSolution {
    let mut duals = DVector::zeros(problem.n_constraints());
    for (j, &i) in active.iter().enumerate() {
        duals[i] = u[j].max(0.0);
    }
    let mut active = active.to_vec();
    active.sort_unstable();
    QpSolution { x, duals, active, status, iterations }
}

/// Largest KKT violation: stationarity, primal feasibility, dual sign, complementarity.
pub fn kkt_residual(problem: &QpProblem, sol: &QpSolution) -> f64 {
    let stationarity = (&problem.p * &sol.x + &problem.q + problem.g.transpose() * &sol.duals).amax();
    let slack = &problem.h - &problem.g * &sol.x;
    let primal = slack.iter().fold(0.0f64, |m, s| m.max(-s));
    let dual = sol.duals.iter().fold(0.0f64, |m, l| m.max(-l));
    let comp = slack.iter().zip(sol.duals.iter()).fold(0.0f64, |m, (s, l)| m.max((s * l).abs()));
    stationarity.max(primal).max(dual).max(comp)
}
