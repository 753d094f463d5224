//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

pub mod checks;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};

/// Linear-Gaussian chain: `x_{k+1} = A x_k + w`, `w ~ N(0, Q)`, optional position
/// observations `z_k = p_k + v`, `v ~ N(0, R_k)`, prior `x_0 ~ N(m0, P0)`.
#[derive(Debug, Clone)]
pub struct LinearChain {
    pub a: Matrix6<f64>,
    pub q: Matrix6<f64>,
    pub m0: Vector6<f64>,
    pub p0: Matrix6<f64>,
    pub obs: Vec<Option<(Vector3<f64>, Matrix3<f64>)>>,
}

fn h() -> Matrix3x6<f64> {
    let mut h = Matrix3x6::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    h
}

/// Kalman filter followed by a Rauch-Tung-Striebel backward pass. Covariance form.
pub fn rts_smoother(c: &LinearChain) -> Vec<(Vector6<f64>, Matrix6<f64>)> {
    let n = c.obs.len();
    let h = h();
    let mut filt: Vec<(Vector6<f64>, Matrix6<f64>)> = Vec::with_capacity(n);
    let mut pred: Vec<(Vector6<f64>, Matrix6<f64>)> = Vec::with_capacity(n);
    for k in 0..n {
        let (xp, pp) = if k == 0 {
            (c.m0, c.p0)
        } else {
            let (x, p) = &filt[k - 1];
            (c.a * x, c.a * p * c.a.transpose() + c.q)
        };
        pred.push((xp, pp));
        let (x, p) = match &c.obs[k] {
            Some((z, r)) => {
                let s = h * pp * h.transpose() + r;
                let gain = pp * h.transpose() * s.try_inverse().expect("innovation covariance invertible");
                let x = xp + gain * (z - h * xp);
                let ikh = Matrix6::identity() - gain * h;
                (x, ikh * pp * ikh.transpose() + gain * r * gain.transpose())
            }
            None => (xp, pp),
        };
        filt.push((x, p));
    }
    let mut out = filt.clone();
    for k in (0..n.saturating_sub(1)).rev() {
        let (xf, pf) = &filt[k];
        let (xp, pp) = &pred[k + 1];
        let g = pf * c.a.transpose() * pp.try_inverse().expect("predicted covariance invertible");
        let (xs, ps) = out[k + 1];
        let x = xf + g * (xs - xp);
        let p = pf + g * (ps - pp) * g.transpose();
        out[k] = (x, (p + p.transpose()) * 0.5);
    }
    out
}

/// Full-batch MAP of the chain by dense information-form least squares.
pub fn batch_map(c: &LinearChain) -> Vec<(Vector6<f64>, Matrix6<f64>)> {
    let n = c.obs.len();
    let dim = 6 * n;
    let mut info = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let add = |info: &mut DMatrix<f64>, rhs: &mut DVector<f64>, rows: &[(usize, DMatrix<f64>)], w: &DMatrix<f64>, b: &DVector<f64>| {
        // residual J x - b with blocks (node, J_node)
        for (i, ji) in rows {
            let jtw = ji.transpose() * w;
            let mut r = rhs.rows_mut(6 * i, 6);
            r += &jtw * b;
            for (j, jj) in rows {
                let mut blk = info.view_mut((6 * i, 6 * j), (6, 6));
                blk += &jtw * jj;
            }
        }
    };
    let eye6 = DMatrix::<f64>::identity(6, 6);
    let p0_inv = DMatrix::from_column_slice(6, 6, c.p0.try_inverse().unwrap().as_slice());
    add(&mut info, &mut rhs, &[(0, eye6.clone())], &p0_inv, &DVector::from_column_slice(c.m0.as_slice()));
    let q_inv = DMatrix::from_column_slice(6, 6, c.q.try_inverse().unwrap().as_slice());
    let a = DMatrix::from_column_slice(6, 6, c.a.as_slice());
    for k in 0..n.saturating_sub(1) {
        add(&mut info, &mut rhs, &[(k, -&a), (k + 1, eye6.clone())], &q_inv, &DVector::zeros(6));
    }
    let hd = DMatrix::from_column_slice(3, 6, h().as_slice());
    for (k, o) in c.obs.iter().enumerate() {
        if let Some((z, r)) = o {
            let w = DMatrix::from_column_slice(3, 3, r.try_inverse().unwrap().as_slice());
            add(&mut info, &mut rhs, &[(k, hd.clone())], &w, &DVector::from_column_slice(z.as_slice()));
        }
    }
    let cov = info.clone().try_inverse().expect("batch information invertible");
    let x = &cov * rhs;
    (0..n)
        .map(|k| {
            let m = Vector6::from_iterator(x.rows(6 * k, 6).iter().copied());
            let p = Matrix6::from_iterator(cov.view((6 * k, 6 * k), (6, 6)).iter().copied());
            (m, p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Enumerated {
    Optimal(DVector<f64>),
    Infeasible,
}

/// Exhaustive active-set enumeration for `min 1/2 x'Px + q'x, Gx <= h` with `P` positive
/// definite: every row subset of size at most `n` is tried as the active set, and the KKT
/// point with feasible primal and non-negative duals is returned.
pub fn enumerate_qp(p: &DMatrix<f64>, q: &DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>) -> Enumerated {
    let n = q.len();
    let m = h.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut subset = Vec::new();
    fn rec(
        start: usize,
        m: usize,
        n: usize,
        subset: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        visit(subset);
        if subset.len() == n {
            return;
        }
        for i in start..m {
            subset.push(i);
            rec(i + 1, m, n, subset, visit);
            subset.pop();
        }
    }
    let tol = 1e-9;
    let mut visit = |s: &[usize]| {
        let k = s.len();
        let mut kkt = DMatrix::<f64>::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(p);
        let mut rhs = DVector::<f64>::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-q));
        for (j, &i) in s.iter().enumerate() {
            for c in 0..n {
                kkt[(n + j, c)] = g[(i, c)];
                kkt[(c, n + j)] = g[(i, c)];
            }
            rhs[n + j] = h[i];
        }
        let svd = kkt.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= 1e-10 * smax.max(1.0) {
            return;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { return };
        let x = sol.rows(0, n).into_owned();
        if s.iter().enumerate().any(|(j, _)| sol[n + j] < -tol) {
            return;
        }
        let slack = h - g * &x;
        let scale = 1.0 + x.amax();
        if slack.iter().any(|v| *v < -tol * scale) {
            return;
        }
        let obj = 0.5 * x.dot(&(p * &x)) + q.dot(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    };
    rec(0, m, n, &mut subset, &mut visit);
    match best {
        Some((_, x)) => Enumerated::Optimal(x),
        None => Enumerated::Infeasible,
    }
}

/// Central-difference Jacobian of `f` at `x` with step `h`.
pub fn central_jacobian<F>(f: F, x: &DVector<f64>, rows: usize, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut j = DMatrix::zeros(rows, x.len());
    for c in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += h;
        xm[c] -= h;
        let d = (f(&xp) - f(&xm)) / (2.0 * h);
        j.set_column(c, &d);
    }
    j
}
