//! Seeded comparison runs of the library against the oracles. Each returns the worst
//! discrepancy found so callers can both assert and report it.

use nalgebra::{DVector, Matrix2, Matrix3, Matrix6, Rotation3, SMatrix, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{central_jacobian, enumerate_qp, rts_smoother, Enumerated, LinearChain};
use uwbtrack::dynamics::make_transition_matrices;
use uwbtrack::estimation::{evaluate_factor, Factor, FactorGraphWindow, NodeMeasurements, PoseSnapshot, WindowSettings};
use uwbtrack::qp::{solve, QpProblem, QpStatus};
use uwbtrack::sensing::{angles_to_unit, geodesic_angle, predicted_unit_bearing};
use uwbtrack::{FrameRotation, Sym3, Sym6};

pub fn spd<const N: usize>(rng: &mut ChaCha8Rng, scale: f64) -> SMatrix<f64, N, N> {
    let l = SMatrix::<f64, N, N>::from_fn(|_, _| rng.random_range(-1.0..1.0));
    (l * l.transpose() + SMatrix::<f64, N, N>::identity() * 0.2) * scale
}

/// Random chain with position observations at roughly 70 % of the steps.
pub fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> LinearChain {
    let (a, _) = make_transition_matrices(0.1).unwrap();
    let obs = (0..n)
        .map(|k| {
            (k == 0 || rng.random_bool(0.7)).then(|| {
                let z = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
                (z, spd::<3>(rng, 0.05))
            })
        })
        .collect();
    LinearChain {
        a,
        q: spd::<6>(rng, 0.01),
        m0: Vector6::from_fn(|_, _| rng.random_range(-2.0..2.0)),
        p0: spd::<6>(rng, 1.0),
        obs,
    }
}

pub fn window_for(c: &LinearChain, window_size: usize) -> FactorGraphWindow {
    let settings = WindowSettings {
        window_size,
        transition: c.a,
        process_information: c.q.try_inverse().unwrap(),
        cauchy_c: 2.0,
    };
    FactorGraphWindow::with_prior(settings, false, c.m0, &Sym6::from_symmetrized(c.p0).unwrap()).unwrap()
}

pub fn position_measurement(o: &Option<(Vector3<f64>, Matrix3<f64>)>) -> NodeMeasurements {
    NodeMeasurements { position: o.map(|(z, r)| (z, Sym3::from_symmetrized(r).unwrap())), ..Default::default() }
}

pub fn any_pose() -> PoseSnapshot {
    PoseSnapshot { position: Vector3::new(0.0, 0.0, 10.0), rotation: FrameRotation::identity() }
}

/// Largest mean or covariance entry difference between the sliding window (with
/// marginalization) and the RTS smoother over the retained nodes.
pub fn window_vs_rts(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let n = 30;
        let w = 6 + trial % 5;
        let c = random_chain(&mut rng, n);
        let mut win = window_for(&c, w);
        for k in 0..n {
            win.push_measurements(any_pose(), position_measurement(&c.obs[k])).unwrap();
            // intermediate solves must not change the linear-Gaussian answer
            if k % 3 == 0 {
                win.optimize(false).unwrap();
            }
        }
        let beliefs = win.optimize(false).unwrap();
        assert_eq!(beliefs.len(), w);
        for (b, (x, p)) in beliefs.iter().zip(&rts_smoother(&c)[n - w..]) {
            worst = worst.max((b.mean.to_vector() - x).amax()).max((b.cov.matrix() - p).amax());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QpComparison {
    pub optimal: usize,
    pub infeasible: usize,
    pub status_mismatches: usize,
    /// Largest `|x - x*|_inf / (1 + |x*|_inf)`.
    pub max_error: f64,
}

pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize, feasible: bool) -> QpProblem {
    let l = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let p = &l * l.transpose() + nalgebra::DMatrix::identity(n, n) * 0.1;
    let q = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let g = nalgebra::DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let h = if feasible {
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        &g * x0 + DVector::from_fn(m, |_, _| rng.random_range(0.0..1.0))
    } else {
        DVector::from_fn(m, |_, _| rng.random_range(-1.5..1.0))
    };
    QpProblem::new(p, q, g, h).unwrap()
}

/// Random 3-variable problems with 1 to 8 rows, about half of them built feasible.
pub fn qp_vs_enumeration(trials: usize, seed: u64) -> QpComparison {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = QpComparison::default();
    for _ in 0..trials {
        let m = rng.random_range(1..=8);
        let feasible = rng.random_bool(0.5);
        let qp = random_qp(&mut rng, 3, m, feasible);
        let sol = solve(&qp).unwrap();
        match enumerate_qp(&qp.p, &qp.q, &qp.g, &qp.h) {
            Enumerated::Optimal(x) => {
                out.optimal += 1;
                if sol.status != QpStatus::Optimal {
                    out.status_mismatches += 1;
                } else {
                    out.max_error = out.max_error.max((&sol.x - &x).amax() / (1.0 + x.amax()));
                }
            }
            Enumerated::Infeasible => {
                out.infeasible += 1;
                if sol.status != QpStatus::Infeasible {
                    out.status_mismatches += 1;
                }
            }
        }
    }
    out
}

fn random_rotation(rng: &mut ChaCha8Rng) -> FrameRotation {
    let r = Rotation3::from_euler_angles(
        rng.random_range(-3.1..3.1),
        rng.random_range(-1.5..1.5),
        rng.random_range(-3.1..3.1),
    );
    FrameRotation::new(r.into_inner()).unwrap()
}

/// One factor of a random kind on node 0 (dynamics: nodes 0 and 1), away from
/// degenerate geometry.
pub fn random_factor(rng: &mut ChaCha8Rng, states: &[Vector6<f64>]) -> Factor {
    let p = states[0].fixed_rows::<3>(0).into_owned();
    let uav = loop {
        let u = Vector3::from_fn(|_, _| rng.random_range(-6.0..6.0));
        if (u - p).norm() > 0.5 {
            break u;
        }
    };
    match rng.random_range(0..5) {
        0 => Factor::Prior {
            node: 0,
            mean: Vector6::from_fn(|_, _| rng.random_range(-3.0..3.0)),
            information: spd::<6>(rng, 1.0),
        },
        1 => Factor::Dynamics {
            from: 0,
            transition: Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            information: spd::<6>(rng, 1.0),
        },
        2 => Factor::Range { node: 0, uav_position: uav, z_r: rng.random_range(0.0..8.0), sigma_r: 0.05 },
        3 => {
            let rotation = random_rotation(rng);
            let h = predicted_unit_bearing(&rotation, &uav, &p).unwrap();
            let measured = loop {
                let z = angles_to_unit(rng.random_range(-3.1..3.1), rng.random_range(-1.5..1.5));
                if geodesic_angle(&h, &z) < 2.8 {
                    break z;
                }
            };
            Factor::Bearing {
                node: 0,
                uav_position: uav,
                rotation,
                measured,
                information: spd::<2>(rng, 100.0) as Matrix2<f64>,
                cauchy_c: rng.random_bool(0.5).then_some(2.0),
            }
        }
        _ => Factor::Position {
            node: 0,
            measured: Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0)),
            information: spd::<3>(rng, 1.0),
        },
    }
}

/// Largest `|J_analytic - J_fd|_inf / max(1, |J_analytic|)` with step `1e-6`.
pub fn jacobian_vs_finite_differences(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let states: Vec<Vector6<f64>> = (0..2).map(|_| Vector6::from_fn(|_, _| rng.random_range(-4.0..4.0))).collect();
        let factor = random_factor(&mut rng, &states);
        let lin = evaluate_factor(&factor, &states).unwrap();
        for (node, jac) in lin.jacobians() {
            let x0 = DVector::from_column_slice(states[*node].as_slice());
            let f = |x: &DVector<f64>| {
                let mut s = states.clone();
                s[*node] = Vector6::from_column_slice(x.as_slice());
                // bearing residuals are compared in the basis of the linearization
                let r = factor.residual(&s, lin.basis.as_ref()).unwrap();
                DVector::from_column_slice(&r.as_slice()[..lin.dim])
            };
            let numeric = central_jacobian(f, &x0, lin.dim, 1e-6);
            let analytic = nalgebra::DMatrix::from_fn(lin.dim, 6, |i, j| jac[(i, j)]);
            let err = (numeric - &analytic).amax() / analytic.norm().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}
