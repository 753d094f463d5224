mod oracles;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use oracles::checks::{
    any_pose, jacobian_vs_finite_differences, position_measurement, random_chain, random_factor, window_for,
    window_vs_rts,
};
use oracles::{batch_map, rts_smoother};
use uwbtrack::estimation::evaluate_factor;

#[test]
fn rts_and_batch_oracles_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let c = random_chain(&mut rng, 25);
        for ((xa, pa), (xb, pb)) in rts_smoother(&c).iter().zip(&batch_map(&c)) {
            assert!((xa - xb).amax() <= 1e-8);
            assert!((pa - pb).amax() <= 1e-8);
        }
    }
}

#[test]
fn window_matches_rts_with_marginalization() {
    let err = window_vs_rts(20, 12);
    assert!(err <= 1e-8, "window vs rts mismatch {err:e}");
}

#[test]
fn full_window_matches_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let n = 15;
        let c = random_chain(&mut rng, n);
        let mut win = window_for(&c, n);
        for o in &c.obs {
            win.push_measurements(any_pose(), position_measurement(o)).unwrap();
        }
        let beliefs = win.optimize(false).unwrap();
        for (b, (x, p)) in beliefs.iter().zip(batch_map(&c)) {
            assert!((b.mean.to_vector() - x).amax() <= 1e-8);
            assert!((b.cov.matrix() - p).amax() <= 1e-8);
        }
    }
}

#[test]
fn analytic_jacobians_match_central_differences() {
    let err = jacobian_vs_finite_differences(1000, 14);
    assert!(err <= 1e-5, "jacobian relative error {err:e}");
}

#[test]
fn residual_with_own_basis_matches_linearization() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..200 {
        let states: Vec<nalgebra::Vector6<f64>> = (0..2)
            .map(|_| nalgebra::Vector6::from_fn(|_, _| rand::Rng::random_range(&mut rng, -4.0..4.0)))
            .collect();
        let factor = random_factor(&mut rng, &states);
        let lin = evaluate_factor(&factor, &states).unwrap();
        let r = factor.residual(&states, lin.basis.as_ref()).unwrap();
        assert!((r - lin.residual).amax() < 1e-12);
    }
}
