use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use uwbtrack::control::{
    compute_control, confidence_radius, deadzone_errors, hocbf_halfspaces, reference_accel, relative_kinematics,
    safety_envelope, safety_qp, CommandStatus, ControllerKind, Gains, RelativeKinematics,
};
use uwbtrack::dynamics::UavState;
use uwbtrack::estimation::GaussianBelief;
use uwbtrack::qp::{kkt_residual, solve, QpStatus};
use uwbtrack::{FrameRotation, SimConfig, State6, Sym3};

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn spd3() -> impl Strategy<Value = Matrix3<f64>> {
    (proptest::collection::vec(-0.5f64..0.5, 9), 1e-4f64..0.05).prop_map(|(v, eps)| {
        let l = Matrix3::from_column_slice(&v);
        l * l.transpose() + Matrix3::identity() * eps
    })
}

fn controller() -> impl Strategy<Value = ControllerKind> {
    prop_oneof![
        Just(ControllerKind::ClfOnly),
        Just(ControllerKind::FixedClfCbf),
        Just(ControllerKind::CovarianceAware)
    ]
}

fn scene() -> impl Strategy<Value = (GaussianBelief, UavState)> {
    (vec3(2.0), vec3(2.0), vec3(6.0), vec3(3.5), spd3()).prop_filter_map("target too close", |(pt, vt, off, vr, c)| {
        if off.norm() < 0.5 {
            return None;
        }
        let mut cov = nalgebra::Matrix6::identity() * 0.01;
        cov.fixed_view_mut::<3, 3>(0, 0).copy_from(&c);
        let belief = GaussianBelief::from_parts(&State6::new(pt, vt).to_vector(), &cov, false).ok()?;
        let uav = UavState { state: State6::new(pt - off, vr), pose_rotation: FrameRotation::identity() };
        Some((belief, uav))
    })
}

fn setup(belief: &GaussianBelief, uav: &UavState, cfg: &SimConfig, kind: ControllerKind) -> (RelativeKinematics, f64, Vector3<f64>) {
    let kin = relative_kinematics(belief, uav).unwrap();
    let r = confidence_radius(&belief.cov.position_block(), cfg.alpha_risk).unwrap();
    let u_ref = reference_accel(&kin, deadzone_errors(kin.d_hat, kin.e_z_hat, r, cfg.d_star), &Gains::from_config(cfg));
    let r_env = if kind == ControllerKind::CovarianceAware { r } else { 0.0 };
    (kin, r_env, u_ref)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn safety_qp_solutions_satisfy_kkt((belief, uav) in scene(), kind in controller(), relaxed in any::<bool>()) {
        let cfg = SimConfig::default();
        let (kin, r_env, u_ref) = setup(&belief, &uav, &cfg, kind);
        let env = safety_envelope(kin.d_hat, r_env, cfg.d_min, cfg.d_max);
        let qp = safety_qp(&kin, &env, &u_ref, &uav, &cfg, kind, relaxed).unwrap();
        let sol = solve(&qp.problem).unwrap();
        if sol.status == QpStatus::Optimal {
            // the slack weight makes relaxed multipliers large; scale by their magnitude
            let scale = sol.duals.amax().max(1.0);
            prop_assert!(kkt_residual(&qp.problem, &sol) <= 1e-6 * scale);
        }
    }

    #[test]
    fn feasible_reference_passes_unchanged((belief, uav) in scene(), kind in controller()) {
        let cfg = SimConfig::default();
        let cmd = compute_control(&belief, &uav, &cfg, kind);
        prop_assume!(cmd.qp_status != CommandStatus::Fallback);
        let (kin, env) = (cmd.kinematics.unwrap(), cmd.envelope.unwrap());
        let qp = safety_qp(&kin, &env, &cmd.u_ref, &uav, &cfg, kind, false).unwrap();
        let u_ref = nalgebra::DVector::from_column_slice(cmd.u_ref.as_slice());
        if qp.problem.max_violation(&u_ref) <= 0.0 {
            prop_assert_eq!(cmd.qp_status, CommandStatus::Optimal);
            prop_assert!((cmd.u - cmd.u_ref).amax() <= 1e-8);
        }
    }

    #[test]
    fn command_respects_box(( belief, uav) in scene(), kind in controller()) {
        let cfg = SimConfig::default();
        let cmd = compute_control(&belief, &uav, &cfg, kind);
        prop_assert!(cmd.u.iter().all(|c| *c >= cfg.u_min && *c <= cfg.u_max));
    }

    #[test]
    fn reference_vanishes_inside_deadzone(
        d_off in -1.0f64..1.0,
        ez in -1.0f64..1.0,
        r in 0.0f64..1.5,
        n in vec3(1.0),
    ) {
        prop_assume!(n.norm() > 1e-3 && d_off.abs() <= r && ez.abs() <= r);
        let kin = RelativeKinematics {
            d_hat: 3.0 + d_off,
            n_hat: n.normalize(),
            v_r_hat: 0.0,
            v_tau_hat: Vector3::zeros(),
            e_z_hat: ez,
            v_z_hat: 0.0,
        };
        let errors = deadzone_errors(kin.d_hat, kin.e_z_hat, r, 3.0);
        prop_assert_eq!(errors, (0.0, 0.0));
        let gains = Gains::from_config(&SimConfig::default());
        prop_assert_eq!(reference_accel(&kin, errors, &gains), Vector3::zeros());
    }

    #[test]
    fn larger_radius_tightens_barriers(
        d_hat in 0.5f64..7.0,
        r1 in 0.0f64..3.0,
        dr in 0.0f64..3.0,
        v_r in -3.0f64..3.0,
        vt in vec3(2.0),
    ) {
        let n_hat = Vector3::x();
        let kin = RelativeKinematics {
            d_hat, n_hat, v_r_hat: v_r, v_tau_hat: vt - n_hat * vt.x, e_z_hat: 0.0, v_z_hat: 0.0,
        };
        let a = safety_envelope(d_hat, r1, 2.0, 5.0);
        let b = safety_envelope(d_hat, r1 + dr, 2.0, 5.0);
        prop_assert!(b.d_min_eff >= a.d_min_eff && b.d_max_eff <= a.d_max_eff);
        prop_assert!(b.d_min_eff <= b.d_max_eff);
        let ha = hocbf_halfspaces(&kin, &a, 1.5, 1.5);
        let hb = hocbf_halfspaces(&kin, &b, 1.5, 1.5);
        for (x, y) in ha.iter().zip(&hb) {
            prop_assert_eq!(x.a, y.a);
            prop_assert!(y.b <= x.b);
        }
    }

    #[test]
    fn radius_grows_with_covariance(c in spd3(), extra in spd3(), alpha in 0.01f64..0.3) {
        let small = Sym3::from_symmetrized(c).unwrap();
        let large = Sym3::from_symmetrized(c + extra).unwrap();
        let r1 = confidence_radius(&small, alpha).unwrap();
        let r2 = confidence_radius(&large, alpha).unwrap();
        prop_assert!(r2 >= r1 - 1e-12);
        let tighter = confidence_radius(&large, alpha * 0.5).unwrap();
        prop_assert!(tighter >= r2);
    }
}
