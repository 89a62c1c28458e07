use std::f64::consts::PI;

use brachio_core::check::{lagrangian_errors, random_states, SEED};
use brachio_core::control::{linearization_residual, setpoint, ControllerConfig};
use brachio_core::dynamics::{dyn_terms, generalized_momentum, state_derivative};
use brachio_core::energy::{energy, jump_energy_delta};
use brachio_core::hybrid::jump_map;
use brachio_core::{JumpKind, RobotParams, SliderOffset, State};
use proptest::prelude::*;

fn params(mode: u8) -> RobotParams {
    let mode = match mode % 3 {
        0 => SliderOffset::Discard,
        1 => SliderOffset::Plus,
        _ => SliderOffset::Minus,
    };
    RobotParams::nominal().with_offset(mode)
}

fn state() -> impl Strategy<Value = State> {
    (-20.0..20.0f64, -7.0..7.0f64, -10.0..10.0f64, -50.0..50.0f64).prop_map(|(a, b, c, d)| State::new(a, b, c, d))
}

#[test]
fn lagrangian_terms_match_finite_differences() {
    let states = random_states(100, SEED);
    for mode in 0..3 {
        let [mass, coriolis, potential] = lagrangian_errors(&states, &params(mode), &dyn_terms);
        assert!(mass <= 1e-6, "mass matrix error {mass:e}");
        assert!(coriolis <= 1e-5, "velocity term error {coriolis:e}");
        assert!(potential <= 1e-6, "potential torque error {potential:e}");
    }
}

proptest! {
    #[test]
    fn dynamics_are_periodic_in_both_angles(s in state(), k in -3i32..3, mode in 0u8..3) {
        let p = params(mode);
        let shifted = State::new(s.theta + 2.0 * PI * k as f64, s.gamma - 2.0 * PI * k as f64, s.dtheta, s.dgamma);
        let a = state_derivative(&s, 0.7, &p).to_array();
        let b = state_derivative(&shifted, 0.7, &p).to_array();
        for i in 0..4 {
            prop_assert!((a[i] - b[i]).abs() <= 1e-9 * (1.0 + a[i].abs()));
        }
    }

    #[test]
    fn mass_matrix_is_positive_and_energy_split_is_consistent(s in state(), mode in 0u8..3) {
        let p = params(mode);
        let t = dyn_terms(&s, &p);
        prop_assert!(t.mass[0] > 0.0 && t.mass[1] > 0.0);
        let e = energy(&s, &p);
        prop_assert!(e.kinetic >= 0.0);
        prop_assert!(e.kinetic_radial >= 0.0 && e.kinetic_radial <= e.kinetic + 1e-15);
        prop_assert!((e.total - e.kinetic - e.potential).abs() <= 1e-12 * (1.0 + e.total.abs()));
    }

    #[test]
    fn power_balance_holds(s in state(), u in -5.0..5.0f64, mode in 0u8..3) {
        let p = params(mode);
        let f = state_derivative(&s, u, &p).to_array();
        let x = s.to_array();
        let e_at = |h: f64| energy(&State::from(std::array::from_fn::<f64, 4, _>(|i| x[i] + h * f[i])), &p).total;
        let h = 1e-5;
        let de = (e_at(-2.0 * h) - 8.0 * e_at(-h) + 8.0 * e_at(h) - e_at(2.0 * h)) / (12.0 * h);
        let t = dyn_terms(&s, &p);
        let power = s.dtheta * t.damping[0] + s.dgamma * (t.damping[1] + u);
        prop_assert!((de - power).abs() <= 1e-4 * power.abs().max(1.0), "{de} vs {power}");
    }

    #[test]
    fn jumps_conserve_rod_momentum(theta in -20.0..20.0f64, dtheta in -10.0..10.0f64, at_pi: bool, mode in 0u8..3) {
        let p = params(mode);
        let before = State::new(theta, if at_pi { PI } else { 0.0 }, dtheta, 0.0);
        for kind in [JumpKind::StableEq, JumpKind::TurningAngle, JumpKind::UnstableEq] {
            let after = jump_map(&before, kind, &p);
            prop_assert_eq!(after.theta.to_bits(), before.theta.to_bits());
            prop_assert_eq!(after.dgamma, 0.0);
            prop_assert!(after.gamma == 0.0 || after.gamma == PI);
            let p0 = generalized_momentum(&before, &p)[0];
            let p1 = generalized_momentum(&after, &p)[0];
            prop_assert!((p1 - p0).abs() <= 1e-12 * p0.abs());
            let direct = energy(&after, &p).total - energy(&before, &p).total;
            let formula = jump_energy_delta(&before, after.gamma, &p).total();
            prop_assert!((formula - direct).abs() <= 1e-12 * direct.abs().max(1e-3));
        }
    }

    #[test]
    fn setpoint_is_an_extreme_and_ignores_gains(theta in -20.0..20.0f64, dtheta in -10.0..10.0f64, omega in 1.0..40.0f64, prev_pi: bool) {
        let prev = if prev_pi { PI } else { 0.0 };
        let base = ControllerConfig::default();
        let scaled = ControllerConfig { omega, ..base.clone() };
        let g = setpoint(theta, dtheta, prev, &base);
        prop_assert!(g == 0.0 || g == PI);
        prop_assert_eq!(g, setpoint(theta, dtheta, prev, &scaled));
    }

    #[test]
    fn linearization_is_exact(s in state(), omega in 1.0..40.0f64, zeta in 0.2..2.0f64, at_pi: bool, mode in 0u8..3) {
        let p = params(mode);
        let cfg = ControllerConfig { omega, zeta, ..ControllerConfig::default() };
        let r = linearization_residual(&s, if at_pi { PI } else { 0.0 }, &p, &cfg);
        prop_assert!(r.abs() <= 1e-6, "{}", r);
    }

    #[test]
    fn discard_error_is_bounded(gamma in -7.0..7.0f64) {
        let exact = RobotParams::nominal().with_offset(SliderOffset::Minus);
        let approx = RobotParams::nominal();
        let bound = exact.crank_radius.powi(2) / (2.0 * (exact.conrod_len - exact.crank_radius));
        prop_assert!((exact.slider_position(gamma) - approx.slider_position(gamma)).abs() <= bound);
    }
}
