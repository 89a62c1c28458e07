use std::f64::consts::{FRAC_PI_2, PI};

use brachio_core::control::{feedback, linearization_residual};
use brachio_core::scenario::{run, sweep};
use brachio_core::{JumpKind, PhaseTag, Policy, RobotParams, RunOutput, ScenarioConfig};

fn limit_case() -> RunOutput {
    run(&ScenarioConfig::reference_limit_case()).unwrap()
}

fn continuous() -> RunOutput {
    run(&ScenarioConfig::reference_continuous()).unwrap()
}

fn assert_trajectory_shape(out: &RunOutput) {
    let traj = &out.trajectory;
    for w in traj.windows(2) {
        assert!(w[1].t > w[0].t);
        assert!(w[1].work >= w[0].work);
        assert!(!(w[0].phase == PhaseTag::Rotation && w[1].phase == PhaseTag::Swing));
    }
    let s = &out.summary;
    if let (Some(pi), Some(term)) = (s.t_pi_cross, s.t_terminal) {
        assert!(pi <= term);
        // The phase tag changes exactly at the crossing.
        for sample in traj {
            let expected = if sample.t < pi { PhaseTag::Swing } else { PhaseTag::Rotation };
            assert_eq!(sample.phase, expected, "t = {}", sample.t);
        }
    }
    if s.work > 0.0 {
        assert!((s.efficiency.unwrap() - s.delta_e / s.work).abs() < 1e-15);
    }
}

#[test]
fn limit_case_jump_log_invariants() {
    let p = RobotParams::nominal();
    let out = limit_case();
    assert_trajectory_shape(&out);
    let t_pi = out.summary.t_pi_cross.unwrap();
    let swing: Vec<_> = out.jumps.iter().filter(|j| j.t < t_pi).collect();
    for j in &out.jumps {
        j.verify(&p).unwrap();
        let direct = brachio_core::energy::energy(&j.after, &p).total - brachio_core::energy::energy(&j.before, &p).total;
        if direct != 0.0 {
            assert!((j.delta.total() - direct).abs() <= 1e-12 * direct.abs(), "{} vs {direct}", j.delta.total());
        }
    }
    for w in swing.windows(2) {
        assert_ne!(w[0].kind, w[1].kind, "swing jumps must alternate at t = {}", w[1].t);
    }
    for j in &swing {
        match j.kind {
            JumpKind::StableEq => assert!(j.delta.kinetic > 0.0),
            JumpKind::TurningAngle => {
                assert!(j.delta.kinetic.abs() < 1e-9);
                let expected = (j.before.theta.abs() - FRAC_PI_2).signum();
                assert_eq!(j.delta.potential.signum(), expected, "t = {}", j.t);
            }
            JumpKind::UnstableEq => panic!("unstable-equilibrium jump during swing"),
        }
    }
    let amplitudes: Vec<f64> = swing
        .iter()
        .filter(|j| j.kind == JumpKind::TurningAngle)
        .map(|j| j.before.theta.abs())
        .collect();
    assert!(amplitudes.len() > 5);
    for w in amplitudes.windows(2) {
        assert!(w[1] > w[0], "{amplitudes:?}");
    }
}

#[test]
fn limit_case_energy_only_grows_at_jumps() {
    let out = limit_case();
    let jump_times: Vec<f64> = out.jumps.iter().map(|j| j.t).collect();
    for w in out.trajectory.windows(2) {
        let jumped = jump_times.iter().any(|&t| t > w[0].t && t <= w[1].t);
        if !jumped {
            assert!(w[1].energy.total <= w[0].energy.total + 1e-9, "t = {}", w[1].t);
        }
    }
}

#[test]
fn terminal_angle_means_four_revolutions() {
    for out in [limit_case(), continuous()] {
        let s = &out.summary;
        assert!(s.t_terminal.is_some());
        assert!((s.theta_terminal.abs() - 9.0 * PI).abs() < 1e-6);
        let last = out.trajectory.last().unwrap();
        let first_rotation = out.trajectory.iter().find(|x| x.phase == PhaseTag::Rotation).unwrap();
        let turns = (last.state.theta.abs() - first_rotation.state.theta.abs()) / (2.0 * PI);
        assert!((turns - 4.0).abs() < 0.01, "{turns}");
        assert_eq!(2.0 * s.swing_periods, (2.0 * s.swing_periods).round());
    }
}

#[test]
fn summary_does_not_depend_on_sample_period() {
    for base in [ScenarioConfig::reference_limit_case(), ScenarioConfig::reference_continuous()] {
        let fine = run(&base).unwrap().summary;
        let coarse = run(&ScenarioConfig {
            sample_period: 0.0137,
            ..base
        })
        .unwrap()
        .summary;
        assert_eq!(fine, coarse);
    }
}

#[test]
fn continuous_run_tracks_target_dynamics() {
    let p = RobotParams::nominal();
    let cfg = ScenarioConfig::reference_continuous();
    let out = continuous();
    assert_trajectory_shape(&out);
    let mut worst: f64 = 0.0;
    for s in &out.trajectory {
        assert!(s.gamma_d == 0.0 || s.gamma_d == PI);
        assert_eq!(s.u, feedback(&s.state, s.gamma_d, &p, &cfg.controller));
        worst = worst.max(linearization_residual(&s.state, s.gamma_d, &p, &cfg.controller).abs());
    }
    assert!(worst <= 1e-6, "{worst:e}");
}

#[test]
fn continuous_setpoint_switches_only_at_sign_changes() {
    let out = continuous();
    for w in out.trajectory.windows(2) {
        if w[0].gamma_d != w[1].gamma_d {
            let sin_flip = w[0].state.theta.sin().signum() != w[1].state.theta.sin().signum();
            let rate_flip = w[0].state.dtheta.signum() != w[1].state.dtheta.signum();
            assert!(sin_flip || rate_flip, "t = {}", w[1].t);
        }
    }
}

#[test]
fn continuous_swing_amplitude_grows() {
    let out = continuous();
    let t_pi = out.summary.t_pi_cross.unwrap();
    let peaks: Vec<f64> = out
        .trajectory
        .windows(2)
        .filter(|w| w[1].t < t_pi && w[0].state.dtheta.signum() != w[1].state.dtheta.signum())
        .map(|w| w[0].state.theta.abs().max(w[1].state.theta.abs()))
        .collect();
    assert!(peaks.len() > 10);
    for w in peaks.windows(2) {
        assert!(w[1] > w[0], "{} then {}", w[0], w[1]);
    }
}

#[test]
fn continuous_peak_torque_stays_near_sizing_bound() {
    let p = RobotParams::nominal();
    let peak = continuous().trajectory.iter().map(|s| s.u.abs()).fold(0.0, f64::max);
    assert!(peak <= 1.1 * p.u_max, "peak |u| = {peak:.3} N·m, {:.1} % above u_max", 100.0 * (peak / p.u_max - 1.0));
}

#[test]
fn continuous_efficiency_in_expected_band() {
    let eff = continuous().summary.efficiency.unwrap();
    assert!((0.04..=0.07).contains(&eff), "efficiency {:.2} %", 100.0 * eff);
}

#[test]
fn open_loop_envelope_decays() {
    let cfg = ScenarioConfig {
        policy: Policy::OpenLoop,
        stop: brachio_core::StopCondition {
            t_max: 20.0,
            ..Default::default()
        },
        ..ScenarioConfig::reference_limit_case()
    };
    let out = run(&cfg).unwrap();
    assert_eq!(out.summary.work, 0.0);
    assert_eq!(out.summary.efficiency, None);
    assert!(out.summary.t_pi_cross.is_none());
    let peaks: Vec<f64> = out
        .trajectory
        .windows(2)
        .filter(|w| w[0].state.dtheta.signum() != w[1].state.dtheta.signum())
        .map(|w| w[0].state.theta.abs().max(w[1].state.theta.abs()))
        .collect();
    assert!(peaks.len() > 20);
    for w in peaks.windows(2) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn single_point_sweep_equals_run() {
    let base = ScenarioConfig::reference_limit_case();
    let points = sweep(&base, &[("omega".to_string(), vec![17.14])]).unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0].result.as_ref().unwrap(), &run(&base).unwrap().summary);
}

#[test]
fn faster_crank_crosses_earlier() {
    let points = sweep(
        &ScenarioConfig::reference_continuous(),
        &[("omega".to_string(), vec![12.0, 17.14])],
    )
    .unwrap();
    let slow = points[0].result.as_ref().unwrap().t_pi_cross.unwrap_or(f64::INFINITY);
    let fast = points[1].result.as_ref().unwrap().t_pi_cross.unwrap();
    assert!(fast < slow, "{fast} vs {slow}");
}

#[test]
fn stable_jump_potential_gain_scales_with_crank_radius() {
    let base = ScenarioConfig::reference_limit_case();
    let first_gain = |rho: f64| {
        let mut cfg = base.clone();
        cfg.set_param("rho", rho).unwrap();
        let out = run(&cfg).unwrap();
        let j = *out.jumps.iter().find(|j| j.kind == JumpKind::StableEq).unwrap();
        j.delta.potential / j.before.theta.cos()
    };
    let ratio = first_gain(0.02) / first_gain(0.01);
    assert!((ratio - 2.0).abs() < 1e-9, "{ratio}");
}

#[test]
fn sweeps_are_deterministic_and_ordered() {
    let axes = [
        ("omega".to_string(), vec![15.0, 17.14]),
        ("b_R".to_string(), vec![0.005, 0.0092]),
    ];
    let a = sweep(&ScenarioConfig::reference_continuous(), &axes).unwrap();
    let b = sweep(&ScenarioConfig::reference_continuous(), &axes).unwrap();
    assert_eq!(a.len(), 4);
    assert_eq!(a[1].assignments, vec![("omega".to_string(), 15.0), ("b_R".to_string(), 0.0092)]);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.result, y.result);
        let mut cfg = ScenarioConfig::reference_continuous();
        for (k, v) in &x.assignments {
            cfg.set_param(k, *v).unwrap();
        }
        assert_eq!(x.result.as_ref().unwrap(), &run(&cfg).unwrap().summary);
    }
}
