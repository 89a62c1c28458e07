//! Continuous policy: a bang-bang setpoint generator for the crank angle and
//! an input-output linearizing controller that makes γ follow
//! `γ̈ + 2ζωγ̇ + ω²(γ − γ_d) = 0`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::dynamics::{dyn_terms, state_derivative, State};
use crate::error::{Error, Result};
use crate::hybrid::check_controllable;
use crate::integrator::{self, Direction, EventSpec, IntegratorConfig};
use crate::params::RobotParams;
use crate::scenario::{staging_events, summarize, PhaseTag, Policy, Recorder, RunOutput, Staging, StopCondition};

/// Setpoint when `sin θ` or `θ̇` is exactly zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Keep the previous setpoint.
    #[default]
    HoldPrevious,
    /// Command the retracted extreme, γ_d = π.
    ForceRetract,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub zeta: f64,
    /// Natural frequency of the target crank dynamics (1/s).
    pub omega: f64,
    /// Clamp the commanded torque to ±u_max.
    pub saturate: bool,
    pub tie_break: TieBreak,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            zeta: 1.0,
            omega: 17.14,
            saturate: false,
            tie_break: TieBreak::HoldPrevious,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta.is_finite() && self.zeta > 0.0) {
            return Err(Error::invalid("controller.zeta", format!("must be finite and > 0, got {}", self.zeta)));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::invalid("controller.omega", format!("must be finite and > 0, got {}", self.omega)));
        }
        Ok(())
    }
}

/// Sign function with `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Setpoint from the signs of `sin θ` and `θ̇`.
pub fn setpoint_from_signs(sin_sign: f64, rate_sign: f64, prev: f64, cfg: &ControllerConfig) -> f64 {
    let product = sin_sign * rate_sign;
    if product == 0.0 {
        return match cfg.tie_break {
            TieBreak::HoldPrevious => prev,
            TieBreak::ForceRetract => PI,
        };
    }
    FRAC_PI_2 * (1.0 + product)
}

/// Crank setpoint: retracted (π) while the rod moves away from the hanging
/// position, extended (0) while it moves towards it.
pub fn setpoint(theta: f64, dtheta: f64, prev: f64, cfg: &ControllerConfig) -> f64 {
    setpoint_from_signs(sign(theta.sin()), sign(dtheta), prev, cfg)
}

/// Desired crank acceleration `w = −ω²(γ − γ_d) − 2ζωγ̇`.
pub fn control_signal(gamma: f64, dgamma: f64, gamma_d: f64, cfg: &ControllerConfig) -> f64 {
    -cfg.omega * cfg.omega * (gamma - gamma_d) - 2.0 * cfg.zeta * cfg.omega * dgamma
}

/// Linearizing torque `u = M₂₂ w − d₂ + c₂ − τ_p₂`, optionally clamped.
pub fn control_input(state: &State, w: f64, p: &RobotParams, cfg: &ControllerConfig) -> f64 {
    let t = dyn_terms(state, p);
    let u = t.mass[1] * w - t.damping[1] + t.coriolis[1] - t.potential[1];
    if cfg.saturate {
        u.clamp(-p.u_max, p.u_max)
    } else {
        u
    }
}

/// Closed-loop torque for a held setpoint.
pub fn feedback(state: &State, gamma_d: f64, p: &RobotParams, cfg: &ControllerConfig) -> f64 {
    let w = control_signal(state.gamma, state.dgamma, gamma_d, cfg);
    control_input(state, w, p, cfg)
}

/// Largest natural frequency whose peak torque `I_S ω² π` (a setpoint flip
/// from rest) stays within `u_max`.
pub fn max_frequency(u_max: f64, crank_inertia: f64) -> f64 {
    (u_max / (crank_inertia * PI)).sqrt()
}

/// Residual of the target crank dynamics along the closed loop, in rad/s².
/// Zero (to rounding) whenever the torque is not saturated.
pub fn linearization_residual(state: &State, gamma_d: f64, p: &RobotParams, cfg: &ControllerConfig) -> f64 {
    let u = feedback(state, gamma_d, p, cfg);
    let ddgamma = state_derivative(state, u, p).dgamma;
    ddgamma + 2.0 * cfg.zeta * cfg.omega * state.dgamma + cfg.omega * cfg.omega * (state.gamma - gamma_d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SwitchEvent {
    Terminal,
    PiCross,
    SinTheta,
    Rate,
}

/// Simulates the continuous policy. The setpoint is piecewise constant; its
/// switches (sign changes of `sin θ` and `θ̇`) are located as events and the
/// integration restarts at each one.
pub fn run_continuous(
    x0: State,
    p: &RobotParams,
    ctrl: &ControllerConfig,
    cfg: &IntegratorConfig,
    stop: &StopCondition,
    sample_period: f64,
) -> Result<RunOutput> {
    p.validate()?;
    ctrl.validate()?;
    check_controllable(&x0)?;

    let mut staging = Staging::new(&x0, 0.0);
    let mut recorder = Recorder::new(p, 0.0, sample_period);
    // An initial tie falls back to the current crank extreme.
    let initial_prev = if x0.gamma.cos() < 0.0 { PI } else { 0.0 };
    let mut gamma_d = setpoint(x0.theta, x0.dtheta, initial_prev, ctrl);
    let mut switches = 0usize;
    let mut x = x0;
    let mut t = 0.0;
    let mut refractory: Vec<SwitchEvent> = Vec::new();

    loop {
        let phase = staging.phase;
        let mut events = staging_events(phase, stop.theta_limit, SwitchEvent::Terminal, SwitchEvent::PiCross);
        events.push(EventSpec::new(SwitchEvent::SinTheta, Direction::Any, |_, y: &[f64; 4]| y[0].sin()));
        events.push(EventSpec::new(SwitchEvent::Rate, Direction::Any, |_, y: &[f64; 4]| y[2]));
        let held = gamma_d;
        let law = |s: &State| feedback(s, held, p, ctrl);
        let out = integrator::integrate_until_event(
            |_, y: &[f64; 4]| {
                let s = State::from(*y);
                state_derivative(&s, feedback(&s, held, p, ctrl), p).to_array()
            },
            x.to_array(),
            (t, stop.t_max),
            &events,
            cfg,
            &refractory,
            &mut |seg| recorder.record_segment(seg, &law, held, phase),
        )?;
        t = out.t;
        x = State::from(out.state);
        if out.fired.is_empty() {
            break;
        }
        if out.has_fired(SwitchEvent::Terminal) {
            staging.t_terminal = Some(t);
            break;
        }
        if out.has_fired(SwitchEvent::PiCross) {
            staging.switch_to_rotation(t);
        }

        // Post-crossing signs come from the crossing direction, since the
        // located state sits on the switching surface.
        let fired_sign = |id: SwitchEvent| {
            out.fired
                .iter()
                .find(|f| f.id == id)
                .map(|f| if f.rising { 1.0 } else { -1.0 })
        };
        let sin_sign = fired_sign(SwitchEvent::SinTheta).unwrap_or_else(|| sign(x.theta.sin()));
        let rate_sign = fired_sign(SwitchEvent::Rate).unwrap_or_else(|| sign(x.dtheta));
        if out.has_fired(SwitchEvent::SinTheta) && staging.phase == PhaseTag::Swing && x.theta.cos() > 0.0 {
            staging.stable_passages += 1;
        }
        let next = setpoint_from_signs(sin_sign, rate_sign, gamma_d, ctrl);
        if next != gamma_d {
            switches += 1;
            gamma_d = next;
        }
        refractory = out.fired.iter().map(|f| f.id).collect();
    }

    let u_end = feedback(&x, gamma_d, p, ctrl);
    let (trajectory, work) = recorder.finish(t, x, u_end, gamma_d, staging.phase);
    let summary = summarize(Policy::Continuous, &staging, &trajectory, t, &x, work, switches, p);
    Ok(RunOutput {
        trajectory,
        jumps: Vec::new(),
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ControllerConfig {
        ControllerConfig::default()
    }

    #[test]
    fn setpoint_examples() {
        assert_eq!(setpoint(0.31, 1.46, 0.0, &cfg()), PI);
        assert_eq!(setpoint(-0.5, 1.0, PI, &cfg()), 0.0);
        assert_eq!(setpoint(0.4, 0.0, PI, &cfg()), PI);
        assert_eq!(setpoint(0.0, 2.0, 0.0, &cfg()), 0.0);
        let force = ControllerConfig {
            tie_break: TieBreak::ForceRetract,
            ..cfg()
        };
        assert_eq!(setpoint(0.4, 0.0, 0.0, &force), PI);
    }

    #[test]
    fn control_signal_examples() {
        let w = control_signal(0.0, 0.0, PI, &cfg());
        assert!((w - 17.14f64.powi(2) * PI).abs() < 1e-12);
        assert!((w - 922.96).abs() / 922.96 < 1e-4);
        assert_eq!(control_signal(1.0, 0.0, 1.0, &cfg()), 0.0);
        assert!((control_signal(PI, 1.0, PI, &cfg()) + 34.28).abs() < 1e-12);
    }

    #[test]
    fn control_input_examples() {
        let p = RobotParams::nominal();
        let w = 922.96;
        let s = State::new(0.0, 0.0, 3.0, 0.0);
        let u = control_input(&s, w, &p, &cfg());
        assert!((u - 0.00491 * w).abs() < 1e-12);
        assert!((u - 4.532).abs() < 5e-4);
        let sat = ControllerConfig {
            saturate: true,
            ..cfg()
        };
        assert_eq!(control_input(&s, w, &p, &sat), 4.27);
        assert_eq!(control_input(&s, -w, &p, &sat), -4.27);
        assert_eq!(control_input(&State::new(0.3, 0.0, 1.0, 0.0), 0.0, &p, &cfg()), 0.0);
        assert!(control_input(&State::new(0.3, PI, 1.0, 0.0), 0.0, &p, &cfg()).abs() < 1e-15);
    }

    #[test]
    fn max_frequency_examples() {
        let w = max_frequency(4.27, 0.00491);
        assert!((w - 16.64).abs() / 16.64 < 5e-3);
        assert!((max_frequency(4.0 * 4.27, 0.00491) - 2.0 * w).abs() < 1e-12);
        assert!((max_frequency(4.27, 4.0 * 0.00491) - 0.5 * w).abs() < 1e-12);
    }

    #[test]
    fn linearization_is_exact_when_unsaturated() {
        let p = RobotParams::nominal().with_offset(crate::params::SliderOffset::Minus);
        for &(th, g, dth, dg) in &[(0.3, 0.2, 1.0, -3.0), (2.5, 2.9, -4.0, 10.0), (-1.0, 1.5, 0.1, 0.0)] {
            let r = linearization_residual(&State::new(th, g, dth, dg), PI, &p, &cfg());
            assert!(r.abs() < 1e-9, "{r}");
        }
    }

    #[test]
    fn rejects_bad_gains() {
        let mut c = cfg();
        c.omega = 0.0;
        assert!(c.validate().is_err());
        c.omega = 1.0;
        c.zeta = -1.0;
        assert!(c.validate().is_err());
    }
}
