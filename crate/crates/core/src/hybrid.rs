//! Limit-case policy: the crank is repositioned instantaneously, modelled as
//! a hybrid system whose jumps conserve θ and the rod-axis momentum
//! `M₁₁(γ) θ̇`.
//!
//! Jump sets:
//! - stable equilibrium (`cos θ = 1`, θ̇ ≠ 0): retract the mass, `γ⁺ = π`;
//! - turning angle (`θ̇ = 0`, `cos θ ≠ 1`): extend the mass, `γ⁺ = 0`;
//! - unstable equilibrium (`cos θ = −1`, θ̇ ≠ 0): extend the mass, `γ⁺ = 0`.
//!
//! The swing phase watches the first two sets, the rotation phase the first
//! and last. Between jumps a holding torque freezes the crank.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{dyn_terms, generalized_momentum, state_derivative, State};
use crate::energy::{jump_energy_delta, JumpDelta};
use crate::error::{Error, Result};
use crate::integrator::{self, Direction, EventSpec, IntegratorConfig};
use crate::params::RobotParams;
use crate::scenario::{staging_events, summarize, PhaseTag, Policy, Recorder, RunOutput, Staging, StopCondition};

/// Turning-angle jumps closer than this to a stable equilibrium are ignored
/// (rad).
pub const EQUILIBRIUM_BAND: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JumpKind {
    StableEq,
    TurningAngle,
    UnstableEq,
}

impl JumpKind {
    pub fn target_gamma(self) -> f64 {
        match self {
            JumpKind::StableEq => PI,
            JumpKind::TurningAngle | JumpKind::UnstableEq => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JumpKind::StableEq => "stable-eq",
            JumpKind::TurningAngle => "turning-angle",
            JumpKind::UnstableEq => "unstable-eq",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub kind: JumpKind,
    pub before: State,
    pub after: State,
    pub delta: JumpDelta,
}

impl JumpEvent {
    /// Checks the conservation invariants of the jump. Returns a description
    /// of the first violation.
    pub fn verify(&self, p: &RobotParams) -> std::result::Result<(), String> {
        if self.after.theta.to_bits() != self.before.theta.to_bits() {
            return Err(format!("θ changed across jump at t = {}", self.t));
        }
        if self.after.dgamma != 0.0 {
            return Err(format!("γ̇⁺ = {} ≠ 0 at t = {}", self.after.dgamma, self.t));
        }
        if self.after.gamma != 0.0 && self.after.gamma != PI {
            return Err(format!("γ⁺ = {} not an extreme at t = {}", self.after.gamma, self.t));
        }
        let p_before = generalized_momentum(&self.before, p)[0];
        let p_after = generalized_momentum(&self.after, p)[0];
        let scale = p_before.abs().max(f64::MIN_POSITIVE);
        if (p_after - p_before).abs() > 1e-12 * scale {
            return Err(format!(
                "rod momentum not conserved at t = {}: {p_before} → {p_after}",
                self.t
            ));
        }
        Ok(())
    }
}

/// Event functions of the jump sets active in `phase`.
pub fn jump_set_events(phase: PhaseTag) -> Vec<EventSpec<'static, JumpKind, 4>> {
    // sin(θ/2) vanishes exactly where cos θ = 1, cos(θ/2) where cos θ = −1.
    let stable = EventSpec::new(JumpKind::StableEq, Direction::Any, |_, x: &[f64; 4]| (0.5 * x[0]).sin());
    match phase {
        PhaseTag::Swing => vec![
            stable,
            EventSpec::new(JumpKind::TurningAngle, Direction::Any, |_, x: &[f64; 4]| x[2]),
        ],
        PhaseTag::Rotation => vec![
            stable,
            EventSpec::new(JumpKind::UnstableEq, Direction::Any, |_, x: &[f64; 4]| (0.5 * x[0]).cos()),
        ],
    }
}

/// Post-jump state: the crank snaps to its target extreme and the rod
/// velocity rescales so that `M₁₁ θ̇` is unchanged.
pub fn jump_map(x: &State, kind: JumpKind, p: &RobotParams) -> State {
    let gamma_plus = kind.target_gamma();
    let ratio = p.m11(x.gamma) / p.m11(gamma_plus);
    State::new(x.theta, gamma_plus, ratio * x.dtheta, 0.0)
}

/// Torque that cancels the crank-axis dynamics so that γ stays frozen.
pub fn holding_input(x: &State, p: &RobotParams) -> f64 {
    let t = dyn_terms(x, p);
    -t.damping[1] + t.coriolis[1] - t.potential[1]
}

/// Distance from θ to the nearest stable equilibrium `2kπ`.
fn distance_to_stable(theta: f64) -> f64 {
    let r = theta.rem_euclid(2.0 * PI);
    r.min(2.0 * PI - r)
}

pub(crate) fn check_controllable(x0: &State) -> Result<()> {
    if distance_to_stable(x0.theta) == 0.0 && x0.dtheta == 0.0 {
        return Err(Error::NonControllableStart);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LimitEvent {
    Terminal,
    PiCross,
    Jump(JumpKind),
}

/// Simulates the limit-case policy from `x0` until |θ| reaches the stop angle
/// or the time limit.
pub fn run_limit_case(
    x0: State,
    p: &RobotParams,
    cfg: &IntegratorConfig,
    stop: &StopCondition,
    sample_period: f64,
) -> Result<RunOutput> {
    p.validate()?;
    check_controllable(&x0)?;

    let mut staging = Staging::new(&x0, 0.0);
    let mut recorder = Recorder::new(p, 0.0, sample_period);
    let mut jumps: Vec<JumpEvent> = Vec::new();
    let mut x = x0;
    let mut t = 0.0;
    let mut refractory: Vec<LimitEvent> = Vec::new();
    let hold = |s: &State| holding_input(s, p);

    loop {
        let phase = staging.phase;
        let mut events = staging_events(phase, stop.theta_limit, LimitEvent::Terminal, LimitEvent::PiCross);
        events.extend(jump_set_events(phase).into_iter().map(|e| EventSpec {
            id: LimitEvent::Jump(e.id),
            direction: e.direction,
            func: e.func,
        }));
        let out = integrator::integrate_until_event(
            |_, y: &[f64; 4]| {
                let s = State::from(*y);
                state_derivative(&s, holding_input(&s, p), p).to_array()
            },
            x.to_array(),
            (t, stop.t_max),
            &events,
            cfg,
            &refractory,
            &mut |seg| recorder.record_segment(seg, &hold, f64::NAN, phase),
        )?;
        t = out.t;
        x = State::from(out.state);
        if out.fired.is_empty() {
            break;
        }
        if out.has_fired(LimitEvent::Terminal) {
            staging.t_terminal = Some(t);
            break;
        }

        let mut refire: Vec<LimitEvent> = out.fired.iter().map(|f| f.id).collect();
        let kind = if out.has_fired(LimitEvent::PiCross) {
            // The switch happens on the unstable equilibrium itself, so the
            // rotation-phase extension applies immediately.
            staging.switch_to_rotation(t);
            refire.push(LimitEvent::Jump(JumpKind::UnstableEq));
            Some(JumpKind::UnstableEq)
        } else {
            out.fired.iter().find_map(|f| match f.id {
                LimitEvent::Jump(JumpKind::TurningAngle) if distance_to_stable(x.theta) < EQUILIBRIUM_BAND => None,
                LimitEvent::Jump(k) => Some(k),
                _ => None,
            })
        };

        if let Some(kind) = kind {
            let after = jump_map(&x, kind, p);
            let delta = jump_energy_delta(&x, after.gamma, p);
            recorder.add_impulse_work(delta.total().max(0.0));
            if kind == JumpKind::StableEq && staging.phase == PhaseTag::Swing {
                staging.stable_passages += 1;
            }
            jumps.push(JumpEvent {
                t,
                kind,
                before: x,
                after,
                delta,
            });
            x = after;
        }
        refractory = refire;
    }

    let (trajectory, work) = recorder.finish(t, x, holding_input(&x, p), f64::NAN, staging.phase);
    let summary = summarize(Policy::LimitCase, &staging, &trajectory, t, &x, work, jumps.len(), p);
    Ok(RunOutput {
        trajectory,
        jumps,
        summary,
    })
}
