//! Run orchestration: phase staging, stop conditions, uniform trajectory
//! sampling, work accounting and run summaries for every policy.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{self, ControllerConfig};
use crate::dynamics::State;
use crate::energy::{actuator_power, energy, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::hybrid::{self, JumpEvent};
use crate::integrator::{self, Direction, EventSpec, IntegratorConfig, Segment};
use crate::params::RobotParams;

/// Motion stage. Transitions only from `Swing` to `Rotation`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseTag {
    #[default]
    Swing,
    Rotation,
}

impl PhaseTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseTag::Swing => "swing",
            PhaseTag::Rotation => "rotation",
        }
    }
}

impl std::str::FromStr for PhaseTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "swing" => Ok(PhaseTag::Swing),
            "rotation" => Ok(PhaseTag::Rotation),
            other => Err(format!("unknown phase `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    #[default]
    LimitCase,
    Continuous,
    OpenLoop,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::LimitCase => "limit-case",
            Policy::Continuous => "continuous",
            Policy::OpenLoop => "open-loop",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "limit-case" => Ok(Policy::LimitCase),
            "continuous" => Ok(Policy::Continuous),
            "open-loop" => Ok(Policy::OpenLoop),
            other => Err(format!(
                "unknown policy `{other}` (expected limit-case, continuous or open-loop)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopCondition {
    /// The run ends when |θ| reaches this angle (rad).
    pub theta_limit: f64,
    pub t_max: f64,
}

impl Default for StopCondition {
    fn default() -> Self {
        StopCondition {
            theta_limit: 9.0 * PI,
            t_max: 120.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: State,
    pub u: f64,
    /// Commanded crank angle; NaN for policies without a setpoint.
    pub gamma_d: f64,
    pub energy: EnergyBreakdown,
    /// Cumulative injected work (J).
    pub work: f64,
    pub phase: PhaseTag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: Policy,
    /// First time |θ| reached π.
    pub t_pi_cross: Option<f64>,
    /// Swing periods completed before the phase switch, in halves.
    pub swing_periods: f64,
    /// Time |θ| reached the stop angle, if it did.
    pub t_terminal: Option<f64>,
    pub t_end: f64,
    pub theta_terminal: f64,
    pub e_initial: f64,
    pub e_final: f64,
    pub delta_e: f64,
    pub work: f64,
    /// `delta_e / work`; undefined without injected work.
    pub efficiency: Option<f64>,
    /// Jumps (limit case) or setpoint switches (continuous).
    pub event_count: usize,
}

impl RunSummary {
    /// Human-readable block used by the command-line front end.
    pub fn report(&self) -> String {
        let opt = |v: Option<f64>, unit: &str| match v {
            Some(x) => format!("{x:.2} {unit}"),
            None => "n/a".to_string(),
        };
        let mut s = String::new();
        s.push_str(&format!("policy         = {}\n", self.policy.as_str()));
        s.push_str(&format!("t_pi_cross     = {}\n", opt(self.t_pi_cross, "s")));
        s.push_str(&format!("swing_periods  = {:.1}\n", self.swing_periods));
        s.push_str(&format!("t_terminal     = {}\n", opt(self.t_terminal, "s")));
        s.push_str(&format!("t_end          = {:.2} s\n", self.t_end));
        s.push_str(&format!("theta_terminal = {:.4} rad ({:.3} pi)\n", self.theta_terminal, self.theta_terminal / PI));
        s.push_str(&format!("E_initial      = {:.4} J\n", self.e_initial));
        s.push_str(&format!("E_final        = {:.4} J\n", self.e_final));
        s.push_str(&format!("dE             = {:.4} J\n", self.delta_e));
        s.push_str(&format!("W              = {:.4} J\n", self.work));
        s.push_str(&format!(
            "efficiency     = {}\n",
            self.efficiency
                .map_or_else(|| "undefined".to_string(), |e| format!("{:.2} %", 100.0 * e))
        ));
        s.push_str(&format!("events         = {}\n", self.event_count));
        s
    }
}

/// Spacing of the work quadrature nodes (s).
pub const WORK_NODE_SPACING: f64 = 1e-3;

/// Collects uniformly spaced output samples and integrates injected work
/// from the dense solver output.
///
/// The work quadrature runs on its own node grid, so the summary does not
/// depend on the output sample period.
#[derive(Debug)]
pub struct Recorder<'p> {
    params: &'p RobotParams,
    t0: f64,
    period: f64,
    next_index: u64,
    work: f64,
    samples: Vec<TrajectorySample>,
}

impl<'p> Recorder<'p> {
    pub fn new(params: &'p RobotParams, t0: f64, sample_period: f64) -> Self {
        Recorder {
            params,
            t0,
            period: sample_period,
            next_index: 0,
            work: 0.0,
            samples: Vec::new(),
        }
    }

    fn sample(&self, t: f64, state: State, u: f64, gamma_d: f64, work: f64, phase: PhaseTag) -> TrajectorySample {
        TrajectorySample {
            t,
            state,
            u,
            gamma_d,
            energy: energy(&state, self.params),
            work,
            phase,
        }
    }

    fn grid(&self, k: u64) -> f64 {
        self.t0 + k as f64 * self.period
    }

    /// Consumes one accepted solver step.
    pub fn record_segment(
        &mut self,
        seg: &Segment<4>,
        u_law: &dyn Fn(&State) -> f64,
        gamma_d: f64,
        phase: PhaseTag,
    ) {
        let (a, b) = (seg.start(), seg.end());
        let eval = |t: f64| State::from(seg.eval(t.clamp(a, b)).expect("clamped to segment"));
        let power = |s: &State| actuator_power(s.dgamma, u_law(s));

        if self.samples.is_empty() && self.next_index == 0 && self.grid(0) <= a {
            let s0 = eval(a);
            self.samples.push(self.sample(a, s0, u_law(&s0), gamma_d, self.work, phase));
            self.next_index = 1;
        }

        let pieces = (((b - a) / WORK_NODE_SPACING).ceil() as usize).max(1);
        let dt = (b - a) / pieces as f64;
        let mut node_t = a;
        let mut node_p = power(&eval(a));
        for j in 1..=pieces {
            let t_next = if j == pieces { b } else { a + j as f64 * dt };
            let p_next = power(&eval(t_next));
            // Output samples falling inside this quadrature piece.
            loop {
                let ts = self.grid(self.next_index);
                if ts > t_next || ts > b {
                    break;
                }
                if ts > a {
                    let s = eval(ts);
                    let ps = power(&s);
                    let w = self.work + 0.5 * (node_p + ps) * (ts - node_t);
                    self.samples.push(self.sample(ts, s, u_law(&s), gamma_d, w, phase));
                }
                self.next_index += 1;
            }
            self.work += 0.5 * (node_p + p_next) * (t_next - node_t);
            node_t = t_next;
            node_p = p_next;
        }
    }

    /// Adds the work delivered by an instantaneous jump.
    pub fn add_impulse_work(&mut self, work: f64) {
        self.work += work;
    }

    pub fn work(&self) -> f64 {
        self.work
    }

    /// Appends the terminal sample unless it already lies on the grid.
    pub fn finish(mut self, t: f64, state: State, u: f64, gamma_d: f64, phase: PhaseTag) -> (Vec<TrajectorySample>, f64) {
        if self.samples.last().is_none_or(|s| s.t < t) {
            let sample = self.sample(t, state, u, gamma_d, self.work, phase);
            self.samples.push(sample);
        }
        (self.samples, self.work)
    }
}

/// Full description of one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub params: RobotParams,
    pub controller: ControllerConfig,
    pub integrator: IntegratorConfig,
    pub policy: Policy,
    pub x0: State,
    pub stop: StopCondition,
    pub sample_period: f64,
}

impl ScenarioConfig {
    /// The limit-case reference scenario.
    pub fn reference_limit_case() -> Self {
        ScenarioConfig {
            params: RobotParams::nominal(),
            controller: ControllerConfig::default(),
            integrator: IntegratorConfig::default(),
            policy: Policy::LimitCase,
            x0: State::new(0.31, 0.0, 1.46, 0.0),
            stop: StopCondition {
                theta_limit: 9.0 * PI,
                t_max: 60.0,
            },
            sample_period: 1e-3,
        }
    }

    /// The continuous-policy reference scenario (ζ = 1, ω = 17.14 s⁻¹).
    pub fn reference_continuous() -> Self {
        ScenarioConfig {
            policy: Policy::Continuous,
            stop: StopCondition {
                theta_limit: 9.0 * PI,
                t_max: 120.0,
            },
            ..Self::reference_limit_case()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.controller.validate()?;
        self.integrator
            .validate()
            .map_err(|(key, reason)| Error::invalid(&format!("integrator.{key}"), reason))?;
        if !self.x0.is_finite() {
            return Err(Error::invalid("x0", "all components must be finite"));
        }
        if !(self.stop.t_max.is_finite() && self.stop.t_max > 0.0) {
            return Err(Error::invalid("stop.t_max", "must be finite and > 0"));
        }
        if self.stop.theta_limit.is_nan() || self.stop.theta_limit <= 0.0 {
            return Err(Error::invalid("stop.theta_limit", "must be > 0"));
        }
        if !(self.sample_period.is_finite() && self.sample_period > 0.0) {
            return Err(Error::invalid("output.sample_period", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Overrides one scalar by name. Used by parameter sweeps.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let p = &mut self.params;
        match name {
            "m_R" => p.rod_mass = value,
            "I_R" => p.rod_inertia = value,
            "r_R" => p.rod_com = value,
            "m_M" => p.mass = value,
            "I_S" => p.crank_inertia = value,
            "rho" => p.crank_radius = value,
            "l" => p.conrod_len = value,
            "d" => p.slide_mean = value,
            "b_R" => p.rod_damping = value,
            "b_C" => p.crank_damping = value,
            "b_S" => p.slide_damping = value,
            "u_max" => p.u_max = value,
            "g" => p.gravity = value,
            "zeta" => self.controller.zeta = value,
            "omega" => self.controller.omega = value,
            "t_max" => self.stop.t_max = value,
            "theta_limit" => self.stop.theta_limit = value,
            other => return Err(Error::invalid(other, "not a sweepable parameter")),
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trajectory: Vec<TrajectorySample>,
    pub jumps: Vec<JumpEvent>,
    pub summary: RunSummary,
}

/// Executes one scenario.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput> {
    config.validate()?;
    match config.policy {
        Policy::LimitCase => hybrid::run_limit_case(
            config.x0,
            &config.params,
            &config.integrator,
            &config.stop,
            config.sample_period,
        ),
        Policy::Continuous => control::run_continuous(
            config.x0,
            &config.params,
            &config.controller,
            &config.integrator,
            &config.stop,
            config.sample_period,
        ),
        Policy::OpenLoop => run_open_loop(config),
    }
}

/// Bookkeeping shared by all policies: π crossing, equilibrium passages and
/// termination.
#[derive(Clone, Debug)]
pub(crate) struct Staging {
    pub phase: PhaseTag,
    pub t_pi_cross: Option<f64>,
    pub t_terminal: Option<f64>,
    pub stable_passages: usize,
}

impl Staging {
    pub fn new(x0: &State, t0: f64) -> Self {
        let rotating = x0.theta.abs() >= PI;
        Staging {
            phase: if rotating { PhaseTag::Rotation } else { PhaseTag::Swing },
            t_pi_cross: rotating.then_some(t0),
            t_terminal: None,
            stable_passages: 0,
        }
    }

    pub fn switch_to_rotation(&mut self, t: f64) {
        if self.phase == PhaseTag::Swing {
            self.phase = PhaseTag::Rotation;
            self.t_pi_cross = Some(t);
        }
    }

    pub fn swing_periods(&self) -> f64 {
        self.stable_passages as f64 / 2.0
    }
}

/// Event functions for the staging boundaries: |θ| reaching the stop angle,
/// and, during the swing phase, |θ| reaching π.
pub(crate) fn staging_events<'a, K: Copy + 'a>(
    phase: PhaseTag,
    theta_limit: f64,
    terminal: K,
    pi_cross: K,
) -> Vec<EventSpec<'a, K, 4>> {
    let mut events = vec![EventSpec::new(terminal, Direction::Rising, move |_, x: &[f64; 4]| {
        x[0].abs() - theta_limit
    })];
    if phase == PhaseTag::Swing {
        events.push(EventSpec::new(pi_cross, Direction::Rising, |_, x: &[f64; 4]| x[0].abs() - PI));
    }
    events
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn summarize(
    policy: Policy,
    staging: &Staging,
    trajectory: &[TrajectorySample],
    t_end: f64,
    final_state: &State,
    work: f64,
    event_count: usize,
    params: &RobotParams,
) -> RunSummary {
    let e_initial = trajectory.first().map_or(0.0, |s| s.energy.total);
    let e_final = energy(final_state, params).total;
    let delta_e = e_final - e_initial;
    RunSummary {
        policy,
        t_pi_cross: staging.t_pi_cross,
        swing_periods: staging.swing_periods(),
        t_terminal: staging.t_terminal,
        t_end,
        theta_terminal: final_state.theta,
        e_initial,
        e_final,
        delta_e,
        work,
        efficiency: (work > 0.0).then(|| delta_e / work),
        event_count,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum OpenLoopEvent {
    Terminal,
    PiCross,
    Passage,
}

fn run_open_loop(config: &ScenarioConfig) -> Result<RunOutput> {
    let p = &config.params;
    let mut staging = Staging::new(&config.x0, 0.0);
    let mut recorder = Recorder::new(p, 0.0, config.sample_period);
    let mut x = config.x0;
    let mut t = 0.0;
    let mut refractory = Vec::new();
    let zero = |_: &State| 0.0;
    loop {
        let mut events = staging_events(staging.phase, config.stop.theta_limit, OpenLoopEvent::Terminal, OpenLoopEvent::PiCross);
        events.push(EventSpec::new(OpenLoopEvent::Passage, Direction::Any, |_, x: &[f64; 4]| {
            (0.5 * x[0]).sin()
        }));
        let phase = staging.phase;
        let out = integrator::integrate_until_event(
            |_, x: &[f64; 4]| crate::dynamics::state_derivative(&State::from(*x), 0.0, p).to_array(),
            x.to_array(),
            (t, config.stop.t_max),
            &events,
            &config.integrator,
            &refractory,
            &mut |seg| recorder.record_segment(seg, &zero, f64::NAN, phase),
        )?;
        t = out.t;
        x = State::from(out.state);
        if out.fired.is_empty() {
            break;
        }
        if out.has_fired(OpenLoopEvent::Terminal) {
            staging.t_terminal = Some(t);
            break;
        }
        if out.has_fired(OpenLoopEvent::PiCross) {
            staging.switch_to_rotation(t);
        }
        if out.has_fired(OpenLoopEvent::Passage) && staging.phase == PhaseTag::Swing {
            staging.stable_passages += 1;
        }
        refractory = out.fired.iter().map(|f| f.id).collect();
    }
    let (trajectory, work) = recorder.finish(t, x, 0.0, f64::NAN, staging.phase);
    let summary = summarize(Policy::OpenLoop, &staging, &trajectory, t, &x, work, 0, p);
    Ok(RunOutput {
        trajectory,
        jumps: Vec::new(),
        summary,
    })
}

/// One grid point of a sweep and its outcome.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub assignments: Vec<(String, f64)>,
    pub result: std::result::Result<RunSummary, String>,
}

/// Cartesian grid over named parameters, in row-major order (last axis
/// fastest).
pub fn expand_grid(axes: &[(String, Vec<f64>)]) -> Vec<Vec<(String, f64)>> {
    let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for (name, values) in axes {
        points = points
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push((name.clone(), v));
                    p
                })
            })
            .collect();
    }
    points
}

/// Runs every grid point independently (in parallel). Failures are recorded
/// per point. Results are returned in grid order.
pub fn sweep(base: &ScenarioConfig, axes: &[(String, Vec<f64>)]) -> Result<Vec<SweepPoint>> {
    if axes.is_empty() || axes.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::Config("sweep grid must have at least one value per axis".into()));
    }
    let mut probe = base.clone();
    for (name, values) in axes {
        probe.set_param(name, values[0])?;
    }
    let points = expand_grid(axes);
    Ok(points
        .into_par_iter()
        .map(|assignments| {
            let mut cfg = base.clone();
            let result = assignments
                .iter()
                .try_for_each(|(k, v)| cfg.set_param(k, *v))
                .and_then(|_| run(&cfg))
                .map(|out| out.summary)
                .map_err(|e| e.to_string());
            SweepPoint { assignments, result }
        })
        .collect())
}
