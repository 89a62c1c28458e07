//! Simulation of a single-rod brachiation robot: a rigid rod hanging from a
//! bar whose centre of mass is shifted by a crank-slide mechanism.
//!
//! The crate provides the nonlinear dynamics, two energy-pumping policies
//! (an idealized hybrid "limit case" with instantaneous mass repositioning,
//! and a continuous input-output linearizing controller), an event-detecting
//! adaptive Runge–Kutta integrator, and trace I/O for regression testing.

// Robot data such as r_R = 0.318 m trips the π-approximation lint.
#![allow(clippy::approx_constant)]

pub mod check;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod hybrid;
pub mod integrator;
pub mod params;
pub mod scenario;
pub mod trace;

pub use control::{ControllerConfig, TieBreak};
pub use dynamics::{DynTerms, State};
pub use energy::{EnergyBreakdown, JumpDelta};
pub use error::{Error, Result};
pub use hybrid::{JumpEvent, JumpKind};
pub use integrator::IntegratorConfig;
pub use params::{RobotParams, SliderOffset};
pub use scenario::{PhaseTag, Policy, RunOutput, RunSummary, ScenarioConfig, StopCondition, TrajectorySample};
