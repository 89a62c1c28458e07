//! Mechanical energy bookkeeping: kinetic and potential energy, the energy
//! change caused by an instantaneous crank jump, and injected actuator work.

use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::params::RobotParams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// Total kinetic energy (J).
    pub kinetic: f64,
    /// Part of `kinetic` due to the radial motion of the moving mass (J).
    pub kinetic_radial: f64,
    /// Potential energy, zero with the rod hanging and the mass extended (J).
    pub potential: f64,
    /// `kinetic + potential` (J).
    pub total: f64,
}

pub fn energy(state: &State, p: &RobotParams) -> EnergyBreakdown {
    let r = p.slider_position(state.gamma);
    let (dr, _) = p.slider_derivatives(state.gamma);
    let radial_speed = dr * state.dgamma;
    let kinetic_radial = 0.5 * p.mass * radial_speed * radial_speed;
    let kinetic = 0.5 * p.m11(state.gamma) * state.dtheta * state.dtheta
        + kinetic_radial
        + 0.5 * p.crank_inertia * state.dgamma * state.dgamma;
    let cos_t = state.theta.cos();
    let potential = p.rod_mass * p.gravity * (p.rod_com - p.rod_com * cos_t)
        + p.mass * p.gravity * (p.slider_position(0.0) - r * cos_t);
    EnergyBreakdown {
        kinetic,
        kinetic_radial,
        potential,
        total: kinetic + potential,
    }
}

/// Mechanical power delivered by the crank motor. Braking power is not
/// credited back, so only `γ̇ u > 0` counts.
pub fn actuator_power(dgamma: f64, u: f64) -> f64 {
    let p = dgamma * u;
    if p > 0.0 {
        p
    } else {
        0.0
    }
}

/// Kinetic and potential energy change of an instantaneous crank jump.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpDelta {
    pub kinetic: f64,
    pub potential: f64,
}

impl JumpDelta {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

/// Energy change when the crank jumps from `before.gamma` to `gamma_plus`
/// while θ and the rod-axis momentum `M₁₁ θ̇` are preserved.
pub fn jump_energy_delta(before: &State, gamma_plus: f64, p: &RobotParams) -> JumpDelta {
    let m11 = p.m11(before.gamma);
    let m11_plus = p.m11(gamma_plus);
    let kinetic = 0.5 * m11 * (m11 / m11_plus - 1.0) * before.dtheta * before.dtheta;
    let potential = -p.mass
        * p.gravity
        * (p.slider_position(gamma_plus) - p.slider_position(before.gamma))
        * before.theta.cos();
    JumpDelta { kinetic, potential }
}

/// Trapezoidal integral of actuator power over `(t, power)` samples.
pub fn accumulate_work(samples: &[(f64, f64)]) -> Result<f64> {
    let mut work = 0.0;
    for (i, pair) in samples.windows(2).enumerate() {
        let (t0, p0) = pair[0];
        let (t1, p1) = pair[1];
        if t1 <= t0 || !t1.is_finite() {
            return Err(Error::NonMonotonicTime { index: i + 1 });
        }
        work += 0.5 * (p0 + p1) * (t1 - t0);
    }
    Ok(work)
}
