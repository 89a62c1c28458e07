//! Equations of motion in the form `M(q) q̈ + c(q, q̇) − τ_p(q) = d(q, q̇) + B u`
//! with `q = [θ, γ]` and `B = [0, 1]ᵀ`.

use serde::{Deserialize, Serialize};

use crate::params::RobotParams;

/// Generalized coordinates and velocities, laid out as `[θ, γ, θ̇, γ̇]`.
///
/// θ is never wrapped: it accumulates across revolutions so that terminal
/// angles such as 9π can be tested directly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub theta: f64,
    pub gamma: f64,
    pub dtheta: f64,
    pub dgamma: f64,
}

impl State {
    pub const fn new(theta: f64, gamma: f64, dtheta: f64, dgamma: f64) -> Self {
        State {
            theta,
            gamma,
            dtheta,
            dgamma,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.theta, self.gamma, self.dtheta, self.dgamma]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        State::new(x[0], x[1], x[2], x[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl From<[f64; 4]> for State {
    fn from(x: [f64; 4]) -> Self {
        State::from_array(x)
    }
}

impl From<State> for [f64; 4] {
    fn from(s: State) -> Self {
        s.to_array()
    }
}

/// Terms of the equations of motion evaluated at one state.
///
/// The mass matrix is diagonal for this mechanism, so only its diagonal is
/// stored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynTerms {
    /// Diagonal of `M(q)`: `[M₁₁, M₂₂]`.
    pub mass: [f64; 2],
    /// Coriolis and centrifugal torques `c(q, q̇)`.
    pub coriolis: [f64; 2],
    /// Potential torques `τ_p(q)`.
    pub potential: [f64; 2],
    /// Viscous damping torques `d(q, q̇)`.
    pub damping: [f64; 2],
}

impl DynTerms {
    /// Full 2×2 mass matrix.
    pub fn mass_matrix(&self) -> [[f64; 2]; 2] {
        [[self.mass[0], 0.0], [0.0, self.mass[1]]]
    }
}

pub fn dyn_terms(state: &State, p: &RobotParams) -> DynTerms {
    let State {
        theta,
        gamma,
        dtheta,
        dgamma,
    } = *state;
    let r = p.slider_position(gamma);
    let (dr, ddr) = p.slider_derivatives(gamma);
    let m = p.mass;
    let g = p.gravity;
    let (sin_t, cos_t) = theta.sin_cos();

    let m11 = p.rod_inertia + m * r * r + p.rod_mass * p.rod_com * p.rod_com;
    let m22 = p.crank_inertia + m * dr * dr;

    let c1 = 2.0 * m * r * dr * dgamma * dtheta;
    let c2 = m * (dr * ddr * dgamma * dgamma - r * dr * dtheta * dtheta);

    let tau1 = -g * sin_t * (m * r + p.rod_mass * p.rod_com);
    let tau2 = g * m * dr * cos_t;

    let d1 = -p.rod_damping * dtheta;
    let d2 = -p.crank_damping * dgamma - p.slide_damping * dr * dr * dgamma;

    DynTerms {
        mass: [m11, m22],
        coriolis: [c1, c2],
        potential: [tau1, tau2],
        damping: [d1, d2],
    }
}

/// Generalized accelerations `q̈ = M⁻¹(−c + τ_p + d + B u)`.
pub fn accelerations(terms: &DynTerms, u: f64) -> [f64; 2] {
    let [m11, m22] = terms.mass;
    [
        (-terms.coriolis[0] + terms.potential[0] + terms.damping[0]) / m11,
        (-terms.coriolis[1] + terms.potential[1] + terms.damping[1] + u) / m22,
    ]
}

/// Time derivative of the state under crank torque `u`.
pub fn state_derivative(state: &State, u: f64, p: &RobotParams) -> State {
    let terms = dyn_terms(state, p);
    let [ddtheta, ddgamma] = accelerations(&terms, u);
    State::new(state.dtheta, state.dgamma, ddtheta, ddgamma)
}

/// Generalized momentum `p = M(q) v`.
pub fn generalized_momentum(state: &State, p: &RobotParams) -> [f64; 2] {
    [p.m11(state.gamma) * state.dtheta, p.m22(state.gamma) * state.dgamma]
}
