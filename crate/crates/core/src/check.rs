//! Self-check suites: finite-difference oracles and conservation tests run
//! against the live library. Each suite reports pass/fail with a detail line.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{linearization_residual, ControllerConfig};
use crate::dynamics::{dyn_terms, generalized_momentum, DynTerms, State};
use crate::energy::{energy, jump_energy_delta};
use crate::hybrid::{jump_map, JumpKind};
use crate::integrator::{self, fixed_step, IntegratorConfig};
use crate::params::{RobotParams, SliderOffset};

/// Seed of the random state sets, fixed so every run checks the same points.
pub const SEED: u64 = 0x5eed_b4ac;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        SuiteResult { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {:<22} {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Uniformly drawn states over one crank turn and a wide velocity range.
pub fn random_states(n: usize, seed: u64) -> Vec<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            State::new(
                rng.random_range(-3.0 * PI..3.0 * PI),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(-8.0..8.0),
                rng.random_range(-40.0..40.0),
            )
        })
        .collect()
}

/// Fourth-order central difference of `f` at 0.
fn diff4(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-9)
}

fn all_modes(p: &RobotParams) -> [RobotParams; 3] {
    [
        p.with_offset(SliderOffset::Discard),
        p.with_offset(SliderOffset::Plus),
        p.with_offset(SliderOffset::Minus),
    ]
}

/// Analytic slider derivatives against finite differences of the position.
pub fn slider_derivatives(p: &RobotParams) -> SuiteResult {
    let mut worst: f64 = 0.0;
    for params in all_modes(p) {
        for k in 0..=720 {
            let g = k as f64 * PI / 360.0;
            let (dr, ddr) = params.slider_derivatives(g);
            let fd1 = diff4(|s| params.slider_position(g + s), 1e-3);
            let fd2 = diff4(|s| params.slider_derivatives(g + s).0, 1e-3);
            worst = worst.max((dr - fd1).abs() / params.crank_radius).max((ddr - fd2).abs() / params.crank_radius);
        }
    }
    SuiteResult::new("slider-derivatives", worst < 1e-8, format!("max error {worst:.2e} (limit 1e-8)"))
}

/// Energy of the robot computed from first principles: the crank spins, the
/// rod rotates about the bar, and the moving mass is a point at distance
/// `r_M(γ)` along the rod.
fn oracle_kinetic(q: [f64; 2], v: [f64; 2], p: &RobotParams) -> f64 {
    let mass_pos = |s: f64| {
        let th = q[0] + s * v[0];
        let r = p.slider_position(q[1] + s * v[1]);
        [r * th.sin(), -r * th.cos()]
    };
    let vx = diff4(|s| mass_pos(s)[0], 1e-3);
    let vy = diff4(|s| mass_pos(s)[1], 1e-3);
    0.5 * (p.rod_inertia + p.rod_mass * p.rod_com * p.rod_com) * v[0] * v[0]
        + 0.5 * p.crank_inertia * v[1] * v[1]
        + 0.5 * p.mass * (vx * vx + vy * vy)
}

fn oracle_potential(q: [f64; 2], p: &RobotParams) -> f64 {
    let height_rod = -p.rod_com * q[0].cos();
    let height_mass = -p.slider_position(q[1]) * q[0].cos();
    p.gravity * (p.rod_mass * height_rod + p.mass * height_mass)
}

/// Mass matrix by polarization of the quadratic form `T(q, ·)`.
fn oracle_mass(q: [f64; 2], p: &RobotParams) -> [[f64; 2]; 2] {
    let t = |v: [f64; 2]| oracle_kinetic(q, v, p);
    let m11 = 2.0 * t([1.0, 0.0]);
    let m22 = 2.0 * t([0.0, 1.0]);
    let m12 = t([1.0, 1.0]) - 0.5 * (m11 + m22);
    [[m11, m12], [m12, m22]]
}

/// Velocity-dependent generalized forces `Ṁ v − ∂T/∂q`.
fn oracle_coriolis(q: [f64; 2], v: [f64; 2], p: &RobotParams) -> [f64; 2] {
    let h = 1e-4;
    let dm_dt = |i: usize, j: usize| {
        diff4(|s| oracle_mass([q[0] + s * v[0], q[1] + s * v[1]], p)[i][j], h)
    };
    let dt_dq = |k: usize| {
        diff4(
            |s| {
                let mut qq = q;
                qq[k] += s;
                oracle_kinetic(qq, v, p)
            },
            h,
        )
    };
    std::array::from_fn(|i| dm_dt(i, 0) * v[0] + dm_dt(i, 1) * v[1] - dt_dq(i))
}

fn oracle_potential_torque(q: [f64; 2], p: &RobotParams) -> [f64; 2] {
    std::array::from_fn(|k| {
        -diff4(
            |s| {
                let mut qq = q;
                qq[k] += s;
                oracle_potential(qq, p)
            },
            1e-4,
        )
    })
}

/// Largest relative mismatch between `terms` and the Lagrangian oracle over
/// `states`, as `[mass matrix, velocity terms, potential torques]`.
pub fn lagrangian_errors(
    states: &[State],
    p: &RobotParams,
    terms: &dyn Fn(&State, &RobotParams) -> DynTerms,
) -> [f64; 3] {
    let mut worst = [0.0f64; 3];
    for s in states {
        let q = [s.theta, s.gamma];
        let v = [s.dtheta, s.dgamma];
        let t = terms(s, p);
        let m = t.mass_matrix();
        let om = oracle_mass(q, p);
        worst[0] = worst[0].max(rel_err(&[m[0][0], m[0][1], m[1][1]], &[om[0][0], om[0][1], om[1][1]]));
        worst[1] = worst[1].max(rel_err(&t.coriolis, &oracle_coriolis(q, v, p)));
        worst[2] = worst[2].max(rel_err(&t.potential, &oracle_potential_torque(q, p)));
    }
    worst
}

/// Model terms against finite-difference derivatives of T and V.
pub fn lagrangian_with(p: &RobotParams, terms: &dyn Fn(&State, &RobotParams) -> DynTerms) -> SuiteResult {
    let states = random_states(100, SEED);
    let worst = all_modes(p)
        .iter()
        .flat_map(|params| lagrangian_errors(&states, params, terms))
        .fold(0.0, f64::max);
    SuiteResult::new(
        "lagrangian",
        worst <= 1e-5,
        format!("max relative error {worst:.2e} over 100 states x 3 modes (limit 1e-5)"),
    )
}

pub fn lagrangian(p: &RobotParams) -> SuiteResult {
    lagrangian_with(p, &dyn_terms)
}

/// Energy samples of an unforced run, one per accepted step end.
pub fn unforced_energy(x0: State, p: &RobotParams, duration: f64, cfg: &IntegratorConfig) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, energy(&x0, p).total)];
    let rhs = |_: f64, y: &[f64; 4]| crate::dynamics::state_derivative(&State::from(*y), 0.0, p).to_array();
    let res = integrator::integrate_until_event::<(), _, 4>(
        rhs,
        x0.to_array(),
        (0.0, duration),
        &[],
        cfg,
        &[],
        &mut |seg| {
            if let Ok(y) = seg.eval(seg.end()) {
                out.push((seg.end(), energy(&State::from(y), p).total));
            }
        },
    );
    if res.is_err() {
        out.push((f64::NAN, f64::NAN));
    }
    out
}

/// Zero damping conserves energy; damping never increases it.
pub fn conservation(p: &RobotParams) -> SuiteResult {
    let cfg = IntegratorConfig::default();
    let x0 = State::new(0.31, 0.0, 1.46, 0.0);
    let free = unforced_energy(x0, &p.undamped(), 10.0, &cfg);
    let e0 = free[0].1;
    let drift = free.iter().map(|(_, e)| (e - e0).abs()).fold(0.0, f64::max) / e0.abs();
    let damped = unforced_energy(State::new(0.31, 0.3, 1.46, 2.0), p, 10.0, &cfg);
    let rise = damped.windows(2).map(|w| w[1].1 - w[0].1).fold(0.0, f64::max);
    let drift_ok = drift < 1e-6;
    let rise_ok = rise <= 1e-9 && damped.iter().all(|(_, e)| e.is_finite());
    SuiteResult::new(
        "conservation",
        drift_ok && rise_ok,
        format!("undamped drift {drift:.2e} (limit 1e-6), damped max rise {rise:.2e} J (limit 1e-9)"),
    )
}

/// `dE/dt` equals the power of damping and input along the vector field.
pub fn power_balance(p: &RobotParams) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 1);
    let mut worst: f64 = 0.0;
    for s in random_states(100, SEED ^ 2) {
        let u: f64 = rng.random_range(-5.0..5.0);
        let f = crate::dynamics::state_derivative(&s, u, p).to_array();
        let x = s.to_array();
        let de = diff4(
            |h| energy(&State::from(std::array::from_fn(|i| x[i] + h * f[i])), p).total,
            1e-5,
        );
        let t = dyn_terms(&s, p);
        let power = s.dtheta * t.damping[0] + s.dgamma * (t.damping[1] + u);
        worst = worst.max((de - power).abs() / power.abs().max(1.0));
    }
    SuiteResult::new("power-balance", worst <= 1e-4, format!("max error {worst:.2e} (limit 1e-4)"))
}

/// Every jump keeps θ and `p₁`, and the closed-form energy change matches
/// direct evaluation.
pub fn jump_momentum(p: &RobotParams) -> SuiteResult {
    let mut worst_p: f64 = 0.0;
    let mut worst_e: f64 = 0.0;
    let mut theta_kept = true;
    for params in all_modes(p) {
        for (i, s) in random_states(100, SEED ^ 3).into_iter().enumerate() {
            let before = State::new(s.theta, if i % 2 == 0 { 0.0 } else { PI }, s.dtheta, 0.0);
            for kind in [JumpKind::StableEq, JumpKind::TurningAngle, JumpKind::UnstableEq] {
                let after = jump_map(&before, kind, &params);
                theta_kept &= after.theta.to_bits() == before.theta.to_bits();
                let p0 = generalized_momentum(&before, &params)[0];
                let p1 = generalized_momentum(&after, &params)[0];
                worst_p = worst_p.max((p1 - p0).abs() / p0.abs().max(f64::MIN_POSITIVE));
                let direct = energy(&after, &params).total - energy(&before, &params).total;
                let formula = jump_energy_delta(&before, after.gamma, &params).total();
                if direct != 0.0 || formula != 0.0 {
                    worst_e = worst_e.max((formula - direct).abs() / direct.abs().max(formula.abs()));
                }
            }
        }
    }
    SuiteResult::new(
        "jump-momentum",
        theta_kept && worst_p <= 1e-12 && worst_e <= 1e-12,
        format!("theta kept {theta_kept}, p1 error {worst_p:.2e}, energy delta error {worst_e:.2e} (limits 1e-12)"),
    )
}

/// The linearizing controller yields the target crank dynamics exactly.
pub fn linearization(p: &RobotParams) -> SuiteResult {
    let ctrl = ControllerConfig::default();
    let mut worst: f64 = 0.0;
    for params in all_modes(p) {
        for (i, s) in random_states(100, SEED ^ 4).into_iter().enumerate() {
            let gamma_d = if i % 2 == 0 { 0.0 } else { PI };
            worst = worst.max(linearization_residual(&s, gamma_d, &params, &ctrl).abs());
        }
    }
    SuiteResult::new("linearization", worst <= 1e-6, format!("max residual {worst:.2e} rad/s^2 (limit 1e-6)"))
}

/// Observed global order of the fixed-step Runge-Kutta scheme on a harmonic
/// oscillator.
pub fn observed_order() -> f64 {
    let rhs = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
    let err = |n: usize| {
        let h = 1.0 / n as f64;
        let mut y = [1.0, 0.0];
        for k in 0..n {
            y = fixed_step(rhs, k as f64 * h, &y, h);
        }
        ((y[0] - 1f64.cos()).powi(2) + (y[1] + 1f64.sin()).powi(2)).sqrt()
    };
    (err(10) / err(20)).log2()
}

pub fn integrator_order() -> SuiteResult {
    let order = observed_order();
    SuiteResult::new(
        "integrator-order",
        (4.5..=5.6).contains(&order),
        format!("observed order {order:.2} (expected 5)"),
    )
}

/// Runs every suite.
pub fn run_all(p: &RobotParams) -> Vec<SuiteResult> {
    vec![
        slider_derivatives(p),
        lagrangian(p),
        conservation(p),
        power_balance(p),
        jump_momentum(p),
        linearization(p),
        integrator_order(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_suites_pass() {
        for r in run_all(&RobotParams::nominal()) {
            assert!(r.passed, "{}", r.line());
        }
    }

    #[test]
    fn negative_rod_damping_fails_conservation() {
        let mut p = RobotParams::nominal();
        p.rod_damping = -p.rod_damping;
        assert!(!conservation(&p).passed);
    }

    #[test]
    fn flipped_gravity_torque_is_detected() {
        let flipped = |s: &State, p: &RobotParams| {
            let mut t = dyn_terms(s, p);
            t.potential = [-t.potential[0], -t.potential[1]];
            t
        };
        let r = lagrangian_with(&RobotParams::nominal(), &flipped);
        assert!(!r.passed, "{}", r.line());
    }

    #[test]
    fn random_states_are_reproducible() {
        assert_eq!(random_states(5, 1), random_states(5, 1));
        assert_ne!(random_states(5, 1), random_states(5, 2));
    }
}
