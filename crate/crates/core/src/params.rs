//! Physical parameters of the robot and the crank-slide kinematics.
//!
//! The moving mass sits at distance `r_M(γ) = d + ρ cos γ + e(γ)` from the
//! pivot, where `e(γ) = ±(l − √(l² − ρ² sin² γ))` is the connecting-rod
//! offset. Its sign depends on which gripper holds the bar; it is small
//! enough (`l ≫ ρ`) that it is usually dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign choice for the connecting-rod offset `e(γ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliderOffset {
    /// `e(γ) = 0`.
    #[default]
    Discard,
    Plus,
    Minus,
}

impl SliderOffset {
    fn sign(self) -> f64 {
        match self {
            SliderOffset::Discard => 0.0,
            SliderOffset::Plus => 1.0,
            SliderOffset::Minus => -1.0,
        }
    }
}

/// Measured and identified constants of the single-rod robot, SI units.
///
/// Serialized with the conventional symbol names (`m_R`, `I_S`, `rho`, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// Rod mass (kg).
    #[serde(rename = "m_R")]
    pub rod_mass: f64,
    /// Rod inertia about its own centre of mass (kg·m²).
    #[serde(rename = "I_R")]
    pub rod_inertia: f64,
    /// Distance of the rod centre of mass from the pivot (m).
    #[serde(rename = "r_R")]
    pub rod_com: f64,
    /// Moving mass (kg).
    #[serde(rename = "m_M")]
    pub mass: f64,
    /// Combined crank, gearbox and motor inertia (kg·m²).
    #[serde(rename = "I_S")]
    pub crank_inertia: f64,
    /// Crank radius ρ (m).
    #[serde(rename = "rho")]
    pub crank_radius: f64,
    /// Connecting-rod length (m).
    #[serde(rename = "l")]
    pub conrod_len: f64,
    /// Mean slider position (m).
    #[serde(rename = "d")]
    pub slide_mean: f64,
    /// Viscous damping of the rod bearing.
    #[serde(rename = "b_R")]
    pub rod_damping: f64,
    /// Viscous damping of the crank bearing.
    #[serde(rename = "b_C")]
    pub crank_damping: f64,
    /// Viscous damping of the linear slide.
    #[serde(rename = "b_S")]
    pub slide_damping: f64,
    /// Peak motor torque (N·m).
    pub u_max: f64,
    /// Gravitational acceleration (m/s²).
    #[serde(rename = "g", default = "default_gravity")]
    pub gravity: f64,
    #[serde(rename = "e_mode", default)]
    pub offset_mode: SliderOffset,
}

fn default_gravity() -> f64 {
    9.81
}

impl Default for RobotParams {
    fn default() -> Self {
        Self::nominal()
    }
}

impl RobotParams {
    /// Parameters identified for the experimental robot.
    pub fn nominal() -> Self {
        RobotParams {
            rod_mass: 0.587,
            rod_inertia: 2.64e-2,
            rod_com: 0.318,
            mass: 0.886,
            crank_inertia: 4.91e-3,
            crank_radius: 0.02,
            conrod_len: 0.09,
            slide_mean: 0.28,
            rod_damping: 9.2e-3,
            crank_damping: 2.51e-2,
            slide_damping: 9.76e-3,
            u_max: 4.27,
            gravity: 9.81,
            offset_mode: SliderOffset::Discard,
        }
    }

    /// Same parameters with every damping coefficient set to zero.
    pub fn undamped(&self) -> Self {
        RobotParams {
            rod_damping: 0.0,
            crank_damping: 0.0,
            slide_damping: 0.0,
            ..self.clone()
        }
    }

    pub fn with_offset(&self, mode: SliderOffset) -> Self {
        RobotParams {
            offset_mode: mode,
            ..self.clone()
        }
    }

    /// Checks the physical invariants, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m_R", self.rod_mass),
            ("I_R", self.rod_inertia),
            ("r_R", self.rod_com),
            ("m_M", self.mass),
            ("I_S", self.crank_inertia),
            ("rho", self.crank_radius),
            ("l", self.conrod_len),
            ("d", self.slide_mean),
            ("u_max", self.u_max),
            ("g", self.gravity),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(key, format!("must be finite and > 0, got {value}")));
            }
        }
        // Damping may be zero (conservative studies) but never negative.
        let damping = [
            ("b_R", self.rod_damping),
            ("b_C", self.crank_damping),
            ("b_S", self.slide_damping),
        ];
        for (key, value) in damping {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::invalid(key, format!("must be finite and >= 0, got {value}")));
            }
        }
        if self.conrod_len <= self.crank_radius {
            return Err(Error::invalid(
                "l",
                format!("connecting rod ({}) must be longer than the crank radius ({})", self.conrod_len, self.crank_radius),
            ));
        }
        if self.slide_mean - self.crank_radius - self.offset_bound() <= 0.0 {
            return Err(Error::invalid("d", "slider would reach the pivot (d - rho must be > 0)"));
        }
        Ok(())
    }

    /// Upper bound on `|e(γ)|` over all γ.
    pub fn offset_bound(&self) -> f64 {
        let (l, rho) = (self.conrod_len, self.crank_radius);
        l - (l * l - rho * rho).sqrt()
    }

    /// Distance of the moving mass from the pivot, `r_M(γ)`.
    pub fn slider_position(&self, gamma: f64) -> f64 {
        let base = self.slide_mean + self.crank_radius * gamma.cos();
        match self.offset_mode {
            SliderOffset::Discard => base,
            mode => {
                let (l, rho) = (self.conrod_len, self.crank_radius);
                let s = gamma.sin();
                base + mode.sign() * (l - (l * l - rho * rho * s * s).sqrt())
            }
        }
    }

    /// First and second derivatives of `r_M` with respect to γ.
    pub fn slider_derivatives(&self, gamma: f64) -> (f64, f64) {
        let rho = self.crank_radius;
        let (s, c) = gamma.sin_cos();
        let mut dr = -rho * s;
        let mut ddr = -rho * c;
        if self.offset_mode != SliderOffset::Discard {
            let sign = self.offset_mode.sign();
            let l = self.conrod_len;
            let rho2 = rho * rho;
            let q = (l * l - rho2 * s * s).sqrt();
            dr += sign * rho2 * s * c / q;
            ddr += sign * (rho2 * (c * c - s * s) / q + rho2 * rho2 * s * s * c * c / (q * q * q));
        }
        (dr, ddr)
    }

    /// Rod-axis inertia `M₁₁(γ)`.
    pub fn m11(&self, gamma: f64) -> f64 {
        let r = self.slider_position(gamma);
        self.rod_inertia + self.mass * r * r + self.rod_mass * self.rod_com * self.rod_com
    }

    /// Crank-axis inertia `M₂₂(γ)`.
    pub fn m22(&self, gamma: f64) -> f64 {
        let (dr, _) = self.slider_derivatives(gamma);
        self.crank_inertia + self.mass * dr * dr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn slider_extremes_ignore_offset_mode() {
        for mode in [SliderOffset::Discard, SliderOffset::Plus, SliderOffset::Minus] {
            let p = RobotParams::nominal().with_offset(mode);
            assert!((p.slider_position(0.0) - 0.30).abs() < 1e-15);
            assert!((p.slider_position(PI) - 0.26).abs() < 1e-15);
        }
    }

    #[test]
    fn slider_quarter_turn_plus() {
        let p = RobotParams::nominal().with_offset(SliderOffset::Plus);
        // 0.28 + (0.09 - sqrt(0.0077))
        let expected = 0.28 + 0.09 - 0.0077f64.sqrt();
        assert!((p.slider_position(FRAC_PI_2) - expected).abs() < 1e-15);
        assert!((p.slider_position(FRAC_PI_2) - 0.282250).abs() < 5e-7);
    }

    #[test]
    fn slider_derivatives_discard() {
        let p = RobotParams::nominal();
        let (dr, _) = p.slider_derivatives(FRAC_PI_2);
        assert!((dr + 0.02).abs() < 1e-15);
        let (dr, ddr) = p.slider_derivatives(0.0);
        assert_eq!(dr, 0.0);
        assert!((ddr + 0.02).abs() < 1e-15);
    }

    fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn slider_derivatives_match_finite_differences() {
        for mode in [SliderOffset::Discard, SliderOffset::Plus, SliderOffset::Minus] {
            let p = RobotParams::nominal().with_offset(mode);
            for i in 0..=400 {
                let gamma = -PI + 2.0 * PI * i as f64 / 400.0 + 1e-3;
                let (dr, ddr) = p.slider_derivatives(gamma);
                let fd1 = central_difference(|g| p.slider_position(g), gamma, 1e-5);
                let fd2 = central_difference(|g| p.slider_derivatives(g).0, gamma, 1e-5);
                // Absolute floor scaled by ρ where the derivative vanishes.
                assert!((dr - fd1).abs() <= 1e-6 * dr.abs().max(1e-3 * p.crank_radius), "{mode:?} γ={gamma}");
                assert!((ddr - fd2).abs() <= 1e-6 * ddr.abs().max(1e-3 * p.crank_radius), "{mode:?} γ={gamma}");
            }
        }
    }

    #[test]
    fn minus_mode_first_derivative_at_one_radian() {
        let p = RobotParams::nominal().with_offset(SliderOffset::Minus);
        let (dr, _) = p.slider_derivatives(1.0);
        let fd = central_difference(|g| p.slider_position(g), 1.0, 1e-6);
        assert!((dr - fd).abs() / dr.abs() <= 1e-6);
    }

    #[test]
    fn discard_approximation_error_is_bounded() {
        let p = RobotParams::nominal();
        let m = p.with_offset(SliderOffset::Minus);
        let bound = p.crank_radius.powi(2) / (2.0 * (p.conrod_len - p.crank_radius));
        for i in 0..1000 {
            let g = 2.0 * PI * i as f64 / 1000.0;
            assert!((p.slider_position(g) - m.slider_position(g)).abs() <= bound);
        }
    }

    #[test]
    fn validation_names_the_field() {
        let mut p = RobotParams::nominal();
        p.mass = -1.0;
        match p.validate() {
            Err(Error::InvalidParameter { key, .. }) => assert_eq!(key, "m_M"),
            other => panic!("unexpected {other:?}"),
        }
        let mut p = RobotParams::nominal();
        p.conrod_len = 0.01;
        assert!(p.validate().is_err());
        let mut p = RobotParams::nominal();
        p.rod_damping = -1e-3;
        assert!(p.validate().is_err());
        assert!(RobotParams::nominal().validate().is_ok());
    }
}
