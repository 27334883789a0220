//! Mass-spring-damper mounted on a car, the standard funnel control
//! benchmark.
//!
//! A car of mass `m1` is driven by a force `u`; a mass `m2` is attached via
//! a spring (`c`) and damper (`delta`) and slides on a ramp inclined by
//! `theta`. With `q = (z, s)`:
//!
//! ```text
//! [m1 + m2       m2 cos θ] q̈ + [0          ] = [u]
//! [m2 cos θ      m2      ]     [c s + δ ṡ  ]   [0]
//! y = z + s cos θ
//! ```
//!
//! The output has relative degree 3 for `θ = 0` and 2 for `θ ∈ (0, π/2)`.
//! The plant is simulated in these original coordinates.

use std::f64::consts::FRAC_PI_2;

use super::Plant;
use crate::errchain::DerivativeStack;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassOnCarPlant {
    pub m1: f64,
    pub m2: f64,
    pub c: f64,
    pub delta: f64,
    pub theta: f64,
}

/// `(z, s, ż, ṡ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MassOnCarState {
    pub z: f64,
    pub s: f64,
    pub z_dot: f64,
    pub s_dot: f64,
}

impl MassOnCarState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.z, self.s, self.z_dot, self.s_dot]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self { z: x[0], s: x[1], z_dot: x[2], s_dot: x[3] }
    }
}

impl MassOnCarPlant {
    pub fn new(m1: f64, m2: f64, c: f64, delta: f64, theta: f64) -> Result<Self> {
        for (name, v) in [("m1", m1), ("m2", m2), ("c", c), ("delta", delta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..FRAC_PI_2).contains(&theta) {
            return Err(Error::config(format!("theta must lie in [0, pi/2), got {theta}")));
        }
        let plant = Self { m1, m2, c, delta, theta };
        if !(plant.mass_determinant() > 0.0) {
            return Err(Error::config("mass matrix is singular"));
        }
        Ok(plant)
    }

    /// The benchmark parameters `m1 = 4, m2 = 1, c = 2, δ = 1, θ = 0`.
    pub fn benchmark() -> Self {
        Self { m1: 4.0, m2: 1.0, c: 2.0, delta: 1.0, theta: 0.0 }
    }

    /// `det M(θ) = m2 (m1 + m2 sin²θ)`.
    pub fn mass_determinant(&self) -> f64 {
        self.m2 * (self.m1 + self.m2 * self.theta.sin().powi(2))
    }

    pub fn relative_degree(&self) -> usize {
        if self.theta == 0.0 {
            3
        } else {
            2
        }
    }

    /// `(z̈, s̈) = M(θ)⁻¹ (u, −(c s + δ ṡ))`.
    pub fn accelerations(&self, x: &MassOnCarState, u: f64) -> (f64, f64) {
        let cos = self.theta.cos();
        let det = self.mass_determinant();
        let spring = -(self.c * x.s + self.delta * x.s_dot);
        let z_dd = (self.m2 * u - self.m2 * cos * spring) / det;
        let s_dd = (-self.m2 * cos * u + (self.m1 + self.m2) * spring) / det;
        (z_dd, s_dd)
    }

    /// Kinetic plus spring energy `½ q̇ᵀ M q̇ + ½ c s²`.
    pub fn energy(&self, x: &MassOnCarState) -> f64 {
        let cos = self.theta.cos();
        let kinetic = 0.5
            * ((self.m1 + self.m2) * x.z_dot * x.z_dot
                + 2.0 * self.m2 * cos * x.z_dot * x.s_dot
                + self.m2 * x.s_dot * x.s_dot);
        kinetic + 0.5 * self.c * x.s * x.s
    }
}

pub fn mass_on_car_rhs(p: &MassOnCarPlant, _t: f64, x: &MassOnCarState, u: f64) -> [f64; 4] {
    let (z_dd, s_dd) = p.accelerations(x, u);
    [x.z_dot, x.s_dot, z_dd, s_dd]
}

/// `(y, ẏ, ÿ)` for `θ = 0`, `(y, ẏ)` otherwise.
///
/// For `θ = 0` the second row of the dynamics gives `m2 ÿ = −(c s + δ ṡ)`,
/// which does not involve the input.
pub fn mass_on_car_output_stack(p: &MassOnCarPlant, x: &MassOnCarState) -> DerivativeStack {
    let cos = p.theta.cos();
    let y = x.z + x.s * cos;
    let y_dot = x.z_dot + x.s_dot * cos;
    if p.relative_degree() == 3 {
        let y_dd = -(p.c * x.s + p.delta * x.s_dot) / p.m2;
        DerivativeStack::scalar(&[y, y_dot, y_dd])
    } else {
        DerivativeStack::scalar(&[y, y_dot])
    }
}

impl Plant for MassOnCarPlant {
    fn order(&self) -> usize {
        self.relative_degree()
    }

    fn dim(&self) -> usize {
        1
    }

    fn state_len(&self) -> usize {
        4
    }

    fn state_labels(&self) -> Vec<String> {
        ["z", "s", "zdot", "sdot"].iter().map(|s| s.to_string()).collect()
    }

    fn rhs(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        let d = mass_on_car_rhs(self, t, &MassOnCarState::from_slice(x), u[0]);
        dx.copy_from_slice(&d);
        Ok(())
    }

    fn output_stack(&self, _t: f64, x: &[f64]) -> DerivativeStack {
        mass_on_car_output_stack(self, &MassOnCarState::from_slice(x))
    }
}
