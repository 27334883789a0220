//! Simulable systems of the form `y^{(r)} = f(d, T(y, …, y^{(r−1)}), u)`.
//!
//! The controller only ever sees [`Plant::output_stack`]; how a plant
//! produces its output derivatives internally stays hidden from it.

mod fde;
mod mass_on_car;
mod operators;

pub use fde::{fde_rhs, AffineDynamics, FdePlant, OutputDynamics};
pub use mass_on_car::{mass_on_car_output_stack, mass_on_car_rhs, MassOnCarPlant, MassOnCarState};
pub use operators::{operator_apply, CausalOperator, History};

use crate::errchain::DerivativeStack;
use crate::Result;

/// A closed-loop simulable plant.
///
/// The integrator owns the continuous state vector; anything discrete
/// (hysteresis memory, delay buffers) lives inside the plant and is only
/// advanced by [`Plant::commit`] once a step has been accepted.
pub trait Plant: Send {
    /// Order r of the output stack the controller receives.
    fn order(&self) -> usize;
    /// Output (and input) dimension m.
    fn dim(&self) -> usize;
    fn state_len(&self) -> usize;
    fn state_labels(&self) -> Vec<String>;

    /// Earliest time the plant can be started from. Delayed plants need a
    /// full history window before it.
    fn initial_time(&self) -> f64 {
        0.0
    }

    fn rhs(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()>;

    fn output_stack(&self, t: f64, x: &[f64]) -> DerivativeStack;

    /// Accepts the state reached at time `t`.
    fn commit(&mut self, _t: f64, _x: &[f64]) -> Result<()> {
        Ok(())
    }
}

/// Bounded exogenous disturbance `d(t) ∈ ℝ`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Disturbance {
    #[default]
    Zero,
    Constant(f64),
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
}

impl Disturbance {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Disturbance::Zero => 0.0,
            Disturbance::Constant(level) => level,
            Disturbance::Sinusoid { amplitude, frequency, phase } => {
                amplitude * (frequency * t + phase).sin()
            }
        }
    }

    /// `‖d‖∞`.
    pub fn bound(&self) -> f64 {
        match *self {
            Disturbance::Zero => 0.0,
            Disturbance::Constant(level) => level.abs(),
            Disturbance::Sinusoid { amplitude, .. } => amplitude.abs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disturbances_are_bounded() {
        let ds = [
            Disturbance::Zero,
            Disturbance::Constant(-0.4),
            Disturbance::Sinusoid { amplitude: 2.0, frequency: 3.0, phase: 0.1 },
        ];
        for d in ds {
            for i in 0..1000 {
                let t = i as f64 * 0.037;
                assert!(d.eval(t).abs() <= d.bound() + 1e-15);
            }
        }
        let d = Disturbance::Sinusoid { amplitude: 1.0, frequency: 1.0, phase: 0.0 };
        assert!((d.eval(std::f64::consts::FRAC_PI_2) - 1.0).abs() < 1e-15);
    }
}
