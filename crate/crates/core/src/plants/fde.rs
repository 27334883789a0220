//! Generic functional differential equation plant
//! `y^{(r)} = f(d(t), T(y, …, y^{(r−1)})(t), u(t))`.
//!
//! The continuous state is the output stack followed by the operator's
//! continuous states (if any).

use nalgebra::{DMatrix, DVector};

use super::{CausalOperator, Disturbance, Plant};
use crate::errchain::DerivativeStack;
use crate::{Error, Result};

/// The map `f(d, T, u) ∈ ℝ^m`.
pub trait OutputDynamics: Send + Sync {
    fn eval(&self, d: f64, op_out: &[f64], u: &[f64], out: &mut [f64]);
}

impl<F> OutputDynamics for F
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, d: f64, op_out: &[f64], u: &[f64], out: &mut [f64]) {
        self(d, op_out, u, out)
    }
}

/// `f(d, T, u) = G_T T + G_u u + g_d d`.
///
/// The high-gain property holds when `G_u` is sign definite; that is an
/// assumption on the caller's data and is not checked.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineDynamics {
    pub op_gain: DMatrix<f64>,
    pub input_gain: DMatrix<f64>,
    pub dist_gain: DVector<f64>,
}

impl OutputDynamics for AffineDynamics {
    fn eval(&self, d: f64, op_out: &[f64], u: &[f64], out: &mut [f64]) {
        let t = DVector::from_column_slice(op_out);
        let u = DVector::from_column_slice(u);
        let v = &self.op_gain * t + &self.input_gain * u + &self.dist_gain * d;
        out.copy_from_slice(v.as_slice());
    }
}

pub struct FdePlant {
    r: usize,
    m: usize,
    f: Box<dyn OutputDynamics>,
    op: CausalOperator,
    dist: Disturbance,
}

impl std::fmt::Debug for FdePlant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FdePlant")
            .field("r", &self.r)
            .field("m", &self.m)
            .field("op", &self.op)
            .field("dist", &self.dist)
            .finish_non_exhaustive()
    }
}

impl FdePlant {
    pub fn new(
        r: usize,
        m: usize,
        f: Box<dyn OutputDynamics>,
        op: CausalOperator,
        dist: Disturbance,
    ) -> Result<Self> {
        if r == 0 || m == 0 {
            return Err(Error::config("fde plant needs r >= 1 and m >= 1"));
        }
        let expected = match op {
            CausalOperator::Play { .. } | CausalOperator::Relay { .. } => m,
            _ => r * m,
        };
        if op.input_dim() != expected {
            return Err(Error::config(format!(
                "operator reads {} values, plant provides {expected}",
                op.input_dim()
            )));
        }
        Ok(Self { r, m, f, op, dist })
    }

    /// Operator with no effect: `T ≡ 0` realised as stable scalar dynamics.
    pub fn null_operator(r: usize, m: usize) -> CausalOperator {
        CausalOperator::linear(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::zeros(1, r * m),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, r * m),
            DVector::zeros(1),
        )
        .expect("scalar -1 is Hurwitz")
    }

    pub fn operator(&self) -> &CausalOperator {
        &self.op
    }

    /// Augmented initial state from the output stack `y0`.
    pub fn initial_state(&self, y0: &[f64]) -> Result<Vec<f64>> {
        if y0.len() != self.r * self.m {
            return Err(Error::config(format!(
                "initial stack has {} entries, expected {}",
                y0.len(),
                self.r * self.m
            )));
        }
        let mut x = y0.to_vec();
        x.extend(self.op.initial_continuous());
        Ok(x)
    }
}

/// Chain-of-integrators derivative of the augmented state.
pub fn fde_rhs(plant: &FdePlant, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let mut dx = vec![0.0; x.len()];
    plant.rhs(t, x, u, &mut dx)?;
    Ok(dx)
}

impl Plant for FdePlant {
    fn order(&self) -> usize {
        self.r
    }

    fn dim(&self) -> usize {
        self.m
    }

    fn state_len(&self) -> usize {
        self.r * self.m + self.op.continuous_states()
    }

    fn state_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.state_len());
        for j in 0..self.r {
            for c in 0..self.m {
                labels.push(format!("y{j}_{c}"));
            }
        }
        for i in 0..self.op.continuous_states() {
            labels.push(format!("eta{i}"));
        }
        labels
    }

    fn initial_time(&self) -> f64 {
        match &self.op {
            CausalOperator::Delay { buffer, .. } => buffer.last_time().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    fn rhs(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        let rm = self.r * self.m;
        let (stack, eta) = x.split_at(rm);
        let op_out = self.op.output(t, stack, eta)?;
        let last = (self.r - 1) * self.m;
        dx[..last].copy_from_slice(&stack[self.m..]);
        self.f.eval(self.dist.eval(t), &op_out, u, &mut dx[last..rm]);
        if let Some(bad) = dx[last..rm].iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t, what: format!("f returned {bad}") });
        }
        self.op.eta_rhs(stack, eta, &mut dx[rm..]);
        Ok(())
    }

    fn output_stack(&self, _t: f64, x: &[f64]) -> DerivativeStack {
        DerivativeStack::new(self.r, self.m, x[..self.r * self.m].to_vec())
            .expect("state holds a full stack")
    }

    fn commit(&mut self, t: f64, x: &[f64]) -> Result<()> {
        let rm = self.r * self.m;
        self.op.commit(t, &x[..rm], &x[rm..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::History;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pure_integrator() {
        let f = |_d: f64, _t: &[f64], u: &[f64], out: &mut [f64]| out[0] = u[0];
        let p = FdePlant::new(1, 1, Box::new(f), FdePlant::null_operator(1, 1), Disturbance::Zero).unwrap();
        let x = p.initial_state(&[0.3]).unwrap();
        let dx = fde_rhs(&p, 0.0, &x, &[2.5]).unwrap();
        assert_eq!(dx[0], 2.5);
        assert_eq!(p.state_len(), 2);
    }

    #[test]
    fn delay_oscillator() {
        let tau = 0.5;
        let hist = History::from_fn(0.0, tau, 6, |t| vec![t, 1.0]).unwrap();
        let op = CausalOperator::delay(tau, hist).unwrap();
        let f = |_d: f64, t_out: &[f64], u: &[f64], out: &mut [f64]| out[0] = -t_out[0] + u[0];
        let p = FdePlant::new(2, 1, Box::new(f), op, Disturbance::Zero).unwrap();
        assert_eq!(p.initial_time(), tau);
        let x = p.initial_state(&[0.5, 1.0]).unwrap();
        // at t = tau the delayed output is y(0) = 0
        let dx = fde_rhs(&p, tau, &x, &[0.25]).unwrap();
        assert_eq!(dx[0], 1.0);
        assert_abs_diff_eq!(dx[1], 0.25, epsilon = 1e-15);
        let dx = fde_rhs(&p, 0.8, &x, &[0.0]).unwrap();
        assert_abs_diff_eq!(dx[1], -0.3, epsilon = 1e-12);
    }

    #[test]
    fn disturbance_passthrough() {
        let f = |d: f64, _t: &[f64], u: &[f64], out: &mut [f64]| out[0] = d + u[0];
        let p = FdePlant::new(
            2,
            1,
            Box::new(f),
            FdePlant::null_operator(2, 1),
            Disturbance::Sinusoid { amplitude: 1.0, frequency: 1.0, phase: 0.0 },
        )
        .unwrap();
        let x = p.initial_state(&[0.0, 0.0]).unwrap();
        let dx = fde_rhs(&p, std::f64::consts::FRAC_PI_2, &x, &[0.0]).unwrap();
        assert_abs_diff_eq!(dx[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_dynamics_abort() {
        let f = |_d: f64, _t: &[f64], _u: &[f64], out: &mut [f64]| out[0] = f64::NAN;
        let p = FdePlant::new(1, 1, Box::new(f), FdePlant::null_operator(1, 1), Disturbance::Zero).unwrap();
        let x = p.initial_state(&[0.0]).unwrap();
        assert!(matches!(fde_rhs(&p, 0.0, &x, &[0.0]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn affine_dynamics_and_internal_state() {
        // η̇ = −2η + y, T = η, ÿ = T + u
        let op = CausalOperator::linear(
            DMatrix::from_element(1, 1, -2.0),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 2),
            DVector::from_element(1, 0.5),
        )
        .unwrap();
        let f = AffineDynamics {
            op_gain: DMatrix::from_element(1, 1, 1.0),
            input_gain: DMatrix::from_element(1, 1, 1.0),
            dist_gain: DVector::zeros(1),
        };
        let p = FdePlant::new(2, 1, Box::new(f), op, Disturbance::Zero).unwrap();
        let x = p.initial_state(&[1.0, 0.0]).unwrap();
        assert_eq!(x, vec![1.0, 0.0, 0.5]);
        let dx = fde_rhs(&p, 0.0, &x, &[1.0]).unwrap();
        assert_eq!(dx, vec![0.0, 1.5, 0.0]);
        assert_eq!(p.state_labels(), vec!["y0_0", "y1_0", "eta0"]);
    }

    #[test]
    fn operator_dimension_mismatch() {
        let f = |_d: f64, _t: &[f64], u: &[f64], out: &mut [f64]| out[0] = u[0];
        let op = CausalOperator::play(0.1, vec![0.0, 0.0]).unwrap();
        assert!(FdePlant::new(2, 1, Box::new(f), op, Disturbance::Zero).is_err());
    }
}
