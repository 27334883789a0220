//! Constant-gain funnel controller.
//!
//! ```text
//! e_r = ξ_r(e, ė, …, e^{(r−1)})
//! u   = N(γ(‖(α/β) e_r‖²)) e_r
//! ```
//!
//! Intermediate stages are linear in the error stack; the only nonlinearity
//! is the final gain, which blows up as `‖e_r‖ → β/α`.

use super::{ControlOutput, Controller, GainFunctions};
use crate::errchain::{norm, xi_all, DerivativeStack, ErrorChainParams};
use crate::funnels::FunnelFunction;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewFunnelController {
    params: ErrorChainParams,
    alpha: f64,
    beta: f64,
    gains: GainFunctions,
}

impl NewFunnelController {
    pub fn new(params: ErrorChainParams, funnel: &FunnelFunction, gains: GainFunctions) -> Self {
        Self { params, alpha: funnel.alpha(), beta: funnel.beta(), gains }
    }

    pub fn params(&self) -> &ErrorChainParams {
        &self.params
    }

    /// `k ≥ α + 2`.
    pub fn k_ok(&self) -> bool {
        self.params.k() >= self.alpha + 2.0
    }
}

pub fn new_fc_control(c: &NewFunnelController, t: f64, e_stack: &DerivativeStack) -> Result<ControlOutput> {
    if !e_stack.is_finite() {
        return Err(Error::NonFinite { t, what: "error stack".into() });
    }
    let stages = xi_all(&c.params, e_stack)?;
    let e_r = stages[stages.len() - 1].clone();
    let scale = c.alpha / c.beta;
    let w = (scale * norm(&e_r)).powi(2);
    let gain = c.gains.gain(w).ok_or_else(|| Error::GainSingularity { t, w, e_r: e_r.clone() })?;
    let u = e_r.iter().map(|v| gain * v).collect();
    Ok(ControlOutput { u, e_r, w, gain, stages, stage_gains: Vec::new() })
}

impl Controller for NewFunnelController {
    fn order(&self) -> usize {
        self.params.order()
    }

    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn kind(&self) -> &'static str {
        "new_fc"
    }

    fn gains(&self) -> &GainFunctions {
        &self.gains
    }

    fn control(&self, t: f64, e_stack: &DerivativeStack) -> Result<ControlOutput> {
        new_fc_control(self, t, e_stack)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn benchmark_controller() -> NewFunnelController {
        let f = FunnelFunction::exponential(3.0, 1.0, 0.1, 1.0, 0.1).unwrap();
        NewFunnelController::new(ErrorChainParams::new(3.0, 3, 1).unwrap(), &f, GainFunctions::default())
    }

    #[test]
    fn benchmark_initial_control() {
        let c = benchmark_controller();
        let out = new_fc_control(&c, 0.0, &DerivativeStack::scalar(&[-0.3, 0.79, -2.0])).unwrap();
        assert_abs_diff_eq!(out.e_r[0], 0.04, epsilon = 1e-13);
        assert_abs_diff_eq!(out.w, 0.16, epsilon = 1e-12);
        assert_abs_diff_eq!(out.gain, -1.0 / 0.84, epsilon = 1e-10);
        assert_abs_diff_eq!(out.gain, -1.190476, epsilon = 1e-6);
        assert_abs_diff_eq!(out.u[0], -0.047619, epsilon = 1e-6);
        assert!(c.k_ok());
    }

    #[test]
    fn zero_stack_zero_input() {
        let out = new_fc_control(&benchmark_controller(), 0.0, &DerivativeStack::zeros(3, 1)).unwrap();
        assert_eq!(out.u, vec![0.0]);
        assert_eq!(out.gain, -1.0);
    }

    #[test]
    fn boundary_is_a_singularity() {
        // ξ₃ = 0.1 exactly: ‖(α/β) e_r‖ = 1
        let err = new_fc_control(&benchmark_controller(), 1.5, &DerivativeStack::scalar(&[0.0, 0.0, 0.1]))
            .unwrap_err();
        match err {
            Error::GainSingularity { t, w, e_r } => {
                assert_eq!(t, 1.5);
                assert!(w >= 1.0);
                assert_eq!(e_r, vec![0.1]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_stack_rejected() {
        let err = new_fc_control(&benchmark_controller(), 0.0, &DerivativeStack::scalar(&[f64::NAN, 0.0, 0.0]));
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn gain_grows_towards_boundary() {
        let c = benchmark_controller();
        let mut last = 0.0;
        for eps in [1e-1, 1e-2, 1e-4, 1e-6] {
            let out = new_fc_control(&c, 0.0, &DerivativeStack::scalar(&[0.0, 0.0, 0.1 * (1.0 - eps)])).unwrap();
            assert!(out.gain.abs() > last);
            last = out.gain.abs();
        }
        assert!(last > 1e5);
    }

    proptest! {
        #[test]
        fn neg_identity_is_dissipative(e in -0.3f64..0.3, ed in -1.0f64..1.0, edd in -3.0f64..3.0) {
            let c = benchmark_controller();
            let z = DerivativeStack::scalar(&[e, ed, edd]);
            if let Ok(out) = new_fc_control(&c, 0.0, &z) {
                let inner: f64 = out.u.iter().zip(&out.e_r).map(|(a, b)| a * b).sum();
                let sq: f64 = out.e_r.iter().map(|v| v * v).sum();
                prop_assert!(inner <= -sq + 1e-15);
            }
        }
    }
}
