//! Funnel controller with time-varying intermediate gains, kept for
//! comparison with the constant-gain design.
//!
//! ```text
//! e₁     = e
//! kᵢ     = 1 / (1 − ‖eᵢ‖² / ψᵢ²)
//! eᵢ₊₁   = ėᵢ + kᵢ eᵢ
//! u      = N(γ(‖e_r / ψ_r‖²)) e_r
//! ```
//!
//! Each `ėᵢ` needs time derivatives of the gain-weighted previous stage, so
//! every stage is carried as a [`Jet`] seeded from the error stack and the
//! analytic derivatives of the stage funnels.

use super::{jet_lift, ControlOutput, Controller, GainFunctions, Jet};
use crate::errchain::{norm, DerivativeStack, MAX_ORDER};
use crate::funnels::FunnelFunction;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LegacyFunnelController {
    stage_funnels: Vec<FunnelFunction>,
    m: usize,
    gains: GainFunctions,
}

impl LegacyFunnelController {
    pub fn new(stage_funnels: Vec<FunnelFunction>, m: usize, gains: GainFunctions) -> Result<Self> {
        if stage_funnels.is_empty() || stage_funnels.len() > MAX_ORDER {
            return Err(Error::usage(format!("need 1..={MAX_ORDER} stage funnels")));
        }
        if m == 0 {
            return Err(Error::usage("output dimension m must be at least 1"));
        }
        Ok(Self { stage_funnels, m, gains })
    }

    /// Stage funnels `ψᵢ = scale^{i−1} ψ` for `i = 1…r`.
    pub fn with_stage_scale(
        funnel: &FunnelFunction,
        r: usize,
        m: usize,
        scale: f64,
        gains: GainFunctions,
    ) -> Result<Self> {
        let stage_funnels = (0..r)
            .map(|i| funnel.scaled(scale.powi(i as i32)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(stage_funnels, m, gains)
    }

    pub fn stage_funnels(&self) -> &[FunnelFunction] {
        &self.stage_funnels
    }
}

pub fn legacy_fc_control(c: &LegacyFunnelController, t: f64, e_stack: &DerivativeStack) -> Result<ControlOutput> {
    let r = c.stage_funnels.len();
    if e_stack.order() != r || e_stack.dim() != c.m {
        return Err(Error::usage(format!(
            "stack has shape {}x{}, controller expects {}x{}",
            e_stack.order(),
            e_stack.dim(),
            r,
            c.m
        )));
    }
    if !e_stack.is_finite() {
        return Err(Error::NonFinite { t, what: "error stack".into() });
    }

    let mut stage = jet_lift(e_stack, r - 1)?;
    let mut stages = Vec::with_capacity(r);
    let mut stage_gains = Vec::with_capacity(r - 1);
    for (i, psi_i) in c.stage_funnels.iter().enumerate().take(r - 1) {
        let order = r - 1 - i;
        let values: Vec<f64> = stage.iter().map(Jet::value).collect();
        let bound = psi_i.value(t);
        let n = norm(&values);
        if !(n < bound) {
            return Err(Error::StageSingularity { t, stage: i + 1, norm: n, bound });
        }
        stages.push(values);

        let psi = Jet::new(psi_i.derivatives(t, order));
        let norm_sq = stage
            .iter()
            .fold(Jet::constant(0.0, order), |acc, e| &acc + &(e * e));
        let inv_psi_sq = (&psi * &psi).recip().expect("funnels are positive");
        let one = Jet::constant(1.0, order);
        let gain = (&one - &(&norm_sq * &inv_psi_sq))
            .recip()
            .expect("stage is strictly inside its funnel");
        stage_gains.push(gain.value());

        stage = stage
            .iter()
            .map(|e| &e.derivative().expect("order >= 1") + &(&gain * e))
            .collect();
    }

    let e_r: Vec<f64> = stage.iter().map(Jet::value).collect();
    let psi_r = c.stage_funnels[r - 1].value(t);
    let w = (norm(&e_r) / psi_r).powi(2);
    stages.push(e_r.clone());
    let gain = c.gains.gain(w).ok_or_else(|| Error::GainSingularity { t, w, e_r: e_r.clone() })?;
    let u = e_r.iter().map(|v| gain * v).collect();
    Ok(ControlOutput { u, e_r, w, gain, stages, stage_gains })
}

impl Controller for LegacyFunnelController {
    fn order(&self) -> usize {
        self.stage_funnels.len()
    }

    fn dim(&self) -> usize {
        self.m
    }

    fn kind(&self) -> &'static str {
        "legacy_fc"
    }

    fn gains(&self) -> &GainFunctions {
        &self.gains
    }

    fn control(&self, t: f64, e_stack: &DerivativeStack) -> Result<ControlOutput> {
        legacy_fc_control(self, t, e_stack)
    }
}
