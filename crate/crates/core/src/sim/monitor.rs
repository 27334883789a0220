//! Post-hoc checks of a trajectory log against the closed-loop guarantees.

use serde::Serialize;

use super::log::TrajectoryLog;
use crate::errchain::{check_domain_d, DerivativeStack, ErrorChainParams};
use crate::funnels::{funnel_floor, FunnelFunction};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleFlag {
    pub sample: usize,
    pub t: f64,
    pub value: f64,
    pub bound: f64,
}

/// A sample where the stack left the feasible set, with the 1-based stages
/// that were out of bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DomainExit {
    pub sample: usize,
    pub t: f64,
    pub stages: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EventReport {
    pub samples: usize,
    pub funnel_violations: Vec<SampleFlag>,
    /// Transitions into infeasibility (including an infeasible first sample).
    pub domain_d_exits: Vec<DomainExit>,
    pub gain_singularity: Vec<SampleFlag>,
    /// Samples where the final stage stayed bounded from a feasible start but
    /// an earlier stage left its bound.
    pub chain_bound_violations: Vec<DomainExit>,
    /// Events the integrator recorded while running (aborts, violations).
    pub run_events: usize,
    pub max_gain: f64,
    pub sup_u: f64,
    pub min_funnel_margin: f64,
}

impl EventReport {
    /// No funnel violation, no singular gain, no chain-bound violation and no
    /// aborted integration. Domain exits are reported but not counted.
    pub fn is_success(&self) -> bool {
        self.funnel_violations.is_empty()
            && self.gain_singularity.is_empty()
            && self.chain_bound_violations.is_empty()
            && self.run_events == 0
    }
}

pub fn monitor_trajectory(log: &TrajectoryLog, funnel: &FunnelFunction, chain: &ErrorChainParams) -> EventReport {
    let r = chain.order();
    let floor = funnel_floor(funnel);
    let mut rep = EventReport {
        samples: log.len(),
        run_events: log.events.len(),
        sup_u: log.sup_u(),
        min_funnel_margin: f64::INFINITY,
        ..Default::default()
    };

    let mut prev_feasible = true;
    // Some(true) while inside an interval that started feasible.
    let mut interval: Option<bool> = None;
    for i in 0..log.len() {
        let t = log.t[i];
        let (norm_e, psi) = (log.norm_e[i], log.psi[i]);
        rep.min_funnel_margin = rep.min_funnel_margin.min(psi - norm_e);
        if !(norm_e < psi) {
            rep.funnel_violations.push(SampleFlag { sample: i, t, value: norm_e, bound: psi });
        }
        if !(log.w[i] < 1.0) {
            rep.gain_singularity.push(SampleFlag { sample: i, t, value: log.w[i], bound: 1.0 });
        }
        rep.max_gain = rep.max_gain.max(log.gain[i].abs());

        let Ok(z) = DerivativeStack::new(r, log.m, log.e_stack[i].clone()) else {
            continue;
        };
        let Ok(feas) = check_domain_d(t, &z, funnel, chain) else {
            continue;
        };
        if !feas.feasible && prev_feasible {
            rep.domain_d_exits.push(DomainExit { sample: i, t, stages: feas.violated_stages() });
        }
        prev_feasible = feas.feasible;

        let last_ok = feas.stage_norms[r - 1] < floor;
        interval = match (interval, last_ok) {
            (_, false) => None,
            (None, true) => Some(feas.feasible),
            (Some(s), true) => Some(s),
        };
        if interval == Some(true) {
            let bad: Vec<usize> = feas.violated_stages().into_iter().filter(|s| *s < r).collect();
            if !bad.is_empty() {
                rep.chain_bound_violations.push(DomainExit { sample: i, t, stages: bad });
            }
        }
    }
    if log.is_empty() {
        rep.min_funnel_margin = 0.0;
    }
    rep
}
