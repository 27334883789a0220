//! Plant + controller + reference integrated as one closed loop.

use serde::Serialize;

use super::integrator::{dopri5_step, rk4_step, IntegratorConfig, Method};
use super::log::{Event, EventKind, TrajectoryLog};
use super::reference::{ref_stack, ReferenceSignal};
use crate::controllers::{ControlOutput, Controller};
use crate::errchain::{norm, DerivativeStack};
use crate::funnels::FunnelFunction;
use crate::plants::Plant;
use crate::{Error, Result};

/// States beyond this magnitude are treated as a finite escape.
const ESCAPE_BOUND: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    FunnelViolation,
    Singularity,
    Aborted,
}

impl RunStatus {
    /// Process exit code for this outcome.
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::FunnelViolation => 2,
            RunStatus::Singularity | RunStatus::Aborted => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub log: TrajectoryLog,
    pub status: RunStatus,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub t_final: f64,
}

struct Loop<'a> {
    controller: &'a dyn Controller,
    reference: &'a ReferenceSignal,
    funnel: &'a FunnelFunction,
    r: usize,
    m: usize,
}

struct Sample {
    stack: DerivativeStack,
    reference: DerivativeStack,
    error: DerivativeStack,
    control: ControlOutput,
}

impl Loop<'_> {
    fn evaluate(&self, plant: &dyn Plant, t: f64, x: &[f64]) -> Result<Sample> {
        let stack = plant.output_stack(t, x);
        let (reference, _) = ref_stack(self.reference, t, self.r, self.m)?;
        let error = stack.sub(&reference)?;
        let control = self.controller.control(t, &error)?;
        Ok(Sample { stack, reference, error, control })
    }

    fn control(&self, plant: &dyn Plant, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(plant, t, x)?.control.u)
    }

    /// Logs the sample at `(t, x)`; returns the status that ends the run, if any.
    fn record(&self, plant: &dyn Plant, log: &mut TrajectoryLog, t: f64, x: &[f64]) -> Option<RunStatus> {
        let s = match self.evaluate(plant, t, x) {
            Ok(s) => s,
            Err(e) => {
                let status = abort(log, t, e);
                // an error already outside the funnel is reported as such
                let outside = ref_stack(self.reference, t, self.r, self.m)
                    .and_then(|(reference, _)| plant.output_stack(t, x).sub(&reference))
                    .map(|err| norm(err.block(0)))
                    .ok()
                    .filter(|n| !(*n < self.funnel.value(t)));
                return Some(match outside {
                    Some(n) => {
                        log.events.push(Event {
                            t,
                            kind: EventKind::FunnelViolation,
                            detail: format!("|e| = {n} >= psi = {}", self.funnel.value(t)),
                        });
                        RunStatus::FunnelViolation
                    }
                    None => status,
                });
            }
        };
        let e = s.error.block(0).to_vec();
        let norm_e = norm(&e);
        let psi = self.funnel.value(t);
        log.t.push(t);
        log.state.push(x.to_vec());
        log.y.push(s.stack.block(0).to_vec());
        log.y_ref.push(s.reference.block(0).to_vec());
        log.e.push(e);
        log.e_stack.push(s.error.into_vec());
        log.psi.push(psi);
        log.norm_e.push(norm_e);
        log.xi.push(s.control.stages.concat());
        log.w.push(s.control.w);
        log.gain.push(s.control.gain);
        log.u.push(s.control.u);
        log.stage_gains.push(s.control.stage_gains);
        if !(norm_e < psi) {
            log.events.push(Event {
                t,
                kind: EventKind::FunnelViolation,
                detail: format!("|e| = {norm_e} >= psi = {psi}"),
            });
            return Some(RunStatus::FunnelViolation);
        }
        None
    }
}

fn abort(log: &mut TrajectoryLog, t: f64, err: Error) -> RunStatus {
    let (kind, status, t) = match &err {
        Error::GainSingularity { t, .. } => (EventKind::GainSingularity, RunStatus::Singularity, *t),
        Error::StageSingularity { t, .. } => (EventKind::StageSingularity, RunStatus::Singularity, *t),
        Error::NonFinite { t, .. } => (EventKind::NonFinite, RunStatus::Aborted, *t),
        _ => (EventKind::OperatorError, RunStatus::Aborted, t),
    };
    log.events.push(Event { t, kind, detail: err.to_string() });
    status
}

fn escaped(x: &[f64]) -> bool {
    x.iter().any(|v| !(v.abs() < ESCAPE_BOUND))
}

/// Integrates the closed loop from `x0` over the configured horizon.
///
/// The run starts at `max(cfg.t0, plant.initial_time())`. It stops early on
/// a funnel violation at a logged sample, a gain or stage singularity, a
/// non-finite value or a finite escape; each of these is recorded as an
/// event and reflected in the returned status. `Err` is only returned for
/// inconsistent inputs.
pub fn integrate_closed_loop(
    plant: &mut dyn Plant,
    x0: &[f64],
    controller: &dyn Controller,
    reference: &ReferenceSignal,
    funnel: &FunnelFunction,
    cfg: &IntegratorConfig,
) -> Result<SimOutcome> {
    cfg.validate()?;
    let (r, m) = (plant.order(), plant.dim());
    if controller.order() != r || controller.dim() != m {
        return Err(Error::config(format!(
            "controller expects r={}, m={} but plant has r={r}, m={m}",
            controller.order(),
            controller.dim()
        )));
    }
    if x0.len() != plant.state_len() {
        return Err(Error::config(format!(
            "initial state has {} entries, plant needs {}",
            x0.len(),
            plant.state_len()
        )));
    }
    let t_start = cfg.t0.max(plant.initial_time());
    if !(cfg.t_end > t_start) {
        return Err(Error::config(format!("horizon ends at {} before the plant can start at {t_start}", cfg.t_end)));
    }

    let lp = Loop { controller, reference, funnel, r, m };
    let mut log = TrajectoryLog::new(controller.kind(), r, m, plant.state_labels());
    let outcome = |log, status, accepted, rejected, t| SimOutcome {
        log,
        status,
        accepted_steps: accepted,
        rejected_steps: rejected,
        t_final: t,
    };

    let mut t = t_start;
    let mut x = x0.to_vec();
    if let Some(status) = lp.record(plant, &mut log, t, &x) {
        return Ok(outcome(log, status, 0, 0, t));
    }

    match cfg.method {
        Method::Rk4 { dt } => {
            let n_steps = ((cfg.t_end - t_start) / dt - 1e-9).ceil().max(1.0) as usize;
            for step in 1..=n_steps {
                let t_next = if step == n_steps { cfg.t_end } else { t_start + step as f64 * dt };
                let h = t_next - t;
                let stepped = {
                    let p: &dyn Plant = plant;
                    let held = if cfg.hold { Some(lp.control(p, t, &x)) } else { None };
                    match held {
                        Some(Err(e)) => Err(e),
                        Some(Ok(u)) => {
                            let mut rhs = |ts: f64, xs: &[f64], dx: &mut [f64]| p.rhs(ts, xs, &u, dx);
                            rk4_step(&mut rhs, t, &x, h)
                        }
                        None => {
                            let mut rhs = |ts: f64, xs: &[f64], dx: &mut [f64]| {
                                let u = lp.control(p, ts, xs)?;
                                p.rhs(ts, xs, &u, dx)
                            };
                            rk4_step(&mut rhs, t, &x, h)
                        }
                    }
                };
                let x_next = match stepped {
                    Ok(v) => v,
                    Err(e) => {
                        let status = abort(&mut log, t, e);
                        return Ok(outcome(log, status, step - 1, 0, t));
                    }
                };
                if escaped(&x_next) {
                    log.events.push(Event {
                        t: t_next,
                        kind: EventKind::FiniteEscape,
                        detail: format!("state magnitude exceeded {ESCAPE_BOUND:e}"),
                    });
                    return Ok(outcome(log, RunStatus::Aborted, step - 1, 0, t));
                }
                if let Err(e) = plant.commit(t_next, &x_next) {
                    let status = abort(&mut log, t_next, e);
                    return Ok(outcome(log, status, step, 0, t_next));
                }
                t = t_next;
                x = x_next;
                if step % cfg.log_stride == 0 || step == n_steps {
                    if let Some(status) = lp.record(plant, &mut log, t, &x) {
                        return Ok(outcome(log, status, step, 0, t));
                    }
                }
            }
            Ok(outcome(log, RunStatus::Completed, n_steps, 0, t))
        }
        Method::Rk45 { rtol, atol, dt_min, dt_init, dt_max } => {
            let mut h = dt_init;
            let (mut accepted, mut rejected) = (0usize, 0usize);
            while t < cfg.t_end {
                let last = cfg.t_end - t <= h.min(dt_max);
                let h_try = if last { cfg.t_end - t } else { h.min(dt_max) };
                let attempt = {
                    let p: &dyn Plant = plant;
                    let held = if cfg.hold { Some(lp.control(p, t, &x)) } else { None };
                    match held {
                        Some(Err(e)) => Err(e),
                        Some(Ok(u)) => {
                            let mut rhs = |ts: f64, xs: &[f64], dx: &mut [f64]| p.rhs(ts, xs, &u, dx);
                            dopri5_step(&mut rhs, t, &x, h_try, rtol, atol)
                        }
                        None => {
                            let mut rhs = |ts: f64, xs: &[f64], dx: &mut [f64]| {
                                let u = lp.control(p, ts, xs)?;
                                p.rhs(ts, xs, &u, dx)
                            };
                            dopri5_step(&mut rhs, t, &x, h_try, rtol, atol)
                        }
                    }
                };
                match attempt {
                    Err(e) if e.is_singularity() || matches!(e, Error::NonFinite { .. }) => {
                        // a stage left the admissible set: retry with half the step
                        rejected += 1;
                        h = 0.5 * h_try;
                        if h < dt_min {
                            let status = abort(&mut log, t, e);
                            return Ok(outcome(log, status, accepted, rejected, t));
                        }
                    }
                    Err(e) => {
                        let status = abort(&mut log, t, e);
                        return Ok(outcome(log, status, accepted, rejected, t));
                    }
                    Ok((x_next, err)) if err <= 1.0 => {
                        let t_next = if last { cfg.t_end } else { t + h_try };
                        if escaped(&x_next) {
                            log.events.push(Event {
                                t: t_next,
                                kind: EventKind::FiniteEscape,
                                detail: format!("state magnitude exceeded {ESCAPE_BOUND:e}"),
                            });
                            return Ok(outcome(log, RunStatus::Aborted, accepted, rejected, t));
                        }
                        if let Err(e) = plant.commit(t_next, &x_next) {
                            let status = abort(&mut log, t_next, e);
                            return Ok(outcome(log, status, accepted, rejected, t_next));
                        }
                        t = t_next;
                        x = x_next;
                        accepted += 1;
                        if accepted % cfg.log_stride == 0 || t >= cfg.t_end {
                            if let Some(status) = lp.record(plant, &mut log, t, &x) {
                                return Ok(outcome(log, status, accepted, rejected, t));
                            }
                        }
                        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                        h = (h_try * factor).min(dt_max);
                    }
                    Ok((_, err)) => {
                        rejected += 1;
                        h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                        if h < dt_min {
                            log.events.push(Event {
                                t,
                                kind: EventKind::NonFinite,
                                detail: format!("step size {h:e} fell below dt_min = {dt_min:e}"),
                            });
                            return Ok(outcome(log, RunStatus::Aborted, accepted, rejected, t));
                        }
                    }
                }
            }
            Ok(outcome(log, RunStatus::Completed, accepted, rejected, t))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{GainFunctions, NewFunnelController};
    use crate::errchain::ErrorChainParams;
    use crate::plants::{Disturbance, FdePlant};

    fn integrator_plant() -> FdePlant {
        let f = |_d: f64, _t: &[f64], u: &[f64], out: &mut [f64]| out[0] = u[0];
        FdePlant::new(1, 1, Box::new(f), FdePlant::null_operator(1, 1), Disturbance::Zero).unwrap()
    }

    #[test]
    fn equilibrium_stays_put() {
        let mut plant = integrator_plant();
        let x0 = plant.initial_state(&[0.0]).unwrap();
        let funnel = FunnelFunction::exponential(3.0, 1.0, 0.1, 1.0, 0.1).unwrap();
        let c = NewFunnelController::new(ErrorChainParams::new(3.0, 1, 1).unwrap(), &funnel, GainFunctions::default());
        let cfg = IntegratorConfig::rk4(1e-2, 0.0, 2.0, 5);
        let out = integrate_closed_loop(&mut plant, &x0, &c, &ReferenceSignal::Zero, &funnel, &cfg).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert_eq!(out.log.len(), 41);
        assert!(out.log.e.iter().all(|e| e[0] == 0.0));
        assert!(out.log.u.iter().all(|u| u[0] == 0.0));
        assert_eq!(*out.log.t.last().unwrap(), 2.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut plant = integrator_plant();
        let x0 = plant.initial_state(&[0.0]).unwrap();
        let funnel = FunnelFunction::exponential(3.0, 1.0, 0.1, 1.0, 0.1).unwrap();
        let c = NewFunnelController::new(ErrorChainParams::new(3.0, 2, 1).unwrap(), &funnel, GainFunctions::default());
        let cfg = IntegratorConfig::rk4(1e-2, 0.0, 1.0, 1);
        assert!(integrate_closed_loop(&mut plant, &x0, &c, &ReferenceSignal::Zero, &funnel, &cfg).is_err());
    }

    #[test]
    fn funnel_violation_stops_the_run() {
        // u enters with the wrong sign: the error is pushed out of the funnel
        let f = |_d: f64, _t: &[f64], u: &[f64], out: &mut [f64]| out[0] = -u[0];
        let mut plant = FdePlant::new(1, 1, Box::new(f), FdePlant::null_operator(1, 1), Disturbance::Zero).unwrap();
        let x0 = plant.initial_state(&[0.05]).unwrap();
        let funnel = FunnelFunction::constant(0.5, 1.0, 0.1).unwrap();
        let c = NewFunnelController::new(ErrorChainParams::new(3.0, 1, 1).unwrap(), &funnel, GainFunctions::default());
        let cfg = IntegratorConfig::rk4(1e-3, 0.0, 5.0, 1);
        let out = integrate_closed_loop(&mut plant, &x0, &c, &ReferenceSignal::Zero, &funnel, &cfg).unwrap();
        assert_ne!(out.status, RunStatus::Completed);
        assert!(!out.log.events.is_empty());
        assert!(out.t_final < 5.0);
    }
}
