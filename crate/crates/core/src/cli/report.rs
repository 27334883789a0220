//! Single-run driver and the JSON run report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{ControllerSpec, ScenarioConfig};
use crate::errchain::{check_domain_d, mu_table, ErrorChainParams, FeasibilityReport, MuTable};
use crate::sim::{
    integrate_closed_loop, monitor_trajectory, ref_stack, Event, EventReport, RunStatus, SimOutcome,
};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub k: f64,
    pub alpha: f64,
    /// `k ≥ α + 2`.
    pub k_ok: bool,
    pub n_surjective: bool,
    pub init_feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub samples: usize,
    pub t_final: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub sup_norm_e: f64,
    pub rms_error: f64,
    pub max_w: f64,
    pub max_gain: f64,
    pub sup_u: f64,
    pub min_funnel_margin: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Artifacts {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot_script: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub controller: String,
    pub status: RunStatus,
    pub exit_code: i32,
    pub feasibility: FeasibilityReport,
    pub hypothesis_check: HypothesisCheck,
    pub warnings: Vec<String>,
    pub diagnostics: MuTable,
    pub events: EventReport,
    pub run_events: Vec<Event>,
    pub summary: RunSummary,
    pub artifacts: Artifacts,
}

/// Feasibility of the configured initial state at the start time, computed
/// from the plant's output stack without integrating.
pub fn initial_feasibility(cfg: &ScenarioConfig) -> Result<(FeasibilityReport, ErrorChainParams)> {
    let plant = cfg.build_plant()?;
    let x0 = cfg.initial_state_for(plant.as_ref())?;
    let integ = cfg.build_integrator()?;
    let (r, m) = (plant.order(), plant.dim());
    let t0 = integ.t0.max(plant.initial_time());
    let stack = plant.output_stack(t0, &x0);
    let (reference, _) = ref_stack(&cfg.build_reference()?, t0, r, m)?;
    let chain = cfg.chain_params(r, m)?;
    let report = check_domain_d(t0, &stack.sub(&reference)?, &cfg.build_funnel()?, &chain)?;
    Ok((report, chain))
}

pub fn hypothesis_check(
    cfg: &ScenarioConfig,
    spec: &ControllerSpec,
    feasibility: &FeasibilityReport,
) -> Result<HypothesisCheck> {
    let alpha = cfg.build_funnel()?.alpha();
    let k = cfg.chain_k()?;
    Ok(HypothesisCheck {
        k,
        alpha,
        k_ok: k >= alpha + 2.0,
        n_surjective: spec.n_function().is_surjective(),
        init_feasible: feasibility.feasible,
    })
}

fn warnings(tc: &HypothesisCheck, feasibility: &FeasibilityReport) -> Vec<String> {
    let mut w = Vec::new();
    if !tc.k_ok {
        w.push(format!("k = {} is below alpha + 2 = {}", tc.k, tc.alpha + 2.0));
    }
    if !tc.n_surjective {
        w.push("N is not surjective; stability relies on the sign of the high-frequency gain".into());
    }
    if !tc.init_feasible {
        let stages: Vec<String> = feasibility
            .violated_stages()
            .into_iter()
            .map(|s| format!("stage {s} margin {:.6e}", feasibility.margins[s - 1]))
            .collect();
        w.push(format!("initial error stack is infeasible: {}", stages.join(", ")));
    }
    w
}

pub struct RunResult {
    pub outcome: SimOutcome,
    pub report: RunReport,
}

/// Exit code of a finished run: the integrator's status, upgraded when the
/// monitor finds a violation the integrator did not stop on.
pub fn exit_code(status: RunStatus, events: &EventReport) -> i32 {
    match status {
        RunStatus::Completed if !events.funnel_violations.is_empty() => 2,
        RunStatus::Completed if !events.gain_singularity.is_empty() => 3,
        s => s.exit_code(),
    }
}

/// Runs one controller of a scenario and assembles its report.
pub fn run_one(cfg: &ScenarioConfig, spec: &ControllerSpec) -> Result<RunResult> {
    let mut plant = cfg.build_plant()?;
    let x0 = cfg.initial_state_for(plant.as_ref())?;
    let (r, m) = (plant.order(), plant.dim());
    let funnel = cfg.build_funnel()?;
    let reference = cfg.build_reference()?;
    let integ = cfg.build_integrator()?;
    let controller = cfg.build_controller(spec, r, m, &funnel)?;
    let (feasibility, chain) = initial_feasibility(cfg)?;
    let tc = hypothesis_check(cfg, spec, &feasibility)?;

    let started = Instant::now();
    let outcome = integrate_closed_loop(plant.as_mut(), &x0, controller.as_ref(), &reference, &funnel, &integ)?;
    let wall_time_s = started.elapsed().as_secs_f64();

    let events = monitor_trajectory(&outcome.log, &funnel, &chain);
    let log = &outcome.log;
    let summary = RunSummary {
        samples: log.len(),
        t_final: outcome.t_final,
        accepted_steps: outcome.accepted_steps,
        rejected_steps: outcome.rejected_steps,
        sup_norm_e: log.norm_e.iter().copied().fold(0.0, f64::max),
        rms_error: log.rms_error(),
        max_w: log.w.iter().copied().fold(0.0, f64::max),
        max_gain: events.max_gain,
        sup_u: events.sup_u,
        min_funnel_margin: events.min_funnel_margin,
        wall_time_s,
    };
    let report = RunReport {
        scenario: cfg.name.clone(),
        controller: spec.kind().to_string(),
        status: outcome.status,
        exit_code: exit_code(outcome.status, &events),
        warnings: warnings(&tc, &feasibility),
        diagnostics: mu_table(&chain, &funnel, reference.derivative_bound(r)),
        feasibility,
        hypothesis_check: tc,
        run_events: log.events.clone(),
        events,
        summary,
        artifacts: Artifacts::default(),
    };
    Ok(RunResult { outcome, report })
}

/// Matplotlib script drawing the error against the funnel and the input.
pub fn plot_script(csv_name: &str, title: &str) -> String {
    format!(
        r#"import sys
import pandas as pd
import matplotlib.pyplot as plt

csv = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
df = pd.read_csv(csv)
fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
ax1.plot(df["t"], df["norm_e"], label="|e|")
ax1.plot(df["t"], df["psi"], "k--", label="psi")
ax1.set_ylabel("error")
ax1.legend()
u_cols = [c for c in df.columns if c == "u" or c.startswith("u_")]
for c in u_cols:
    ax2.plot(df["t"], df[c], label=c)
ax2.set_ylabel("input")
ax2.set_xlabel("t")
ax2.legend()
fig.suptitle("{title}")
fig.tight_layout()
out = csv.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"#
    )
}

/// Writes CSV, events sidecar, plot script and report under `dir`.
pub fn write_artifacts(result: &mut RunResult, dir: &Path, prefix: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{prefix}.csv"));
    let events = dir.join(format!("{prefix}_events.json"));
    let plot = dir.join(format!("{prefix}_plot.py"));
    let report = dir.join(format!("{prefix}_report.json"));
    result.outcome.log.save_csv(&csv)?;
    result.outcome.log.save_events_json(&events)?;
    std::fs::write(&plot, plot_script(&format!("{prefix}.csv"), prefix))?;
    result.report.artifacts =
        Artifacts { csv: Some(csv), events: Some(events), plot_script: Some(plot), report: Some(report.clone()) };
    let f = std::io::BufWriter::new(std::fs::File::create(&report)?);
    serde_json::to_writer_pretty(f, &result.report)?;
    Ok(())
}

pub fn report_json(report: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}
