//! `funnelctl` command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 funnel
//! violation (or infeasible start for `check-feasibility`), 3 singularity or
//! aborted integration.

mod report;

pub use report::{
    exit_code, initial_feasibility, plot_script, report_json, run_one, hypothesis_check, write_artifacts, Artifacts, RunReport,
    RunResult, RunSummary, HypothesisCheck,
};

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ControllerSpec, FunnelSpec, ScenarioConfig};
use crate::funnels::{uniform_grid, verify_class_g, DEFAULT_GRID_POINTS, DEFAULT_TOLERANCE};
use crate::sim::TrajectoryLog;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_SINGULAR: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "funnelctl", version, about = "Simulate and audit funnel controllers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every configured controller and write CSV, events and a report.
    Simulate(RunArgs),
    /// Check the initial error stack against the feasible set without simulating.
    CheckFeasibility(ScenarioArgs),
    /// Run two or more controllers on the same scenario and tabulate them.
    Compare(RunArgs),
    /// Rerun a scenario over a list of values for one parameter.
    Sweep(SweepArgs),
    /// Check the configured funnel against its class constants on a grid.
    VerifyFunnel(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (may also be given with --config).
    #[arg(value_name = "CONFIG")]
    pub config_path: Option<PathBuf>,
    #[arg(long = "config", value_name = "CONFIG")]
    pub config_flag: Option<PathBuf>,
    /// Override a config value, e.g. `--set controller.k=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Override the integrator step.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `k`, `dt`, `funnel.c` or `init.<state>`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub values: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// End of the grid; defaults to the integration horizon.
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub points: usize,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
}

impl ScenarioArgs {
    pub fn load(&self) -> Result<ScenarioConfig> {
        let path = match (&self.config_path, &self.config_flag) {
            (Some(_), Some(_)) => return Err(Error::usage("give the config either positionally or with --config")),
            (Some(p), None) | (None, Some(p)) => p,
            (None, None) => return Err(Error::usage("a config file is required")),
        };
        let mut overrides = self.set.clone();
        if let Some(dt) = self.dt {
            overrides.push(format!("integrator.dt={dt}"));
        }
        ScenarioConfig::load(path, &overrides)
    }
}

fn out_dir(cfg: &ScenarioConfig, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn prefix(cfg: &ScenarioConfig) -> String {
    cfg.output.as_ref().and_then(|o| o.prefix.clone()).unwrap_or_else(|| cfg.name.clone())
}

/// Distinct labels for the controllers of a scenario.
fn labels(specs: &[&ControllerSpec]) -> Vec<String> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if specs.iter().filter(|o| o.kind() == s.kind()).count() > 1 {
                format!("{}{}", s.kind(), i + 1)
            } else {
                s.kind().to_string()
            }
        })
        .collect()
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::usage("--jobs must be at least 1"));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::usage(e.to_string()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Parses arguments from the process and runs; returns the exit code.
pub fn main_exit_code() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Config(_) | Error::Json(_) => EXIT_CONFIG,
                _ => EXIT_SINGULAR,
            }
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::CheckFeasibility(a) => cmd_check_feasibility(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::VerifyFunnel(a) => cmd_verify_funnel(a),
    }
}

fn run_all(cfg: &ScenarioConfig, jobs: Option<usize>) -> Result<Vec<RunResult>> {
    let specs = cfg.controller_specs()?;
    pool(jobs)?.install(|| specs.par_iter().map(|s| run_one(cfg, s)).collect())
}

pub fn cmd_simulate(a: &RunArgs) -> Result<i32> {
    let cfg = a.scenario.load()?;
    let specs = cfg.controller_specs()?;
    let names = labels(&specs);
    let dir = out_dir(&cfg, &a.out_dir);
    let base = prefix(&cfg);
    let mut results = run_all(&cfg, a.jobs)?;
    let mut code = EXIT_OK;
    for (res, name) in results.iter_mut().zip(&names) {
        let p = if names.len() == 1 { base.clone() } else { format!("{base}_{name}") };
        write_artifacts(res, &dir, &p)?;
        for w in &res.report.warnings {
            eprintln!("warning [{name}]: {w}");
        }
        code = code.max(res.report.exit_code);
    }
    let reports: Vec<&RunReport> = results.iter().map(|r| &r.report).collect();
    if reports.len() == 1 {
        print_json(reports[0])?;
    } else {
        print_json(&reports)?;
    }
    Ok(code)
}

#[derive(Serialize)]
struct FeasibilityOutput<'a> {
    scenario: &'a str,
    k: f64,
    k_ok: bool,
    feasibility: crate::errchain::FeasibilityReport,
}

pub fn cmd_check_feasibility(a: &ScenarioArgs) -> Result<i32> {
    let cfg = a.load()?;
    let (feasibility, chain) = initial_feasibility(&cfg)?;
    let alpha = cfg.build_funnel()?.alpha();
    let feasible = feasibility.feasible;
    print_json(&FeasibilityOutput { scenario: &cfg.name, k: chain.k(), k_ok: chain.k() >= alpha + 2.0, feasibility })?;
    Ok(if feasible { EXIT_OK } else { EXIT_VIOLATION })
}

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub controller: String,
    pub status: crate::sim::RunStatus,
    pub exit_code: i32,
    pub min_funnel_margin: f64,
    pub sup_u: f64,
    pub max_gain: f64,
    pub rms_error: f64,
}

impl CompareRow {
    fn from_report(label: &str, r: &RunReport) -> Self {
        Self {
            controller: label.to_string(),
            status: r.status,
            exit_code: r.exit_code,
            min_funnel_margin: r.summary.min_funnel_margin,
            sup_u: r.summary.sup_u,
            max_gain: r.summary.max_gain,
            rms_error: r.summary.rms_error,
        }
    }
}

pub fn format_compare_table(rows: &[CompareRow]) -> String {
    let mut s = format!(
        "{:<12} {:>16} {:>5} {:>14} {:>14} {:>14} {:>14}\n",
        "controller", "status", "exit", "min_margin", "max_u", "max_gain", "rms_error"
    );
    for r in rows {
        s += &format!(
            "{:<12} {:>16} {:>5} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}\n",
            r.controller,
            format!("{:?}", r.status),
            r.exit_code,
            r.min_funnel_margin,
            r.sup_u,
            r.max_gain,
            r.rms_error
        );
    }
    s
}

/// Side-by-side `e`, `|e|` and `u` of several logs on the time grid of the
/// longest one; shorter runs leave empty cells.
pub fn write_combined_csv(path: &Path, names: &[String], logs: &[&TrajectoryLog]) -> Result<()> {
    let longest = logs.iter().max_by_key(|l| l.len()).ok_or_else(|| Error::usage("no logs"))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "psi".to_string()];
    for n in names {
        header.extend([format!("{n}_norm_e"), format!("{n}_w"), format!("{n}_u")]);
    }
    w.write_record(&header)?;
    for i in 0..longest.len() {
        let mut row = vec![longest.t[i].to_string(), longest.psi[i].to_string()];
        for l in logs {
            if i < l.len() {
                row.extend([l.norm_e[i].to_string(), l.w[i].to_string(), crate::errchain::norm(&l.u[i]).to_string()]);
            } else {
                row.extend([String::new(), String::new(), String::new()]);
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_compare(a: &RunArgs) -> Result<i32> {
    let cfg = a.scenario.load()?;
    let specs = cfg.controller_specs()?;
    if specs.len() < 2 {
        return Err(Error::usage("compare needs at least two controllers"));
    }
    let names = labels(&specs);
    let dir = out_dir(&cfg, &a.out_dir);
    let base = prefix(&cfg);
    let mut results = run_all(&cfg, a.jobs)?;
    for (res, name) in results.iter_mut().zip(&names) {
        write_artifacts(res, &dir, &format!("{base}_{name}"))?;
    }
    let rows: Vec<CompareRow> =
        results.iter().zip(&names).map(|(r, n)| CompareRow::from_report(n, &r.report)).collect();
    let logs: Vec<&TrajectoryLog> = results.iter().map(|r| &r.outcome.log).collect();
    write_combined_csv(&dir.join(format!("{base}_compare.csv")), &names, &logs)?;
    let mut sw = csv::Writer::from_path(dir.join(format!("{base}_compare_summary.csv")))?;
    for r in &rows {
        sw.serialize(r)?;
    }
    sw.flush()?;
    print!("{}", format_compare_table(&rows));
    Ok(rows.iter().map(|r| r.exit_code).max().unwrap_or(EXIT_OK))
}

/// Sweepable parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum SweepParam {
    K,
    Dt,
    FunnelC,
    Init(String),
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "k" => Ok(SweepParam::K),
            "dt" => Ok(SweepParam::Dt),
            "funnel.c" => Ok(SweepParam::FunnelC),
            _ => match name.strip_prefix("init.") {
                Some(label) if !label.is_empty() => Ok(SweepParam::Init(label.to_string())),
                _ => Err(Error::usage(format!(
                    "unknown sweep parameter `{name}` (expected k, dt, funnel.c or init.<state>)"
                ))),
            },
        }
    }

    /// Copy of `cfg` with this parameter set to `v`.
    pub fn apply(&self, cfg: &ScenarioConfig, v: f64) -> Result<ScenarioConfig> {
        let mut c = cfg.clone();
        match self {
            SweepParam::K => {
                let mut any = false;
                for s in c.controller.iter_mut().chain(c.controllers.iter_mut().flatten()) {
                    if let ControllerSpec::NewFc { k, .. } = s {
                        *k = v;
                        any = true;
                    }
                }
                if !any {
                    return Err(Error::usage("sweeping k needs a new_fc controller"));
                }
            }
            SweepParam::Dt => c.integrator.dt = Some(v),
            SweepParam::FunnelC => match &mut c.funnel {
                FunnelSpec::Exponential { c: level, .. } | FunnelSpec::Constant { c: level, .. } => *level = v,
            },
            SweepParam::Init(label) => {
                c.initial_state.insert(label.clone(), v);
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub controller: String,
    pub status: crate::sim::RunStatus,
    pub exit_code: i32,
    pub k_ok: bool,
    pub init_feasible: bool,
    pub stage_margins: Vec<f64>,
    pub min_funnel_margin: f64,
    pub sup_norm_e: f64,
    pub sup_u: f64,
    pub max_gain: f64,
    pub rms_error: f64,
    /// dt sweeps: `sup ‖e − e_finest‖` on the shared sample times.
    pub sup_diff: Option<f64>,
}

/// `sup ‖e_a(t) − e_b(t)‖` over sample times present in both logs.
pub fn sup_error_difference(a: &TrajectoryLog, b: &TrajectoryLog) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, t) in a.t.iter().enumerate() {
        let j = b.t.partition_point(|s| *s < t - 1e-9);
        if j < b.len() && (b.t[j] - t).abs() <= 1e-9 * t.abs().max(1.0) {
            let d: Vec<f64> = a.e[i].iter().zip(&b.e[j]).map(|(x, y)| x - y).collect();
            let n = crate::errchain::norm(&d);
            best = Some(best.map_or(n, |v: f64| v.max(n)));
        }
    }
    best
}

/// Runs the sweep and returns one row per (value, controller).
pub fn sweep(cfg: &ScenarioConfig, param: &str, values: &[f64], jobs: Option<usize>) -> Result<Vec<SweepRow>> {
    let p = SweepParam::parse(param)?;
    if values.is_empty() {
        return Err(Error::usage("sweep needs at least one value"));
    }
    let cfgs = values.iter().map(|v| p.apply(cfg, *v)).collect::<Result<Vec<_>>>()?;
    let runs: Vec<Vec<RunResult>> = pool(jobs)?.install(|| {
        cfgs.par_iter()
            .map(|c| c.controller_specs()?.into_iter().map(|s| run_one(c, s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()
    })?;
    let finest = if p == SweepParam::Dt {
        values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i)
    } else {
        None
    };
    let mut rows = Vec::new();
    for (vi, (v, results)) in values.iter().zip(&runs).enumerate() {
        for (ci, res) in results.iter().enumerate() {
            let r = &res.report;
            let sup_diff = finest.and_then(|f| {
                if f == vi {
                    Some(0.0)
                } else {
                    sup_error_difference(&res.outcome.log, &runs[f][ci].outcome.log)
                }
            });
            rows.push(SweepRow {
                param: param.to_string(),
                value: *v,
                controller: r.controller.clone(),
                status: r.status,
                exit_code: r.exit_code,
                k_ok: r.hypothesis_check.k_ok,
                init_feasible: r.feasibility.feasible,
                stage_margins: r.feasibility.margins.clone(),
                min_funnel_margin: r.summary.min_funnel_margin,
                sup_norm_e: r.summary.sup_norm_e,
                sup_u: r.summary.sup_u,
                max_gain: r.summary.max_gain,
                rms_error: r.summary.rms_error,
                sup_diff,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let stages = rows.iter().map(|r| r.stage_margins.len()).max().unwrap_or(0);
    let mut header: Vec<String> = ["param", "value", "controller", "status", "exit_code", "k_ok", "init_feasible"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=stages).map(|i| format!("margin{i}")));
    header.extend(
        ["min_funnel_margin", "sup_norm_e", "sup_u", "max_gain", "rms_error", "sup_diff"].iter().map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.param.clone(),
            r.value.to_string(),
            r.controller.clone(),
            format!("{:?}", r.status),
            r.exit_code.to_string(),
            r.k_ok.to_string(),
            r.init_feasible.to_string(),
        ];
        rec.extend((0..stages).map(|i| r.stage_margins.get(i).map_or(String::new(), |m| m.to_string())));
        rec.extend([
            r.min_funnel_margin.to_string(),
            r.sup_norm_e.to_string(),
            r.sup_u.to_string(),
            r.max_gain.to_string(),
            r.rms_error.to_string(),
            r.sup_diff.map_or(String::new(), |d| d.to_string()),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    let cfg = a.run.scenario.load()?;
    let rows = sweep(&cfg, &a.param, &a.values, a.run.jobs)?;
    let dir = out_dir(&cfg, &a.run.out_dir);
    std::fs::create_dir_all(&dir)?;
    let name = format!("{}_sweep_{}.csv", prefix(&cfg), a.param.replace('.', "_"));
    write_sweep_csv(&rows, std::fs::File::create(dir.join(name))?)?;
    write_sweep_csv(&rows, std::io::stdout().lock())?;
    Ok(rows.iter().map(|r| r.exit_code).max().unwrap_or(EXIT_OK))
}

pub fn cmd_verify_funnel(a: &VerifyArgs) -> Result<i32> {
    let cfg = a.scenario.load()?;
    let funnel = cfg.build_funnel()?;
    let integ = cfg.build_integrator()?;
    let t_end = a.t_end.unwrap_or(integ.t_end);
    if a.points < 2 || !(t_end > integ.t0) {
        return Err(Error::usage("verify-funnel needs at least two points on a nonempty interval"));
    }
    let rep = verify_class_g(&funnel, &uniform_grid(integ.t0, t_end, a.points), a.tol)?;
    print_json(&rep)?;
    Ok(if rep.ok { EXIT_OK } else { EXIT_VIOLATION })
}
