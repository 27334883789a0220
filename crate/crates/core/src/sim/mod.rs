//! Closed-loop simulation, trajectory logging and monitors.

mod closed_loop;
mod integrator;
mod log;
mod monitor;
mod reference;

pub use closed_loop::{integrate_closed_loop, RunStatus, SimOutcome};
pub use integrator::{dopri5_step, rk4_step, IntegratorConfig, Method};
pub use log::{Event, EventKind, TrajectoryLog};
pub use monitor::{monitor_trajectory, DomainExit, EventReport, SampleFlag};
pub use reference::{ref_stack, PolynomialSpline, ReferenceSignal};
