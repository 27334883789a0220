//! Low-complexity funnel control for higher-order nonlinear systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`funnels`]: performance boundaries ψ and their class constants (α, β).
//! - [`errchain`]: auxiliary error variables ξᵢ, the stacking matrix S, the
//!   feasibility set and the diagnostic constants μ and λ.
//! - [`plants`]: the mass-on-car benchmark and a generic functional
//!   differential equation plant driven by causal operators.
//! - [`controllers`]: the constant-gain funnel controller and the legacy
//!   time-varying-gain controller used for comparison.
//! - [`sim`]: closed-loop integration, trajectory logs and monitors.
//! - [`config`] and [`cli`]: JSON scenarios and the `funnelctl` front end.

pub mod cli;
pub mod config;
pub mod controllers;
pub mod errchain;
pub mod error;
pub mod funnels;
pub mod plants;
pub mod sim;

pub use error::{Error, Result};
