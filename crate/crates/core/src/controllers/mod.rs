//! Output-derivative feedback controllers.
//!
//! Both controllers are static maps from the error stack
//! `(e, ė, …, e^{(r−1)})` to the input; all dynamics live in the plant.

mod gains;
mod jet;
mod legacy;
mod new_fc;

pub use gains::{GainFunctions, Gamma, NFunction};
pub use jet::{jet_lift, Jet};
pub use legacy::{legacy_fc_control, LegacyFunnelController};
pub use new_fc::{new_fc_control, NewFunnelController};

use serde::Serialize;

use crate::errchain::DerivativeStack;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlOutput {
    pub u: Vec<f64>,
    /// Final stage signal the gain acts on.
    pub e_r: Vec<f64>,
    /// Argument of γ, in `[0, 1)` whenever the output is defined.
    pub w: f64,
    /// `N(γ(w))`.
    pub gain: f64,
    /// Stage signals `e₁, …, e_r` as used by the controller.
    pub stages: Vec<Vec<f64>>,
    /// Time-varying intermediate gains (empty for the constant-gain design).
    pub stage_gains: Vec<f64>,
}

pub trait Controller: Send + Sync {
    fn order(&self) -> usize;
    fn dim(&self) -> usize;
    /// Short name used in reports, e.g. `new_fc`.
    fn kind(&self) -> &'static str;
    fn gains(&self) -> &GainFunctions;
    fn control(&self, t: f64, e_stack: &DerivativeStack) -> Result<ControlOutput>;
}
