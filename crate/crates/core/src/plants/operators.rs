//! Causal operators `T` feeding the plant's right-hand side.
//!
//! Hysteresis definitions used here are the standard discrete-time ones:
//!
//! - play (backlash) with half-width σ: `w ← clamp(w, y − σ, y + σ)`;
//! - relay with thresholds `off < on`: switch high when `y ≥ on`, low when
//!   `y ≤ off`, otherwise keep the previous state.
//!
//! Both act componentwise on the output `y` (block 0 of the stack). The
//! delay returns the whole stack `τ` time units back, interpolated linearly
//! between stored samples. Linear internal dynamics
//! `η̇ = Aη + B x, T = Cη + D x` take the whole stack `x` as input.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Hurwitz margin: every eigenvalue of `A` needs real part below `-HURWITZ_TOL`.
pub const HURWITZ_TOL: f64 = 1e-9;

/// Sampled vector-valued trajectory with strictly increasing times.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    /// Samples `f` at `n ≥ 2` equally spaced points of `[t0, t1]`.
    pub fn from_fn(t0: f64, t1: f64, n: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        if n < 2 || !(t1 > t0) {
            return Err(Error::usage("history needs t1 > t0 and at least two samples"));
        }
        let mut h = Self::new();
        for t in crate::funnels::uniform_grid(t0, t1, n) {
            h.push(t, f(t))?;
        }
        Ok(h)
    }

    pub fn push(&mut self, t: f64, v: Vec<f64>) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::usage(format!("history times must increase: {t} after {last}")));
            }
            if v.len() != self.values[0].len() {
                return Err(Error::usage("history samples must share one dimension"));
            }
        }
        if v.is_empty() {
            return Err(Error::usage("history samples must be nonempty"));
        }
        self.times.push(t);
        self.values.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn first_time(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.times.iter().copied().zip(self.values.iter().map(Vec::as_slice))
    }

    /// Linear interpolation at `t`; `t` must lie within the stored range.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        let (Some(first), Some(last)) = (self.first_time(), self.last_time()) else {
            return Err(Error::usage("history is empty"));
        };
        if t < first || t > last {
            return Err(Error::usage(format!(
                "history covers [{first}, {last}] but t = {t} was requested"
            )));
        }
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 || self.times[idx - 1] == t {
            return Ok(self.values[idx.max(1) - 1].clone());
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let theta = (t - t0) / (t1 - t0);
        let (a, b) = (&self.values[idx - 1], &self.values[idx]);
        Ok(a.iter().zip(b).map(|(x, y)| x + theta * (y - x)).collect())
    }

    /// Samples strictly before `t` plus the interpolated value at `t`.
    pub fn restrict(&self, t: f64) -> Result<History> {
        let at_t = self.sample(t)?;
        let idx = self.times.partition_point(|&s| s < t);
        let mut h = History {
            times: self.times[..idx].to_vec(),
            values: self.values[..idx].to_vec(),
        };
        h.times.push(t);
        h.values.push(at_t);
        Ok(h)
    }

    /// Drops samples older than `t`, keeping one sample at or before it.
    pub(crate) fn prune_before(&mut self, t: f64) {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx > 1 {
            self.times.drain(..idx - 1);
            self.values.drain(..idx - 1);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CausalOperator {
    Delay {
        tau: f64,
        buffer: History,
    },
    LinearInternalDynamics {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        eta0: DVector<f64>,
    },
    Play {
        sigma: f64,
        w: Vec<f64>,
    },
    Relay {
        on_level: f64,
        off_level: f64,
        out_hi: f64,
        out_lo: f64,
        state: Vec<bool>,
    },
}

fn relay_update(state: bool, y: f64, on_level: f64, off_level: f64) -> bool {
    if y >= on_level {
        true
    } else if y <= off_level {
        false
    } else {
        state
    }
}

fn play_update(w: f64, y: f64, sigma: f64) -> f64 {
    w.clamp(y - sigma, y + sigma)
}

impl CausalOperator {
    /// Delay by `tau` with the initial trajectory `history`, which must span
    /// at least `tau`.
    pub fn delay(tau: f64, history: History) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::config(format!("delay tau must be positive, got {tau}")));
        }
        match (history.first_time(), history.last_time()) {
            (Some(a), Some(b)) if b - a >= tau - 1e-12 => {}
            _ => {
                return Err(Error::config(format!(
                    "delay history must cover an interval of length tau = {tau}"
                )))
            }
        }
        Ok(CausalOperator::Delay { tau, buffer: history })
    }

    /// Linear internal dynamics; rejects `A` unless it is Hurwitz.
    pub fn linear(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        eta0: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::config("A must be square and nonempty"));
        }
        if b.nrows() != n || c.ncols() != n || eta0.len() != n {
            return Err(Error::config("B rows, C columns and eta0 length must match A"));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::config("D must be q x (input dimension)"));
        }
        let worst = max_real_eigenvalue(&a);
        if !(worst < -HURWITZ_TOL) {
            return Err(Error::config(format!(
                "A is not Hurwitz: an eigenvalue has real part {worst:.3e}"
            )));
        }
        Ok(CausalOperator::LinearInternalDynamics { a, b, c, d, eta0 })
    }

    /// Backlash with half-width `sigma`, one memory cell per output component.
    pub fn play(sigma: f64, w0: Vec<f64>) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::config(format!("play sigma must be positive, got {sigma}")));
        }
        if w0.is_empty() {
            return Err(Error::config("play needs one initial memory value per component"));
        }
        Ok(CausalOperator::Play { sigma, w: w0 })
    }

    pub fn relay(
        on_level: f64,
        off_level: f64,
        out_hi: f64,
        out_lo: f64,
        state0: Vec<bool>,
    ) -> Result<Self> {
        if !(off_level < on_level) {
            return Err(Error::config("relay needs off_level < on_level"));
        }
        if state0.is_empty() {
            return Err(Error::config("relay needs one initial state per component"));
        }
        Ok(CausalOperator::Relay { on_level, off_level, out_hi, out_lo, state: state0 })
    }

    /// Dimension of the operator output.
    pub fn output_dim(&self) -> usize {
        match self {
            CausalOperator::Delay { buffer, .. } => buffer.dim(),
            CausalOperator::LinearInternalDynamics { c, .. } => c.nrows(),
            CausalOperator::Play { w, .. } => w.len(),
            CausalOperator::Relay { state, .. } => state.len(),
        }
    }

    /// Dimension of the input the operator reads (the stack for delay and
    /// linear dynamics, the output for hysteresis).
    pub fn input_dim(&self) -> usize {
        match self {
            CausalOperator::Delay { buffer, .. } => buffer.dim(),
            CausalOperator::LinearInternalDynamics { b, .. } => b.ncols(),
            CausalOperator::Play { w, .. } => w.len(),
            CausalOperator::Relay { state, .. } => state.len(),
        }
    }

    /// Number of continuous states integrated alongside the plant.
    pub fn continuous_states(&self) -> usize {
        match self {
            CausalOperator::LinearInternalDynamics { a, .. } => a.nrows(),
            _ => 0,
        }
    }

    pub fn initial_continuous(&self) -> Vec<f64> {
        match self {
            CausalOperator::LinearInternalDynamics { eta0, .. } => eta0.iter().copied().collect(),
            _ => Vec::new(),
        }
    }

    pub fn delay_time(&self) -> Option<f64> {
        match self {
            CausalOperator::Delay { tau, .. } => Some(*tau),
            _ => None,
        }
    }

    /// Output at time `t` given the current stack and continuous state,
    /// without advancing any memory.
    pub fn output(&self, t: f64, stack: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
        match self {
            CausalOperator::Delay { tau, buffer } => buffer.sample(t - tau),
            CausalOperator::LinearInternalDynamics { c, d, .. } => {
                let eta = DVector::from_column_slice(eta);
                let x = DVector::from_column_slice(stack);
                Ok((c * eta + d * x).iter().copied().collect())
            }
            CausalOperator::Play { sigma, w } => {
                Ok(w.iter().zip(stack).map(|(w, y)| play_update(*w, *y, *sigma)).collect())
            }
            CausalOperator::Relay { on_level, off_level, out_hi, out_lo, state } => Ok(state
                .iter()
                .zip(stack)
                .map(|(s, y)| {
                    if relay_update(*s, *y, *on_level, *off_level) {
                        *out_hi
                    } else {
                        *out_lo
                    }
                })
                .collect()),
        }
    }

    pub fn eta_rhs(&self, stack: &[f64], eta: &[f64], deta: &mut [f64]) {
        if let CausalOperator::LinearInternalDynamics { a, b, .. } = self {
            let eta = DVector::from_column_slice(eta);
            let x = DVector::from_column_slice(stack);
            deta.copy_from_slice((a * eta + b * x).as_slice());
        }
    }

    /// Advances discrete memory with the accepted sample at time `t`.
    pub fn commit(&mut self, t: f64, stack: &[f64], _eta: &[f64]) -> Result<()> {
        match self {
            CausalOperator::Delay { tau, buffer } => {
                buffer.push(t, stack.to_vec())?;
                buffer.prune_before(t - *tau - 1e-9);
            }
            CausalOperator::LinearInternalDynamics { .. } => {}
            CausalOperator::Play { sigma, w } => {
                for (w, y) in w.iter_mut().zip(stack) {
                    *w = play_update(*w, *y, *sigma);
                }
            }
            CausalOperator::Relay { on_level, off_level, state, .. } => {
                for (s, y) in state.iter_mut().zip(stack) {
                    *s = relay_update(*s, *y, *on_level, *off_level);
                }
            }
        }
        Ok(())
    }
}

fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Operator output at `t` replayed from the operator's initial memory over
/// the sampled input `history`.
///
/// Only the part of `history` up to `t` is read, so the result is causal by
/// construction. For the delay, `history` is the full trajectory (including
/// the initial window) and the operator's own buffer is ignored.
pub fn operator_apply(op: &CausalOperator, t: f64, history: &History) -> Result<Vec<f64>> {
    let past = history.restrict(t)?;
    let need = op.input_dim();
    if past.dim() < need {
        return Err(Error::usage(format!(
            "history samples have dimension {}, operator reads {need}",
            past.dim()
        )));
    }
    match op {
        CausalOperator::Delay { tau, .. } => past.sample(t - tau),
        CausalOperator::Play { sigma, w } => {
            let mut w = w.clone();
            for (_, y) in past.samples() {
                for (w, y) in w.iter_mut().zip(y) {
                    *w = play_update(*w, *y, *sigma);
                }
            }
            Ok(w)
        }
        CausalOperator::Relay { on_level, off_level, out_hi, out_lo, state } => {
            let mut state = state.clone();
            for (_, y) in past.samples() {
                for (s, y) in state.iter_mut().zip(y) {
                    *s = relay_update(*s, *y, *on_level, *off_level);
                }
            }
            Ok(state.iter().map(|s| if *s { *out_hi } else { *out_lo }).collect())
        }
        CausalOperator::LinearInternalDynamics { eta0, .. } => {
            // one RK4 step per sample interval, input interpolated linearly
            let mut eta: Vec<f64> = eta0.iter().copied().collect();
            let mut k = vec![vec![0.0; eta.len()]; 4];
            let samples: Vec<(f64, &[f64])> = past.samples().collect();
            for pair in samples.windows(2) {
                let ((t0, x0), (t1, x1)) = (pair[0], pair[1]);
                let h = t1 - t0;
                let mid: Vec<f64> = x0.iter().zip(x1).map(|(a, b)| 0.5 * (a + b)).collect();
                let inputs = [&x0[..need], &mid[..need], &mid[..need], &x1[..need]];
                let offsets = [0.0, 0.5 * h, 0.5 * h, h];
                for s in 0..4 {
                    let probe: Vec<f64> = if s == 0 {
                        eta.clone()
                    } else {
                        eta.iter().zip(&k[s - 1]).map(|(e, d)| e + offsets[s] * d).collect()
                    };
                    let mut out = vec![0.0; eta.len()];
                    op.eta_rhs(inputs[s], &probe, &mut out);
                    k[s] = out;
                }
                for (i, e) in eta.iter_mut().enumerate() {
                    *e += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
                }
            }
            let (_, x_t) = samples[samples.len() - 1];
            op.output(t, &x_t[..need], &eta)
        }
    }
}
