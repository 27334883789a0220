//! Performance funnel boundaries.
//!
//! A funnel function ψ bounds the tracking error, `‖e(t)‖ < ψ(t)`. The
//! controller and the runtime monitors need ψ, its exact derivatives, its
//! supremum and the two constants (α, β) of the inequality
//! `ψ̇(t) ≥ −α ψ(t) + β`, so every boundary is a closed-form family.

use serde::Serialize;

use crate::{Error, Result};

/// Number of points in the default verification grid.
pub const DEFAULT_GRID_POINTS: usize = 1001;
/// Default tolerance for [`verify_class_g`].
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FunnelFamily {
    /// `ψ(t) = a e^{−λ t} + c`.
    Exponential { a: f64, lambda: f64, c: f64 },
    /// `ψ(t) = c`.
    ConstantBand { c: f64 },
}

/// A funnel boundary together with the constants (α, β) chosen for it.
///
/// The class inequality admits many valid pairs; the chosen pair fixes both
/// the lower bound on the controller parameter and the radius of the
/// feasibility set, so it is stored rather than inferred.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FunnelFunction {
    family: FunnelFamily,
    alpha: f64,
    beta: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::usage(format!("{name} must be a positive finite number, got {v}")))
    }
}

impl FunnelFunction {
    pub fn new(family: FunnelFamily, alpha: f64, beta: f64) -> Result<Self> {
        match family {
            FunnelFamily::Exponential { a, lambda, c } => {
                positive("a", a)?;
                positive("lambda", lambda)?;
                positive("c", c)?;
            }
            FunnelFamily::ConstantBand { c } => positive("c", c)?,
        }
        positive("alpha", alpha)?;
        positive("beta", beta)?;
        Ok(Self { family, alpha, beta })
    }

    pub fn exponential(a: f64, lambda: f64, c: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(FunnelFamily::Exponential { a, lambda, c }, alpha, beta)
    }

    pub fn constant(c: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(FunnelFamily::ConstantBand { c }, alpha, beta)
    }

    pub fn family(&self) -> FunnelFamily {
        self.family
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.family {
            FunnelFamily::Exponential { a, lambda, c } => a * (-lambda * t).exp() + c,
            FunnelFamily::ConstantBand { c } => c,
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self.family {
            FunnelFamily::Exponential { a, lambda, .. } => -lambda * a * (-lambda * t).exp(),
            FunnelFamily::ConstantBand { .. } => 0.0,
        }
    }

    /// Raw time derivatives `ψ(t), ψ̇(t), …, ψ^{(order)}(t)`.
    pub fn derivatives(&self, t: f64, order: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(order + 1);
        match self.family {
            FunnelFamily::Exponential { a, lambda, c } => {
                let mut term = a * (-lambda * t).exp();
                out.push(term + c);
                for _ in 0..order {
                    term *= -lambda;
                    out.push(term);
                }
            }
            FunnelFamily::ConstantBand { c } => {
                out.push(c);
                out.resize(order + 1, 0.0);
            }
        }
        out
    }

    /// `‖ψ‖∞` over `t ≥ 0`.
    pub fn sup_norm(&self) -> f64 {
        match self.family {
            FunnelFamily::Exponential { a, c, .. } => a + c,
            FunnelFamily::ConstantBand { c } => c,
        }
    }

    /// Same shape multiplied by `scale > 0`; β scales along with ψ.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        positive("scale", scale)?;
        let family = match self.family {
            FunnelFamily::Exponential { a, lambda, c } => FunnelFamily::Exponential {
                a: a * scale,
                lambda,
                c: c * scale,
            },
            FunnelFamily::ConstantBand { c } => FunnelFamily::ConstantBand { c: c * scale },
        };
        Self::new(family, self.alpha, self.beta * scale)
    }
}

/// Value and first derivative of `f` at `t ≥ 0`.
pub fn eval_funnel(f: &FunnelFunction, t: f64) -> (f64, f64) {
    debug_assert!(t >= 0.0, "funnels are defined on t >= 0");
    (f.value(t), f.derivative(t))
}

/// `β/α`, the level every funnel of the class stays strictly above.
///
/// It bounds stages 2…r of the feasibility set.
pub fn funnel_floor(f: &FunnelFunction) -> f64 {
    f.beta / f.alpha
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MembershipReport {
    pub ok: bool,
    /// Minimum of `ψ̇ + αψ − β` over the grid.
    pub worst_residual: f64,
    pub worst_t: f64,
    pub min_value: f64,
}

/// Checks the class inequality `ψ̇ + αψ − β ≥ −tol` and positivity of ψ on
/// every grid point.
pub fn verify_class_g(f: &FunnelFunction, grid: &[f64], tol: f64) -> Result<MembershipReport> {
    if grid.is_empty() {
        return Err(Error::usage("verification grid is empty"));
    }
    if !(tol >= 0.0) {
        return Err(Error::usage(format!("tolerance must be nonnegative, got {tol}")));
    }
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::usage("verification grid must be finite and nonnegative"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::usage("verification grid must be sorted"));
    }

    let mut worst_residual = f64::INFINITY;
    let mut worst_t = grid[0];
    let mut min_value = f64::INFINITY;
    for &t in grid {
        let (psi, psi_dot) = eval_funnel(f, t);
        let residual = psi_dot + f.alpha * psi - f.beta;
        if residual < worst_residual {
            worst_residual = residual;
            worst_t = t;
        }
        min_value = min_value.min(psi);
    }
    Ok(MembershipReport {
        ok: worst_residual >= -tol && min_value > 0.0,
        worst_residual,
        worst_t,
        min_value,
    })
}

/// `n` equally spaced points on `[t0, t1]`, endpoints included.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t0],
        _ => {
            let h = (t1 - t0) / (n - 1) as f64;
            (0..n).map(|i| if i + 1 == n { t1 } else { t0 + h * i as f64 }).collect()
        }
    }
}
