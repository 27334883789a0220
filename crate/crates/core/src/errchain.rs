//! Auxiliary error variables and the diagnostics built on them.
//!
//! For a stack `z = (z₁, …, z_r) ∈ ℝ^{rm}` and a constant `k ≥ 0`:
//!
//! ```text
//! ξ₁(z)     = z₁
//! ξᵢ₊₁(z)   = ξᵢ(σ(z)) + k ξᵢ(z)        σ(z₁, …, z_r) = (z₂, …, z_r, 0)
//! ```
//!
//! Evaluated on the derivative stack of a signal, `ξᵢ₊₁ = ξ̇ᵢ + k ξᵢ`, so
//! `ξ_r` folds the whole tracking error stack into one m-dimensional signal.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::funnels::{funnel_floor, FunnelFunction};
use crate::{Error, Result};

/// Largest supported order; binomials stay exact in `u64` well past this.
pub const MAX_ORDER: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorChainParams {
    k: f64,
    r: usize,
    m: usize,
}

impl ErrorChainParams {
    pub fn new(k: f64, r: usize, m: usize) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::usage(format!("k must be finite and nonnegative, got {k}")));
        }
        if r == 0 || r > MAX_ORDER {
            return Err(Error::usage(format!("order r must lie in 1..={MAX_ORDER}, got {r}")));
        }
        if m == 0 {
            return Err(Error::usage("output dimension m must be at least 1"));
        }
        Ok(Self { k, r, m })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn order(&self) -> usize {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// `k ≥ α + 2`, the parameter condition of the main feasibility result.
    pub fn complies_with(&self, funnel: &FunnelFunction) -> bool {
        self.k >= funnel.alpha() + 2.0
    }

    fn check_stack(&self, z: &DerivativeStack) -> Result<()> {
        if z.order() != self.r || z.dim() != self.m {
            return Err(Error::usage(format!(
                "stack has shape {}x{}, parameters expect {}x{}",
                z.order(),
                z.dim(),
                self.r,
                self.m
            )));
        }
        Ok(())
    }

    fn check_stage(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.r {
            return Err(Error::usage(format!("stage {i} outside 1..={}", self.r)));
        }
        Ok(())
    }
}

/// `(ζ, ζ̇, …, ζ^{(r−1)})` stored as r contiguous blocks of length m.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeStack {
    r: usize,
    m: usize,
    data: Vec<f64>,
}

impl DerivativeStack {
    pub fn new(r: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if r == 0 || m == 0 {
            return Err(Error::usage("stack needs r >= 1 and m >= 1"));
        }
        if data.len() != r * m {
            return Err(Error::usage(format!(
                "stack data has {} entries, expected r*m = {}",
                data.len(),
                r * m
            )));
        }
        Ok(Self { r, m, data })
    }

    pub fn zeros(r: usize, m: usize) -> Self {
        Self { r, m, data: vec![0.0; r * m] }
    }

    /// Scalar-output stack from `(ζ, ζ̇, …)`.
    pub fn scalar(values: &[f64]) -> Self {
        Self { r: values.len().max(1), m: 1, data: if values.is_empty() { vec![0.0] } else { values.to_vec() } }
    }

    pub fn from_blocks(blocks: &[Vec<f64>]) -> Result<Self> {
        let m = blocks.first().map_or(0, Vec::len);
        if blocks.iter().any(|b| b.len() != m) {
            return Err(Error::usage("stack blocks must share one length"));
        }
        Self::new(blocks.len(), m, blocks.concat())
    }

    pub fn order(&self) -> usize {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Block `j` (0-based), i.e. the j-th derivative.
    pub fn block(&self, j: usize) -> &[f64] {
        &self.data[j * self.m..(j + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self − other`, shapes must agree.
    pub fn sub(&self, other: &DerivativeStack) -> Result<DerivativeStack> {
        if self.r != other.r || self.m != other.m {
            return Err(Error::usage("stack shapes differ"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { r: self.r, m: self.m, data })
    }
}

pub fn left_shift(z: &DerivativeStack) -> DerivativeStack {
    let mut data = vec![0.0; z.data.len()];
    data[..(z.r - 1) * z.m].copy_from_slice(&z.data[z.m..]);
    DerivativeStack { r: z.r, m: z.m, data }
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// All stages `ξ₁(z), …, ξ_r(z)`.
///
/// This is the defining recursion memoised over shifts: with
/// `T[i][j] = ξᵢ(σʲ z)`, `T[1][j] = z_{j+1}` and
/// `T[i+1][j] = T[i][j+1] + k T[i][j]`.
pub fn xi_all(p: &ErrorChainParams, z: &DerivativeStack) -> Result<Vec<Vec<f64>>> {
    p.check_stack(z)?;
    let (r, k) = (p.r, p.k);
    // row[j] holds ξᵢ(σʲ z) for the current i; σʲ z is zero for j >= r.
    let mut row: Vec<Vec<f64>> = (0..r).map(|j| z.block(j).to_vec()).collect();
    let mut out = Vec::with_capacity(r);
    out.push(row[0].clone());
    for i in 1..r {
        let width = r - i;
        let next: Vec<Vec<f64>> = (0..width)
            .map(|j| row[j + 1].iter().zip(&row[j]).map(|(s, c)| s + k * c).collect())
            .collect();
        row = next;
        out.push(row[0].clone());
    }
    Ok(out)
}

/// `ξᵢ(z)` for a single stage `1 ≤ i ≤ r`.
pub fn xi_eval(p: &ErrorChainParams, i: usize, z: &DerivativeStack) -> Result<Vec<f64>> {
    p.check_stage(i)?;
    let mut all = xi_all(p, z)?;
    Ok(all.swap_remove(i - 1))
}

/// Exact binomial coefficient for `n ≤ MAX_ORDER`.
pub fn binomial(n: usize, j: usize) -> u64 {
    if j > n {
        return 0;
    }
    let j = j.min(n - j);
    (0..j).fold(1u64, |acc, t| acc * (n - t) as u64 / (t + 1) as u64)
}

/// `ξᵢ(z) = Σ_{j<i} C(i−1, j) k^{i−1−j} z_{j+1}`, the binomial expansion of
/// `(d/dt + k)^{i−1}` applied to a stack.
pub fn xi_closed_form(p: &ErrorChainParams, i: usize, z: &DerivativeStack) -> Result<Vec<f64>> {
    p.check_stage(i)?;
    p.check_stack(z)?;
    let mut out = vec![0.0; p.m];
    for j in 0..i {
        let coeff = binomial(i - 1, j) as f64 * p.k.powi((i - 1 - j) as i32);
        for (o, v) in out.iter_mut().zip(z.block(j)) {
            *o += coeff * v;
        }
    }
    Ok(out)
}

/// Block lower-triangular `S` with `S · z = (ξ₁(z), …, ξ_r(z))`; block
/// `(i, j)` is `C(i−1, j−1) k^{i−j} I_m`.
pub fn s_matrix(p: &ErrorChainParams) -> DMatrix<f64> {
    let (r, m) = (p.r, p.m);
    let mut s = DMatrix::zeros(r * m, r * m);
    for i in 0..r {
        for j in 0..=i {
            let coeff = binomial(i, j) as f64 * p.k.powi((i - j) as i32);
            for c in 0..m {
                s[(i * m + c, j * m + c)] = coeff;
            }
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub t: f64,
    pub stage_norms: Vec<f64>,
    pub stage_bounds: Vec<f64>,
    pub margins: Vec<f64>,
    pub feasible: bool,
}

impl FeasibilityReport {
    /// 1-based stages whose margin is not strictly positive.
    pub fn violated_stages(&self) -> Vec<usize> {
        self.margins
            .iter()
            .enumerate()
            .filter(|(_, m)| !(**m > 0.0))
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Membership of `z` in the set `{‖ξ₁(z)‖ < ψ(t), ‖ξᵢ(z)‖ < β/α for i ≥ 2}`.
pub fn check_domain_d(
    t: f64,
    z: &DerivativeStack,
    funnel: &FunnelFunction,
    p: &ErrorChainParams,
) -> Result<FeasibilityReport> {
    let stages = xi_all(p, z)?;
    let stage_norms: Vec<f64> = stages.iter().map(|v| norm(v)).collect();
    let floor = funnel_floor(funnel);
    let stage_bounds: Vec<f64> =
        (0..p.r).map(|i| if i == 0 { funnel.value(t) } else { floor }).collect();
    let margins: Vec<f64> = stage_bounds.iter().zip(&stage_norms).map(|(b, n)| b - n).collect();
    let feasible = margins.iter().all(|m| *m > 0.0);
    Ok(FeasibilityReport { t, stage_norms, stage_bounds, margins, feasible })
}

/// Derivative bounds `μᵢʲ` (bound on `‖ξᵢ^{(j)}‖` while the stack stays
/// feasible) and the constant λ that the final stage has to dominate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MuTable {
    /// `mu[i-1][j]` for `i = 1…r`, `j = 0…r−i`.
    pub mu: Vec<Vec<f64>>,
    pub lambda: f64,
}

impl MuTable {
    /// `μᵢʲ` with 1-based stage index.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mu[i - 1][j]
    }
}

pub fn mu_table(p: &ErrorChainParams, funnel: &FunnelFunction, ref_rth_bound: f64) -> MuTable {
    let r = p.r;
    let floor = funnel_floor(funnel);
    let mut mu: Vec<Vec<f64>> = (0..r)
        .map(|i| {
            let mut row = vec![0.0; r - i];
            row[0] = if i == 0 { funnel.sup_norm() } else { floor };
            row
        })
        .collect();
    for j in 0..r.saturating_sub(1) {
        for i in 0..r - 1 - j {
            mu[i][j + 1] = mu[i + 1][j] + p.k * mu[i][j];
        }
    }
    let lambda = ref_rth_bound + (1..r).map(|j| p.k * mu[j - 1][r - j]).sum::<f64>();
    MuTable { mu, lambda }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn benchmark_stack() -> DerivativeStack {
        DerivativeStack::scalar(&[-0.3, 0.79, -2.0])
    }

    #[test]
    fn shift() {
        assert_eq!(left_shift(&DerivativeStack::scalar(&[1.0, 2.0, 3.0])).as_slice(), &[2.0, 3.0, 0.0]);
        assert_eq!(left_shift(&DerivativeStack::zeros(3, 2)), DerivativeStack::zeros(3, 2));
        let z = DerivativeStack::from_blocks(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(left_shift(&z).as_slice(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn xi_unit_stack() {
        let p = ErrorChainParams::new(3.0, 3, 1).unwrap();
        let z = DerivativeStack::scalar(&[1.0, 0.0, 0.0]);
        assert_eq!(xi_eval(&p, 1, &z).unwrap(), vec![1.0]);
        assert_eq!(xi_eval(&p, 2, &z).unwrap(), vec![3.0]);
        assert_eq!(xi_eval(&p, 3, &z).unwrap(), vec![9.0]);
    }

    #[test]
    fn xi_benchmark_stack() {
        let p = ErrorChainParams::new(3.0, 3, 1).unwrap();
        let z = benchmark_stack();
        assert_abs_diff_eq!(xi_eval(&p, 2, &z).unwrap()[0], -0.11, epsilon = 1e-14);
        assert_abs_diff_eq!(xi_eval(&p, 3, &z).unwrap()[0], 0.04, epsilon = 1e-14);
    }

    #[test]
    fn xi_zero_stack() {
        let p = ErrorChainParams::new(7.5, 4, 2).unwrap();
        for v in xi_all(&p, &DerivativeStack::zeros(4, 2)).unwrap() {
            assert_eq!(v, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn closed_form_examples() {
        let p = ErrorChainParams::new(3.0, 3, 1).unwrap();
        assert_eq!(xi_closed_form(&p, 3, &DerivativeStack::scalar(&[1.0, 0.0, 0.0])).unwrap(), vec![9.0]);
        assert_eq!(xi_closed_form(&p, 3, &DerivativeStack::scalar(&[0.0, 1.0, 0.0])).unwrap(), vec![6.0]);
        let p = ErrorChainParams::new(42.0, 3, 1).unwrap();
        assert_eq!(xi_closed_form(&p, 1, &benchmark_stack()).unwrap(), vec![-0.3]);
    }

    #[test]
    fn stage_out_of_range() {
        let p = ErrorChainParams::new(1.0, 2, 1).unwrap();
        let z = DerivativeStack::zeros(2, 1);
        assert!(matches!(xi_eval(&p, 0, &z), Err(Error::Usage(_))));
        assert!(matches!(xi_eval(&p, 3, &z), Err(Error::Usage(_))));
        assert!(xi_closed_form(&p, 3, &z).is_err());
        assert!(xi_eval(&p, 1, &DerivativeStack::zeros(3, 1)).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ErrorChainParams::new(-1.0, 2, 1).is_err());
        assert!(ErrorChainParams::new(1.0, 0, 1).is_err());
        assert!(ErrorChainParams::new(1.0, MAX_ORDER + 1, 1).is_err());
        assert!(ErrorChainParams::new(1.0, MAX_ORDER, 1).is_ok());
        assert!(ErrorChainParams::new(1.0, 2, 0).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(0, 0), 1);
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(19, 9), 92378);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn s_matrix_examples() {
        let p = ErrorChainParams::new(3.0, 3, 1).unwrap();
        let s = s_matrix(&p);
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 3.0, 1.0, 0.0, 9.0, 6.0, 1.0]);
        assert_eq!(s, expected);
        let p = ErrorChainParams::new(5.0, 1, 2).unwrap();
        assert_eq!(s_matrix(&p), DMatrix::identity(2, 2));
    }

    #[test]
    fn domain_d_benchmark() {
        let f = FunnelFunction::exponential(3.0, 1.0, 0.1, 1.0, 0.1).unwrap();
        let p = ErrorChainParams::new(3.0, 3, 1).unwrap();
        let rep = check_domain_d(0.0, &benchmark_stack(), &f, &p).unwrap();
        assert!(!rep.feasible);
        let expected_norms = [0.3, 0.11, 0.04];
        let expected_bounds = [3.1, 0.1, 0.1];
        for i in 0..3 {
            assert_abs_diff_eq!(rep.stage_norms[i], expected_norms[i], epsilon = 1e-14);
            assert_abs_diff_eq!(rep.stage_bounds[i], expected_bounds[i], epsilon = 1e-15);
        }
        assert_abs_diff_eq!(rep.margins[1], -0.01, epsilon = 1e-12);
        assert_eq!(rep.violated_stages(), vec![2]);
    }

    #[test]
    fn domain_d_zero_and_boundary() {
        let f = FunnelFunction::exponential(3.0, 1.0, 0.1, 1.0, 0.1).unwrap();
        let p = ErrorChainParams::new(3.0, 3, 1).unwrap();
        let rep = check_domain_d(2.0, &DerivativeStack::zeros(3, 1), &f, &p).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.margins, rep.stage_bounds);

        // ‖ξ₁‖ = ψ(t) exactly: excluded.
        let p1 = ErrorChainParams::new(3.0, 1, 1).unwrap();
        let rep = check_domain_d(0.0, &DerivativeStack::scalar(&[3.1]), &f, &p1).unwrap();
        assert!(!rep.feasible);
    }

    #[test]
    fn mu_table_example() {
        let f = FunnelFunction::exponential(3.0, 1.0, 0.1, 1.0, 0.1).unwrap();
        let p = ErrorChainParams::new(3.0, 3, 1).unwrap();
        let t = mu_table(&p, &f, 1.0);
        assert_abs_diff_eq!(t.get(1, 0), 3.1, epsilon = 1e-15);
        assert_abs_diff_eq!(t.get(1, 1), 9.4, epsilon = 1e-12);
        assert_abs_diff_eq!(t.get(2, 1), 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(t.get(1, 2), 28.6, epsilon = 1e-12);
        assert_abs_diff_eq!(t.lambda, 88.0, epsilon = 1e-12);
    }

    #[test]
    fn mu_table_degenerate() {
        let f = FunnelFunction::exponential(3.0, 1.0, 0.1, 1.0, 0.1).unwrap();
        let t = mu_table(&ErrorChainParams::new(3.0, 1, 1).unwrap(), &f, 2.5);
        assert_eq!(t.mu, vec![vec![3.1]]);
        assert_eq!(t.lambda, 2.5);

        let t = mu_table(&ErrorChainParams::new(0.0, 4, 1).unwrap(), &f, 1.0);
        for i in 1..4 {
            for j in 0..4 - i {
                assert_eq!(t.get(i, j + 1), t.get(i + 1, j));
            }
        }
        assert_eq!(t.lambda, 1.0);
    }

    fn params_and_stack() -> impl Strategy<Value = (ErrorChainParams, DerivativeStack)> {
        (0.0f64..10.0, 1usize..=6, 1usize..=3).prop_flat_map(|(k, r, m)| {
            proptest::collection::vec(-1.0f64..1.0, r * m).prop_map(move |data| {
                (ErrorChainParams::new(k, r, m).unwrap(), DerivativeStack::new(r, m, data).unwrap())
            })
        })
    }

    proptest! {
        #[test]
        fn s_matrix_reproduces_stages((p, z) in params_and_stack()) {
            let s = s_matrix(&p);
            let stacked = &s * nalgebra::DVector::from_column_slice(z.as_slice());
            let stages = xi_all(&p, &z).unwrap().concat();
            for (a, b) in stacked.iter().zip(&stages) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn xi_is_linear((p, z) in params_and_stack(), a in -2.0f64..2.0, b in -2.0f64..2.0, seed in any::<u64>()) {
            let w: Vec<f64> = (0..z.as_slice().len())
                .map(|i| (((seed >> (i % 60)) & 0xff) as f64 / 128.0) - 1.0)
                .collect();
            let w = DerivativeStack::new(p.order(), p.dim(), w).unwrap();
            let combo: Vec<f64> = z.as_slice().iter().zip(w.as_slice()).map(|(x, y)| a * x + b * y).collect();
            let combo = DerivativeStack::new(p.order(), p.dim(), combo).unwrap();
            for i in 1..=p.order() {
                let lhs = xi_eval(&p, i, &combo).unwrap();
                let xz = xi_eval(&p, i, &z).unwrap();
                let xw = xi_eval(&p, i, &w).unwrap();
                let scale = 1.0 + (1.0 + p.k()).powi(i as i32);
                for c in 0..p.dim() {
                    prop_assert!((lhs[c] - (a * xz[c] + b * xw[c])).abs() <= 1e-11 * scale);
                }
            }
        }

        #[test]
        fn zero_stack_always_feasible(k in 0.0f64..10.0, r in 1usize..=6, m in 1usize..=3,
                                      a in 0.01f64..5.0, c in 0.01f64..1.0, alpha in 0.1f64..3.0, t in 0.0f64..10.0) {
            let f = FunnelFunction::exponential(a, 1.0, c, alpha, alpha * c * 0.5).unwrap();
            let p = ErrorChainParams::new(k, r, m).unwrap();
            prop_assert!(check_domain_d(t, &DerivativeStack::zeros(r, m), &f, &p).unwrap().feasible);
        }

        #[test]
        fn mu_recursion_identity(k in 0.0f64..10.0, r in 1usize..=8, bound in 0.0f64..5.0) {
            let f = FunnelFunction::exponential(3.0, 1.0, 0.1, 1.0, 0.1).unwrap();
            let p = ErrorChainParams::new(k, r, 1).unwrap();
            let t = mu_table(&p, &f, bound);
            for i in 1..r {
                for j in 0..r - i {
                    prop_assert_eq!(t.get(i, j + 1), t.get(i + 1, j) + k * t.get(i, j));
                }
            }
        }
    }
}
