//! Truncated Taylor jets in time.
//!
//! A [`Jet`] of order p carries `(f, ḟ, …, f^{(p)})` at one instant. The
//! coefficients are raw derivatives (not divided by factorials) so a jet can
//! be seeded directly from a derivative stack.

use std::ops::{Add, Mul, Neg, Sub};

use crate::errchain::{binomial, DerivativeStack};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    d: Vec<f64>,
}

impl Jet {
    /// From raw derivatives `(f, ḟ, …)`; at least the value is required.
    pub fn new(derivatives: Vec<f64>) -> Self {
        assert!(!derivatives.is_empty(), "a jet carries at least its value");
        Self { d: derivatives }
    }

    pub fn constant(value: f64, order: usize) -> Self {
        let mut d = vec![0.0; order + 1];
        d[0] = value;
        Self { d }
    }

    pub fn order(&self) -> usize {
        self.d.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.d[0]
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.d
    }

    /// Time derivative as a jet of one order less; `None` for order 0.
    pub fn derivative(&self) -> Option<Jet> {
        (self.d.len() > 1).then(|| Jet { d: self.d[1..].to_vec() })
    }

    pub fn truncate(&self, order: usize) -> Jet {
        Jet { d: self.d[..=order.min(self.order())].to_vec() }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet { d: self.d.iter().map(|v| v * s).collect() }
    }

    /// `1 / self`; `None` if the value is zero.
    pub fn recip(&self) -> Option<Jet> {
        let g0 = self.d[0];
        if g0 == 0.0 {
            return None;
        }
        // g h = 1  ⇒  h⁽ⁿ⁾ = −(1/g) Σ_{k=1}^{n} C(n,k) g⁽ᵏ⁾ h⁽ⁿ⁻ᵏ⁾
        let mut h = vec![0.0; self.d.len()];
        h[0] = 1.0 / g0;
        for n in 1..self.d.len() {
            let s: f64 = (1..=n).map(|k| binomial(n, k) as f64 * self.d[k] * h[n - k]).sum();
            h[n] = -s / g0;
        }
        Some(Jet { d: h })
    }

    pub fn div(&self, other: &Jet) -> Option<Jet> {
        other.recip().map(|r| self * &r)
    }
}

impl Add for &Jet {
    type Output = Jet;

    fn add(self, rhs: &Jet) -> Jet {
        Jet { d: self.d.iter().zip(&rhs.d).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Jet {
    type Output = Jet;

    fn sub(self, rhs: &Jet) -> Jet {
        Jet { d: self.d.iter().zip(&rhs.d).map(|(a, b)| a - b).collect() }
    }
}

impl Neg for &Jet {
    type Output = Jet;

    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Leibniz rule; the result has the smaller of the two orders.
impl Mul for &Jet {
    type Output = Jet;

    fn mul(self, rhs: &Jet) -> Jet {
        let p = self.order().min(rhs.order());
        let d = (0..=p)
            .map(|n| (0..=n).map(|k| binomial(n, k) as f64 * self.d[k] * rhs.d[n - k]).sum())
            .collect();
        Jet { d }
    }
}

/// One jet of order `order` per output component, seeded from the blocks of
/// the stack.
pub fn jet_lift(e_stack: &DerivativeStack, order: usize) -> Result<Vec<Jet>> {
    if order >= e_stack.order() {
        return Err(Error::usage(format!(
            "jet order {order} needs {} derivative blocks, stack has {}",
            order + 1,
            e_stack.order()
        )));
    }
    Ok((0..e_stack.dim())
        .map(|c| Jet { d: (0..=order).map(|j| e_stack.block(j)[c]).collect() })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn lift_seeds_blocks() {
        let jets = jet_lift(&DerivativeStack::scalar(&[1.0, 2.0, 3.0]), 2).unwrap();
        assert_eq!(jets, vec![Jet::new(vec![1.0, 2.0, 3.0])]);
        assert!(jet_lift(&DerivativeStack::scalar(&[1.0, 2.0, 3.0]), 3).is_err());
        let two = DerivativeStack::from_blocks(&[vec![1.0, 5.0], vec![2.0, 6.0]]).unwrap();
        let jets = jet_lift(&two, 1).unwrap();
        assert_eq!(jets[1].derivatives(), &[5.0, 6.0]);
    }

    #[test]
    fn product_with_constant_factor() {
        let a = Jet::new(vec![1.0, 1.0, 0.0]);
        let b = Jet::new(vec![1.0, 0.0, 0.0]);
        assert_eq!((&a * &b).derivatives(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn reciprocal_gain() {
        let x = Jet::new(vec![0.01, 0.2]);
        let g = (&Jet::constant(1.0, 1) - &x).recip().unwrap();
        assert_abs_diff_eq!(g.value(), 1.0 / 0.99, epsilon = 1e-15);
        assert_abs_diff_eq!(g.derivatives()[1], 0.2 / (0.99 * 0.99), epsilon = 1e-14);
        assert_abs_diff_eq!(g.derivatives()[1], 0.204061, epsilon = 1e-6);
        assert!(Jet::constant(0.0, 2).recip().is_none());
    }

    #[test]
    fn derivative_shifts() {
        let j = Jet::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(j.derivative().unwrap().derivatives(), &[2.0, 3.0]);
        assert!(Jet::constant(1.0, 0).derivative().is_none());
        assert_eq!(j.truncate(1).derivatives(), &[1.0, 2.0]);
    }

    /// Raw derivatives of a polynomial `Σ c_i t^i` at `t`.
    fn poly_jet(c: &[f64], t: f64, order: usize) -> Vec<f64> {
        let mut cur = c.to_vec();
        let mut out = Vec::new();
        for _ in 0..=order {
            out.push(cur.iter().rev().fold(0.0, |acc, a| acc * t + a));
            cur = cur.iter().enumerate().skip(1).map(|(i, a)| i as f64 * a).collect();
            if cur.is_empty() {
                cur.push(0.0);
            }
        }
        out
    }

    fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    proptest! {
        #[test]
        fn product_matches_polynomial_product(
            a in proptest::collection::vec(-2.0f64..2.0, 1..6),
            b in proptest::collection::vec(-2.0f64..2.0, 1..6),
            t in -1.0f64..1.0,
        ) {
            let order = 4;
            let ja = Jet::new(poly_jet(&a, t, order));
            let jb = Jet::new(poly_jet(&b, t, order));
            let expected = poly_jet(&poly_mul(&a, &b), t, order);
            for (x, y) in (&ja * &jb).derivatives().iter().zip(&expected) {
                prop_assert!(rel_close(*x, *y, 1e-10));
            }
        }

        #[test]
        fn reciprocal_inverts_product(
            a in proptest::collection::vec(-1.0f64..1.0, 1..6),
            t in -1.0f64..1.0,
        ) {
            let mut a = a;
            a[0] += 3.0; // keep the value away from zero
            let ja = Jet::new(poly_jet(&a, t, 4));
            prop_assume!(ja.value().abs() > 0.5);
            let prod = &ja * &ja.recip().unwrap();
            prop_assert!(rel_close(prod.value(), 1.0, 1e-10));
            for d in &prod.derivatives()[1..] {
                prop_assert!(d.abs() <= 1e-10 * (1.0 + ja.derivatives().iter().map(|v| v.abs()).sum::<f64>().powi(4)));
            }
        }

        #[test]
        fn sum_and_derivative_commute(
            a in proptest::collection::vec(-2.0f64..2.0, 1..6),
            b in proptest::collection::vec(-2.0f64..2.0, 1..6),
            t in -1.0f64..1.0,
        ) {
            let ja = Jet::new(poly_jet(&a, t, 4));
            let jb = Jet::new(poly_jet(&b, t, 4));
            let lhs = (&ja + &jb).derivative().unwrap();
            let rhs = &ja.derivative().unwrap() + &jb.derivative().unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
