//! Reference signals with analytic derivatives up to order r.

use std::f64::consts::FRAC_PI_2;

use crate::errchain::DerivativeStack;
use crate::{Error, Result};

/// Piecewise polynomial on `[knots[0], knots[n]]`; segment `i` holds
/// ascending-power coefficients in the local variable `t − knots[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialSpline {
    knots: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
}

fn poly_derivative_at(coeffs: &[f64], order: usize, x: f64) -> f64 {
    // Σ_{j ≥ order} c_j · j!/(j−order)! · x^{j−order}, Horner from the top
    let mut acc = 0.0;
    for j in (order..coeffs.len()).rev() {
        let falling: f64 = (0..order).map(|q| (j - q) as f64).product();
        acc = acc * x + coeffs[j] * falling;
    }
    acc
}

impl PolynomialSpline {
    pub fn new(knots: Vec<f64>, coefficients: Vec<Vec<f64>>) -> Result<Self> {
        if knots.len() < 2 || coefficients.len() != knots.len() - 1 {
            return Err(Error::config("spline needs n+1 knots and n coefficient rows"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("spline knots must be strictly increasing"));
        }
        if coefficients.iter().any(|c| c.is_empty() || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::config("spline coefficients must be nonempty and finite"));
        }
        Ok(Self { knots, coefficients })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Checks that derivatives `0…r−1` agree across interior knots (within
    /// `tol`), i.e. the spline is `C^{r−1}` and thus in `W^{r,∞}`.
    pub fn check_smoothness(&self, r: usize, tol: f64) -> Result<()> {
        for i in 1..self.coefficients.len() {
            let h = self.knots[i] - self.knots[i - 1];
            for order in 0..r {
                let left = poly_derivative_at(&self.coefficients[i - 1], order, h);
                let right = poly_derivative_at(&self.coefficients[i], order, 0.0);
                if (left - right).abs() > tol * (1.0 + left.abs()) {
                    return Err(Error::config(format!(
                        "spline derivative {order} jumps at knot {} ({left} vs {right})",
                        self.knots[i]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn derivative(&self, t: f64, order: usize) -> Result<f64> {
        let (a, b) = self.domain();
        if !(t >= a && t <= b) {
            return Err(Error::usage(format!("spline queried at t = {t} outside [{a}, {b}]")));
        }
        let seg = (self.knots.partition_point(|&k| k <= t).max(1) - 1).min(self.coefficients.len() - 1);
        Ok(poly_derivative_at(&self.coefficients[seg], order, t - self.knots[seg]))
    }

    /// Upper bound on `sup |p^{(order)}|` from the coefficient magnitudes.
    pub fn derivative_bound(&self, order: usize) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let h = self.knots[i + 1] - self.knots[i];
                let abs: Vec<f64> = c.iter().map(|v| v.abs()).collect();
                poly_derivative_at(&abs, order, h)
            })
            .fold(0.0, f64::max)
    }
}

/// Scalar reference broadcast to every output component.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum ReferenceSignal {
    #[default]
    Zero,
    /// `A cos(ω t + φ)`.
    Cosine { amplitude: f64, frequency: f64, phase: f64 },
    PolynomialSpline(PolynomialSpline),
}

impl ReferenceSignal {
    /// n-th time derivative at t.
    pub fn derivative(&self, t: f64, n: usize) -> Result<f64> {
        match self {
            ReferenceSignal::Zero => Ok(0.0),
            ReferenceSignal::Cosine { amplitude, frequency, phase } => Ok(amplitude
                * frequency.powi(n as i32)
                * (frequency * t + phase + n as f64 * FRAC_PI_2).cos()),
            ReferenceSignal::PolynomialSpline(s) => s.derivative(t, n),
        }
    }

    /// `‖y_ref^{(r)}‖∞`.
    pub fn derivative_bound(&self, r: usize) -> f64 {
        match self {
            ReferenceSignal::Zero => 0.0,
            ReferenceSignal::Cosine { amplitude, frequency, .. } => {
                amplitude.abs() * frequency.abs().powi(r as i32)
            }
            ReferenceSignal::PolynomialSpline(s) => s.derivative_bound(r),
        }
    }
}

/// Reference stack `(y_ref, …, y_ref^{(r−1)})` and `y_ref^{(r)}` at `t`.
pub fn ref_stack(reference: &ReferenceSignal, t: f64, r: usize, m: usize) -> Result<(DerivativeStack, Vec<f64>)> {
    let mut data = Vec::with_capacity(r * m);
    for j in 0..r {
        let v = reference.derivative(t, j)?;
        data.extend(std::iter::repeat(v).take(m));
    }
    let top = vec![reference.derivative(t, r)?; m];
    Ok((DerivativeStack::new(r, m, data)?, top))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn cosine() -> ReferenceSignal {
        ReferenceSignal::Cosine { amplitude: 1.0, frequency: 1.0, phase: 0.0 }
    }

    #[test]
    fn cosine_stack() {
        let (s, top) = ref_stack(&cosine(), 0.0, 3, 1).unwrap();
        assert_abs_diff_eq!(s.block(0)[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.block(1)[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.block(2)[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(top[0], 0.0, epsilon = 1e-15);
        assert_eq!(cosine().derivative_bound(3), 1.0);

        let (s, top) = ref_stack(&cosine(), PI / 2.0, 3, 1).unwrap();
        assert_abs_diff_eq!(s.block(0)[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.block(1)[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.block(2)[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(top[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cosine_derivatives_match_finite_differences() {
        let r = ReferenceSignal::Cosine { amplitude: 0.7, frequency: 2.0, phase: 0.3 };
        let h = 1e-5;
        for n in 0..4 {
            for t in [0.0, 0.4, 2.2] {
                let fd = (r.derivative(t + h, n).unwrap() - r.derivative(t - h, n).unwrap()) / (2.0 * h);
                assert_abs_diff_eq!(fd, r.derivative(t, n + 1).unwrap(), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn zero_spline() {
        let s = PolynomialSpline::new(vec![0.0, 5.0, 10.0], vec![vec![0.0; 4], vec![0.0; 4]]).unwrap();
        let r = ReferenceSignal::PolynomialSpline(s);
        let (st, top) = ref_stack(&r, 3.0, 3, 2).unwrap();
        assert_eq!(st, DerivativeStack::zeros(3, 2));
        assert_eq!(top, vec![0.0, 0.0]);
    }

    #[test]
    fn spline_out_of_range() {
        let s = PolynomialSpline::new(vec![0.0, 1.0], vec![vec![1.0, 2.0]]).unwrap();
        let r = ReferenceSignal::PolynomialSpline(s);
        assert!(matches!(ref_stack(&r, 1.5, 2, 1), Err(Error::Usage(_))));
        assert!(ref_stack(&r, 1.0, 2, 1).is_ok());
    }

    #[test]
    fn spline_smoothness() {
        // t² on [0,1] continued as 1 + 2(t−1) + (t−1)² is C^∞ across the knot
        let s = PolynomialSpline::new(vec![0.0, 1.0, 2.0], vec![vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 1.0]]).unwrap();
        assert!(s.check_smoothness(3, 1e-12).is_ok());
        assert_abs_diff_eq!(s.derivative(1.5, 1).unwrap(), 3.0, epsilon = 1e-15);
        assert_eq!(s.derivative_bound(2), 2.0);
        // a kink in the first derivative
        let kink = PolynomialSpline::new(vec![0.0, 1.0, 2.0], vec![vec![0.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert!(kink.check_smoothness(1, 1e-12).is_ok());
        assert!(kink.check_smoothness(2, 1e-12).is_err());
    }
}
