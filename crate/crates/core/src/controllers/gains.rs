use serde::{Deserialize, Serialize};

/// The outer map `N: ℝ≥0 → ℝ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NFunction {
    /// `N(s) = −s`; stabilising when the high-frequency gain is positive.
    #[default]
    NegIdentity,
    /// `N(s) = s cos s`, surjective onto ℝ.
    Nussbaum,
}

impl NFunction {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            NFunction::NegIdentity => -s,
            NFunction::Nussbaum => s * s.cos(),
        }
    }

    pub fn is_surjective(self) -> bool {
        matches!(self, NFunction::Nussbaum)
    }
}

/// The bijection `γ: [0, 1) → [1, ∞)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    /// `γ(s) = 1 / (1 − s)`.
    #[default]
    Reciprocal,
}

impl Gamma {
    /// `None` outside `[0, 1)`.
    pub fn eval(self, s: f64) -> Option<f64> {
        if !(0.0..1.0).contains(&s) {
            return None;
        }
        match self {
            Gamma::Reciprocal => Some(1.0 / (1.0 - s)),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainFunctions {
    pub n: NFunction,
    pub gamma: Gamma,
}

impl GainFunctions {
    pub fn new(n: NFunction, gamma: Gamma) -> Self {
        Self { n, gamma }
    }

    /// `N(γ(w))`, or `None` when `w ∉ [0, 1)`.
    pub fn gain(&self, w: f64) -> Option<f64> {
        self.gamma.eval(w).map(|g| self.n.eval(g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_domain() {
        assert_eq!(Gamma::Reciprocal.eval(0.0), Some(1.0));
        assert_eq!(Gamma::Reciprocal.eval(0.5), Some(2.0));
        assert_eq!(Gamma::Reciprocal.eval(1.0), None);
        assert_eq!(Gamma::Reciprocal.eval(-0.1), None);
        assert!(Gamma::Reciprocal.eval(1.0 - 1e-12).unwrap() > 1e11);
    }

    #[test]
    fn n_functions() {
        assert_eq!(NFunction::NegIdentity.eval(2.0), -2.0);
        assert!(!NFunction::NegIdentity.is_surjective());
        assert!(NFunction::Nussbaum.is_surjective());
        let pi = std::f64::consts::PI;
        assert!((NFunction::Nussbaum.eval(pi) + pi).abs() < 1e-12);
        assert!((NFunction::Nussbaum.eval(2.0 * pi) - 2.0 * pi).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn gamma_strictly_increasing(a in 0.0f64..0.999, b in 0.0f64..0.999) {
            prop_assume!(a < b);
            prop_assert!(Gamma::Reciprocal.eval(a).unwrap() < Gamma::Reciprocal.eval(b).unwrap());
        }

        #[test]
        fn gamma_at_least_one(s in 0.0f64..0.999_999) {
            prop_assert!(Gamma::Reciprocal.eval(s).unwrap() >= 1.0);
        }
    }
}
