//! Objective functions over a single agent's response.

use serde::{Deserialize, Serialize};

/// A utility `f: R^N_+ → R`.
pub trait Utility: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
}

/// A differentiable concave utility.
pub trait SmoothUtility: Utility {
    fn gradient(&self, x: &[f64], out: &mut [f64]);
}

/// Floor applied to the first coordinate before differentiating `RootProduct`.
pub const ROOT_GRADIENT_FLOOR: f64 = 1e-6;

/// Built-in two-or-more-dimensional objectives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothObjective {
    /// `x_1·x_2`.
    Product,
    /// `Σ x_k`.
    Sum,
    /// `√x_1·x_2`.
    RootProduct,
    /// `wᵀx`, `w ≥ 0`.
    Linear { weights: Vec<f64> },
    /// `Π x_k^{a_k}` with `Σ a_k ≤ 1`.
    CobbDouglas { exponents: Vec<f64> },
}

impl SmoothObjective {
    /// Checks the objective is usable in dimension `n`.
    pub fn check(&self, n: usize) -> crate::Result<()> {
        let ok = match self {
            SmoothObjective::Product | SmoothObjective::RootProduct => n == 2,
            SmoothObjective::Sum => n >= 1,
            SmoothObjective::Linear { weights } => weights.len() == n && weights.iter().all(|w| *w >= 0.0),
            SmoothObjective::CobbDouglas { exponents } => {
                exponents.len() == n && exponents.iter().all(|a| *a > 0.0) && exponents.iter().sum::<f64>() <= 1.0 + 1e-12
            }
        };
        if ok {
            Ok(())
        } else {
            Err(crate::error::input_err(format!("objective {self:?} is not valid in dimension {n}")))
        }
    }

    /// The three agent objectives used by the reference scenario.
    pub fn reference_trio() -> Vec<SmoothObjective> {
        vec![SmoothObjective::Product, SmoothObjective::Sum, SmoothObjective::RootProduct]
    }
}

impl Utility for SmoothObjective {
    fn dim(&self) -> usize {
        match self {
            SmoothObjective::Product | SmoothObjective::RootProduct | SmoothObjective::Sum => 2,
            SmoothObjective::Linear { weights } => weights.len(),
            SmoothObjective::CobbDouglas { exponents } => exponents.len(),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            SmoothObjective::Product => x[0] * x[1],
            SmoothObjective::Sum => x.iter().sum(),
            SmoothObjective::RootProduct => x[0].max(0.0).sqrt() * x[1],
            SmoothObjective::Linear { weights } => crate::data::dot(weights, x),
            SmoothObjective::CobbDouglas { exponents } => {
                exponents.iter().zip(x).map(|(a, x)| x.max(0.0).powf(*a)).product()
            }
        }
    }
}

impl SmoothUtility for SmoothObjective {
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            SmoothObjective::Product => {
                out[0] = x[1];
                out[1] = x[0];
            }
            SmoothObjective::Sum => out.iter_mut().for_each(|g| *g = 1.0),
            SmoothObjective::RootProduct => {
                let x1 = x[0].max(ROOT_GRADIENT_FLOOR);
                out[0] = 0.5 * x[1] / x1.sqrt();
                out[1] = x1.sqrt();
            }
            SmoothObjective::Linear { weights } => out.copy_from_slice(weights),
            SmoothObjective::CobbDouglas { exponents } => {
                let f = self.value(x);
                for (k, a) in exponents.iter().enumerate() {
                    out[k] = a * f / x[k].max(ROOT_GRADIENT_FLOOR);
                }
            }
        }
    }
}
