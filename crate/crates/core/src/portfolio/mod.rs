//! Minimum-variance allocation and performance metrics.

pub mod metrics;
pub mod qp;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::covariance::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::spectral;

pub use metrics::{
    max_drawdown, portfolio_metrics, turnover, turnover_from_legs, wealth_path, PerformanceMetrics,
};
pub use qp::{kkt_residual, solve_long_only_mvp, QpSolution};

/// Portfolio weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    weights: Vec<f64>,
    long_only: bool,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>, long_only: bool) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        if long_only {
            if let Some(w) = weights.iter().find(|w| **w < -1e-10) {
                return Err(Error::InvalidInput(format!(
                    "long-only weights contain {w}"
                )));
            }
        }
        Ok(WeightVector { weights, long_only })
    }

    pub fn uniform(p: usize) -> Self {
        WeightVector {
            weights: vec![1.0 / p as f64; p],
            long_only: true,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn long_only(&self) -> bool {
        self.long_only
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn variance(&self, sigma: &DMatrix<f64>) -> f64 {
        let w = DVector::from_column_slice(&self.weights);
        (w.transpose() * sigma * &w)[(0, 0)]
    }
}

/// `w = Σ⁻¹1 / (1ᵀΣ⁻¹1)`. Matrices with `λ_min ≤ 1e-12 λ_max` are
/// rejected as singular.
pub fn mvp_weights(sigma: &CovarianceMatrix) -> Result<WeightVector> {
    let dec = sigma.spectral()?;
    let max = dec.eigenvalues[0];
    if dec.eigenvalues[dec.dim() - 1] <= 1e-12 * max {
        return Err(Error::Singular {
            which: "covariance passed to the minimum-variance portfolio",
        });
    }
    let p = sigma.dim();
    let ones = DVector::from_element(p, 1.0);
    let v = &dec.eigenvectors;
    let proj = v.transpose() * &ones;
    let scaled = DVector::from_iterator(
        p,
        proj.iter().zip(dec.eigenvalues.iter()).map(|(a, l)| a / l),
    );
    let x = v * scaled;
    let total = x.sum();
    WeightVector::new(x.iter().map(|v| v / total).collect(), false)
}

/// Long-only minimum-variance weights.
pub fn mvp_plus_weights(sigma: &CovarianceMatrix) -> Result<WeightVector> {
    let sym = spectral::symmetrize(sigma.values());
    let sol = solve_long_only_mvp(&sym)?;
    WeightVector::new(sol.weights, true)
}
