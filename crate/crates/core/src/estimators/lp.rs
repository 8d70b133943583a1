//! Ledoit–Péché nonlinear shrinkage of the sample spectrum.
//!
//! Each sample eigenvalue is replaced by
//! `ξ_k = λ_k / |1 − q − q λ_k G(λ_k − iε_k)|²`, where `G` is the empirical
//! Stieltjes transform `(1/p) Σ_j 1/(λ_j − z)` and `q = p/n`. The sample
//! eigenvectors are kept.

use num_complex::Complex64;

use crate::covariance::{CovarianceMatrix, Provenance};
use crate::error::{Error, Result};
use crate::estimators::EstimatorId;
use crate::spectral::{self, SpectralDecomposition};

/// Imaginary offset used at eigenvalue `lambda`: `p^(−1/2) · λ`, floored at
/// `1e-12 · λ_max` so null eigenvalues stay regular.
pub fn lp_epsilon(lambda: f64, p: usize, lambda_max: f64) -> f64 {
    (p as f64).powf(-0.5) * lambda.max(1e-12 * lambda_max)
}

/// Shrunk eigenvalues for a sample spectrum of dimension `p = eigenvalues.len()`.
pub fn lp_shrink(eigenvalues: &[f64], n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::param(format!("LP shrinkage needs n >= 2, got {n}")));
    }
    let p = eigenvalues.len();
    if p == 0 {
        return Ok(Vec::new());
    }
    let q = p as f64 / n as f64;
    let lambdas: Vec<f64> = eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let lambda_max = lambdas.iter().copied().fold(0.0, f64::max);
    if lambda_max == 0.0 {
        return Ok(vec![0.0; p]);
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let z = Complex64::new(lambda, -lp_epsilon(lambda, p, lambda_max));
            let g = spectral::stieltjes(z, &lambdas)?;
            let denom = (Complex64::new(1.0 - q, 0.0) - q * lambda * g).norm_sqr();
            if !(denom > 0.0) || !denom.is_finite() {
                return Err(Error::NumericDomain(format!(
                    "LP denominator vanished at eigenvalue {lambda:.3e}"
                )));
            }
            Ok(lambda / denom)
        })
        .collect()
}

/// Shrink the spectrum of an existing decomposition.
pub fn estimate_lp_from(
    dec: &SpectralDecomposition,
    n: usize,
) -> Result<(Vec<f64>, CovarianceMatrix)> {
    let xi = lp_shrink(dec.eigenvalues.as_slice(), n)?;
    let values = dec.reconstruct_with(&nalgebra::DVector::from_column_slice(&xi));
    let cov =
        CovarianceMatrix::from_psd_construction(values, Provenance::Estimator(EstimatorId::Lp))?;
    Ok((xi, cov))
}

pub fn estimate_lp(s: &CovarianceMatrix, n: usize) -> Result<CovarianceMatrix> {
    let dec = s.spectral()?;
    estimate_lp_from(&dec, n).map(|(_, cov)| cov)
}
