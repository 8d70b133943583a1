use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimators::EstimatorId;
use crate::models::ModelKind;
use crate::spectral::{self, SpectralDecomposition};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Where a covariance matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Model(ModelKind),
    Sample,
    Estimator(EstimatorId),
    External,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Model(kind) => write!(f, "model-{}", kind.number()),
            Provenance::Sample => f.write_str("sample"),
            Provenance::Estimator(id) => write!(f, "estimator:{id}"),
            Provenance::External => f.write_str("external"),
        }
    }
}

/// Symmetric positive semidefinite matrix with a strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    values: DMatrix<f64>,
    provenance: Provenance,
}

impl CovarianceMatrix {
    /// Validates symmetry, positive semidefiniteness and the diagonal.
    pub fn new(values: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        check_shape(&values)?;
        let scale = values.amax().max(1.0);
        let asym = spectral::max_asymmetry(&values);
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        check_diagonal(&values)?;
        let dec = spectral::eigendecompose_sym(&values)?;
        check_psd(&dec)?;
        Ok(CovarianceMatrix { values, provenance })
    }

    /// Symmetrizes first, then validates.
    pub fn from_symmetrized(values: &DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        Self::new(spectral::symmetrize(values), provenance)
    }

    /// For constructions that are PSD by design (`A D Aᵀ` with `D ⪰ 0`,
    /// `Y Yᵀ`); only the cheap checks are run.
    pub(crate) fn from_psd_construction(
        values: DMatrix<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        check_shape(&values)?;
        let values = spectral::symmetrize(&values);
        check_diagonal(&values)?;
        Ok(CovarianceMatrix { values, provenance })
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }

    pub fn spectral(&self) -> Result<SpectralDecomposition> {
        spectral::eigendecompose_sym(&self.values)
    }
}

fn check_shape(values: &DMatrix<f64>) -> Result<()> {
    if !values.is_square() || values.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "covariance must be a non-empty square matrix, got {}x{}",
            values.nrows(),
            values.ncols()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericDomain(
            "covariance has non-finite entries".into(),
        ));
    }
    Ok(())
}

fn check_diagonal(values: &DMatrix<f64>) -> Result<()> {
    if let Some(i) = values.diagonal().iter().position(|&d| d <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "diagonal entry {i} is {}, expected a positive variance",
            values[(i, i)]
        )));
    }
    Ok(())
}

fn check_psd(dec: &SpectralDecomposition) -> Result<()> {
    let max = dec.eigenvalues[0];
    let min = dec.eigenvalues[dec.dim() - 1];
    if min < -PSD_TOL * max.max(0.0) {
        return Err(Error::NumericDomain(format!(
            "matrix is not positive semidefinite (eigenvalues {min:.3e} .. {max:.3e})"
        )));
    }
    Ok(())
}
