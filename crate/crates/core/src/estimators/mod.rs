//! The eight covariance estimators and the composition layer that chains a
//! first-step estimator into the hierarchical filter.

pub mod alca;
pub mod lp;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceMatrix, Provenance};
use crate::denoiser::DenoiserWeights;
use crate::error::{Error, Result};

pub use alca::{estimate_alca, Dendrogram, DendrogramNode, Linkage};
pub use lp::{estimate_lp, lp_shrink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EstimatorId {
    Naive,
    Lp,
    Cnn,
    Hybrid,
    Alca,
    TwoStepLp,
    TwoStepCnn,
    TwoStepHybrid,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 8] = [
        EstimatorId::Naive,
        EstimatorId::Lp,
        EstimatorId::Cnn,
        EstimatorId::Hybrid,
        EstimatorId::Alca,
        EstimatorId::TwoStepLp,
        EstimatorId::TwoStepCnn,
        EstimatorId::TwoStepHybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorId::Naive => "naive",
            EstimatorId::Lp => "lp",
            EstimatorId::Cnn => "cnn",
            EstimatorId::Hybrid => "hybrid",
            EstimatorId::Alca => "alca",
            EstimatorId::TwoStepLp => "2s-lp",
            EstimatorId::TwoStepCnn => "2s-cnn",
            EstimatorId::TwoStepHybrid => "2s-hybrid",
        }
    }

    /// Needs a covariance-mode network.
    pub fn needs_covariance_net(self) -> bool {
        matches!(self, EstimatorId::Cnn | EstimatorId::TwoStepCnn)
    }

    /// Needs an eigenvector-mode network.
    pub fn needs_eigenvector_net(self) -> bool {
        matches!(self, EstimatorId::Hybrid | EstimatorId::TwoStepHybrid)
    }

    pub fn needs_training(self) -> bool {
        self.needs_covariance_net() || self.needs_eigenvector_net()
    }

    pub fn parse_list(list: &str) -> Result<Vec<EstimatorId>> {
        list.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse())
            .collect()
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::param(format!("unknown estimator `{s}`")))
    }
}

impl From<EstimatorId> for String {
    fn from(id: EstimatorId) -> String {
        id.name().to_string()
    }
}

impl TryFrom<String> for EstimatorId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Trained networks available to the learned estimators.
#[derive(Debug, Clone, Copy, Default)]
pub struct Denoisers<'a> {
    pub covariance: Option<&'a DenoiserWeights>,
    pub eigenvectors: Option<&'a DenoiserWeights>,
}

pub fn estimate_naive(s: &CovarianceMatrix) -> CovarianceMatrix {
    s.clone()
        .with_provenance(Provenance::Estimator(EstimatorId::Naive))
}

pub fn estimate_cnn(s: &CovarianceMatrix, net: &DenoiserWeights) -> Result<CovarianceMatrix> {
    Ok(net
        .predict_covariance(s.values())?
        .with_provenance(Provenance::Estimator(EstimatorId::Cnn)))
}

/// `Ṽ diag(ξ) Ṽᵀ` where `Ṽ` are the network-denoised sample eigenvectors and
/// `ξ` the LP-shrunk sample eigenvalues.
pub fn estimate_hybrid(
    s: &CovarianceMatrix,
    n: usize,
    net: &DenoiserWeights,
) -> Result<CovarianceMatrix> {
    let dec = s.spectral()?;
    let xi = lp::lp_shrink(dec.eigenvalues.as_slice(), n)?;
    let denoised = net.predict_eigenvectors(&dec.eigenvectors)?;
    assemble_hybrid(&denoised, &xi)
}

pub fn assemble_hybrid(v_denoised: &DMatrix<f64>, xi_lp: &[f64]) -> Result<CovarianceMatrix> {
    let p = xi_lp.len();
    if v_denoised.nrows() != p || v_denoised.ncols() != p {
        return Err(Error::param(format!(
            "eigenvector matrix is {}x{} but {p} eigenvalues were given",
            v_denoised.nrows(),
            v_denoised.ncols()
        )));
    }
    if let Some(x) = xi_lp.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::param(format!(
            "shrunk eigenvalues must be nonnegative, got {x}"
        )));
    }
    let mut scaled = v_denoised.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= xi_lp[k];
    }
    let values = scaled * v_denoised.transpose();
    CovarianceMatrix::from_psd_construction(values, Provenance::Estimator(EstimatorId::Hybrid))
}

fn first_step(
    s: &CovarianceMatrix,
    n: usize,
    first: EstimatorId,
    nets: Denoisers<'_>,
) -> Result<CovarianceMatrix> {
    match first {
        EstimatorId::Lp => estimate_lp(s, n),
        EstimatorId::Cnn => estimate_cnn(s, require(nets.covariance, first)?),
        EstimatorId::Hybrid => estimate_hybrid(s, n, require(nets.eigenvectors, first)?),
        other => Err(Error::param(format!(
            "`{other}` cannot be the first step of a two-step estimator"
        ))),
    }
}

/// ALCA applied to the output of `first` (one of lp, cnn, hybrid).
pub fn estimate_two_step(
    s: &CovarianceMatrix,
    n: usize,
    first: EstimatorId,
    nets: Denoisers<'_>,
) -> Result<CovarianceMatrix> {
    let id = match first {
        EstimatorId::Lp => EstimatorId::TwoStepLp,
        EstimatorId::Cnn => EstimatorId::TwoStepCnn,
        EstimatorId::Hybrid => EstimatorId::TwoStepHybrid,
        other => {
            return Err(Error::param(format!(
                "`{other}` cannot be the first step of a two-step estimator"
            )))
        }
    };
    let step = first_step(s, n, first, nets)?;
    Ok(estimate_alca(&step)?.with_provenance(Provenance::Estimator(id)))
}

fn require(net: Option<&DenoiserWeights>, id: EstimatorId) -> Result<&DenoiserWeights> {
    net.ok_or_else(|| Error::param(format!("estimator `{id}` needs a trained network")))
}

/// Dispatch by id. `n` is the number of observations behind `s`.
pub fn estimate(
    id: EstimatorId,
    s: &CovarianceMatrix,
    n: usize,
    nets: Denoisers<'_>,
) -> Result<CovarianceMatrix> {
    match id {
        EstimatorId::Naive => Ok(estimate_naive(s)),
        EstimatorId::Lp | EstimatorId::Cnn | EstimatorId::Hybrid => {
            Ok(first_step(s, n, id, nets)?.with_provenance(Provenance::Estimator(id)))
        }
        EstimatorId::Alca => estimate_alca(s),
        EstimatorId::TwoStepLp => estimate_two_step(s, n, EstimatorId::Lp, nets),
        EstimatorId::TwoStepCnn => estimate_two_step(s, n, EstimatorId::Cnn, nets),
        EstimatorId::TwoStepHybrid => estimate_two_step(s, n, EstimatorId::Hybrid, nets),
    }
}
