//! Frobenius and minimum-variance losses, and the Monte Carlo harness that
//! averages them over independent sample draws.

use log::{debug, info};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceMatrix;
use crate::data::finish_csv;
use crate::denoiser::dataset::build_from_generator;
use crate::denoiser::{train, DenoiserConfig, DenoiserMode, DenoiserWeights};
use crate::error::{Error, Result};
use crate::estimators::{estimate, Denoisers, EstimatorId};
use crate::models::{ModelSpec, SampleGenerator};

/// Size of the simulated training set for the learned estimators.
pub const TRAINING_SET_SIZE: usize = 100;

/// Relative eigenvalue floor used before inverting estimates.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPair {
    pub frobenius: f64,
    pub mv: f64,
}

fn check_dims(xi: &CovarianceMatrix, sigma: &CovarianceMatrix) -> Result<()> {
    if xi.dim() != sigma.dim() {
        return Err(Error::param(format!(
            "dimension mismatch: {} vs {}",
            xi.dim(),
            sigma.dim()
        )));
    }
    Ok(())
}

/// `(1/p)·‖Ξ − Σ‖²_F`.
pub fn frobenius_loss(xi: &CovarianceMatrix, sigma: &CovarianceMatrix) -> Result<f64> {
    check_dims(xi, sigma)?;
    let diff = xi.values() - sigma.values();
    Ok(diff.norm_squared() / xi.dim() as f64)
}

/// Inverse through the eigendecomposition. Eigenvalues at or below
/// `EIGEN_FLOOR·λmax` are an error when `floor` is false, and raised to the
/// floor otherwise; the second value counts the raised eigenvalues.
fn inverse(
    m: &CovarianceMatrix,
    floor: bool,
    which: &'static str,
) -> Result<(DMatrix<f64>, usize)> {
    let dec = m.spectral()?;
    let max = dec.eigenvalues[0];
    if !(max > 0.0) {
        return Err(Error::Singular { which });
    }
    let cutoff = EIGEN_FLOOR * max;
    let mut adjusted = 0;
    let inv = dec.eigenvalues.map(|l| {
        if l <= cutoff {
            adjusted += 1;
            1.0 / cutoff
        } else {
            1.0 / l
        }
    });
    if adjusted > 0 && !floor {
        return Err(Error::Singular { which });
    }
    Ok((dec.reconstruct_with(&inv), adjusted))
}

fn mv_from_inverses(xi: &CovarianceMatrix, sigma_inv: &DMatrix<f64>, xi_inv: &DMatrix<f64>) -> f64 {
    let p = xi.dim() as f64;
    let num = (sigma_inv * xi.values() * sigma_inv).trace() / p;
    let den = sigma_inv.trace() / p;
    num / (den * den) - 1.0 / (xi_inv.trace() / p)
}

/// `[Tr(Σ⁻¹ΞΣ⁻¹)/p] / [Tr(Σ⁻¹)/p]² − 1/[Tr(Ξ⁻¹)/p]`. Both arguments must be
/// invertible.
pub fn mv_loss(xi: &CovarianceMatrix, sigma: &CovarianceMatrix) -> Result<f64> {
    check_dims(xi, sigma)?;
    let (sigma_inv, _) = inverse(sigma, false, "population covariance (sigma)")?;
    let (xi_inv, _) = inverse(xi, false, "estimate (xi)")?;
    Ok(mv_from_inverses(xi, &sigma_inv, &xi_inv))
}

/// As [`mv_loss`], but near-zero eigenvalues of the estimate are floored at
/// `EIGEN_FLOOR·λmax` instead of rejected. Returns the loss and the number
/// of floored eigenvalues.
pub fn mv_loss_floored(xi: &CovarianceMatrix, sigma: &CovarianceMatrix) -> Result<(f64, usize)> {
    check_dims(xi, sigma)?;
    let (sigma_inv, _) = inverse(sigma, false, "population covariance (sigma)")?;
    let (xi_inv, adjusted) = inverse(xi, true, "estimate (xi)")?;
    Ok((mv_from_inverses(xi, &sigma_inv, &xi_inv), adjusted))
}

/// Expected naive Frobenius loss for Gaussian data,
/// `(Tr(Σ)² + Tr(Σ²)) / (n·p)`.
pub fn naive_frobenius_expectation(sigma: &CovarianceMatrix, n: usize) -> f64 {
    let tr = sigma.trace();
    (tr * tr + sigma.values().norm_squared()) / (n * sigma.dim()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub estimator: EstimatorId,
    pub mean_f: f64,
    pub se_f: f64,
    pub mean_mv: f64,
    pub se_mv: f64,
    pub failures: usize,
    /// Eigenvalues floored before inverting estimates, summed over draws.
    pub mv_floor_adjustments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub mode: DenoiserMode,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub model: ModelSpec,
    pub p: usize,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub denoiser: Option<DenoiserConfig>,
    pub training: Vec<TrainingSummary>,
    pub rows: Vec<EstimatorRow>,
}

impl MonteCarloReport {
    pub fn row(&self, id: EstimatorId) -> Option<&EstimatorRow> {
        self.rows.iter().find(|r| r.estimator == id)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record([
            "estimator",
            "mean_f",
            "se_f",
            "mean_mv",
            "se_mv",
            "failures",
        ])?;
        for r in &self.rows {
            wtr.write_record([
                r.estimator.name().to_string(),
                r.mean_f.to_string(),
                r.se_f.to_string(),
                r.mean_mv.to_string(),
                r.se_mv.to_string(),
                r.failures.to_string(),
            ])?;
        }
        finish_csv(wtr)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned text table of the means and standard errors.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "model {} (p={}, n={}, m={}, seed={})\n{:<10} {:>12} {:>12} {:>12} {:>12} {:>8}\n",
            self.model.kind.name(),
            self.p,
            self.n,
            self.m,
            self.seed,
            "estimator",
            "<F>",
            "se(F)",
            "<MV>",
            "se(MV)",
            "failed"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>8}\n",
                r.estimator.name(),
                r.mean_f,
                r.se_f,
                r.mean_mv,
                r.se_mv,
                r.failures
            ));
        }
        out
    }
}

/// Mean and standard error (sample standard deviation over `√k`).
fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

type DrawOutcome = Vec<Option<(LossPair, usize)>>;

/// Runs `m` realizations of `model` with `n` observations each and reports
/// the mean losses of every estimator. Realization `i` draws from stream `i`
/// of `seed`. Learned estimators need `denoiser`; the networks are trained
/// once on [`TRAINING_SET_SIZE`] draws from a disjoint set of streams.
pub fn run_monte_carlo(
    model: &ModelSpec,
    n: usize,
    m: usize,
    estimators: &[EstimatorId],
    seed: u64,
    denoiser: Option<&DenoiserConfig>,
) -> Result<MonteCarloReport> {
    if m == 0 {
        return Err(Error::param("Monte Carlo needs m >= 1"));
    }
    if estimators.is_empty() {
        return Err(Error::param("no estimators configured"));
    }
    let sigma = model.build()?;
    let generator = SampleGenerator::new(&sigma)?;

    let needs_cov = estimators.iter().any(|e| e.needs_covariance_net());
    let needs_eig = estimators.iter().any(|e| e.needs_eigenvector_net());
    if (needs_cov || needs_eig) && denoiser.is_none() {
        return Err(Error::param(
            "learned estimators need a denoiser configuration",
        ));
    }
    let mut training = Vec::new();
    let mut train_net = |mode: DenoiserMode| -> Result<DenoiserWeights> {
        let base = denoiser.expect("checked above");
        let config = DenoiserConfig {
            mode,
            input_size: sigma.dim(),
            ..base.clone()
        };
        let set = build_from_generator(&generator, n, TRAINING_SET_SIZE, seed, mode)?;
        info!(
            "training {mode} denoiser on {} simulated pairs",
            set.count()
        );
        let outcome = train(&config, &set)?;
        training.push(TrainingSummary {
            mode,
            train_loss: outcome.train_loss,
            val_loss: outcome.val_loss,
        });
        Ok(outcome.weights)
    };
    let cov_net = if needs_cov {
        Some(train_net(DenoiserMode::Covariance)?)
    } else {
        None
    };
    let eig_net = if needs_eig {
        Some(train_net(DenoiserMode::Eigenvectors)?)
    } else {
        None
    };
    let nets = Denoisers {
        covariance: cov_net.as_ref(),
        eigenvectors: eig_net.as_ref(),
    };

    let outcomes: Vec<Result<DrawOutcome>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let draw = generator.draw(n, seed, i as u64)?;
            Ok(estimators
                .iter()
                .map(|&id| {
                    let result = estimate(id, &draw.sample, n, nets).and_then(|xi| {
                        let f = frobenius_loss(&xi, &sigma)?;
                        let (mv, adjusted) = mv_loss_floored(&xi, &sigma)?;
                        if !f.is_finite() || !mv.is_finite() {
                            return Err(Error::NumericDomain(format!(
                                "non-finite loss for `{id}`"
                            )));
                        }
                        Ok((LossPair { frobenius: f, mv }, adjusted))
                    });
                    match result {
                        Ok(v) => Some(v),
                        Err(e) => {
                            debug!("realization {i}, estimator {id}: {e}");
                            None
                        }
                    }
                })
                .collect())
        })
        .collect();

    let mut per_estimator: Vec<(Vec<f64>, Vec<f64>, usize, usize)> =
        vec![(Vec::with_capacity(m), Vec::with_capacity(m), 0, 0); estimators.len()];
    for outcome in outcomes {
        for (slot, value) in per_estimator.iter_mut().zip(outcome?) {
            match value {
                Some((loss, adjusted)) => {
                    slot.0.push(loss.frobenius);
                    slot.1.push(loss.mv);
                    slot.3 += adjusted;
                }
                None => slot.2 += 1,
            }
        }
    }
    let rows = estimators
        .iter()
        .zip(per_estimator)
        .map(|(&estimator, (f, mv, failures, mv_floor_adjustments))| {
            let (mean_f, se_f) = mean_se(&f);
            let (mean_mv, se_mv) = mean_se(&mv);
            EstimatorRow {
                estimator,
                mean_f,
                se_f,
                mean_mv,
                se_mv,
                failures,
                mv_floor_adjustments,
            }
        })
        .collect();

    Ok(MonteCarloReport {
        model: model.clone(),
        p: sigma.dim(),
        n,
        m,
        seed,
        denoiser: denoiser.cloned(),
        training,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::Provenance;
    use nalgebra::DVector;

    fn cov(m: DMatrix<f64>) -> CovarianceMatrix {
        CovarianceMatrix::new(m, Provenance::External).unwrap()
    }

    #[test]
    fn frobenius_of_identity_shift() {
        let s = cov(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, 2.0, 3.0, 4.0,
        ])));
        let x = cov(s.values() + DMatrix::identity(4, 4));
        assert!((frobenius_loss(&x, &s).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_mv_is_zero() {
        let a = cov(DMatrix::from_element(1, 1, 2.5));
        let b = cov(DMatrix::from_element(1, 1, 0.3));
        assert!(mv_loss(&a, &b).unwrap().abs() < 1e-15);
    }

    #[test]
    fn singular_estimate_is_named() {
        let s = cov(DMatrix::identity(2, 2));
        let x = cov(DMatrix::from_element(2, 2, 1.0));
        match mv_loss(&x, &s) {
            Err(Error::Singular { which }) => assert!(which.contains("xi")),
            other => panic!("unexpected {other:?}"),
        }
        let (_, adjusted) = mv_loss_floored(&x, &s).unwrap();
        assert_eq!(adjusted, 1);
    }

    #[test]
    fn single_draw_mean_is_its_loss() {
        let model = ModelSpec::nested(5, 0.3);
        let r = run_monte_carlo(&model, 10, 1, &[EstimatorId::Naive], 3, None).unwrap();
        let sigma = model.build().unwrap();
        let draw = SampleGenerator::new(&sigma)
            .unwrap()
            .draw(10, 3, 0)
            .unwrap();
        assert_eq!(
            r.rows[0].mean_f,
            frobenius_loss(&draw.sample, &sigma).unwrap()
        );
        assert_eq!(r.rows[0].se_f, 0.0);
    }

    #[test]
    fn learned_estimators_need_config() {
        let model = ModelSpec::nested(4, 0.3);
        assert!(run_monte_carlo(&model, 10, 2, &[EstimatorId::Cnn], 0, None).is_err());
    }
}
