//! Combines denoised eigenvectors with shrunk eigenvalues, then applies
//! hierarchical filtering on top.

use covden::denoiser::{build_training_set_simulation, train, DenoiserConfig, DenoiserMode};
use covden::estimators::{estimate, Denoisers};
use covden::evaluation::{frobenius_loss, mv_loss};
use covden::models::sample_covariance;
use covden::{EstimatorId, ModelSpec};

fn main() -> covden::Result<()> {
    let (model, n) = (ModelSpec::block(vec![4, 6, 10], 0.3), 40);
    let set = build_training_set_simulation(&model, n, 200, 11, DenoiserMode::Eigenvectors)?;
    let config = DenoiserConfig {
        epochs: 15,
        ..DenoiserConfig::desk(20, DenoiserMode::Eigenvectors, 11)
    };
    let net = train(&config, &set)?.weights;
    let nets = Denoisers {
        covariance: None,
        eigenvectors: Some(&net),
    };

    // Short training: the hybrid already helps the MV loss; Frobenius loss needs more.
    let sigma = model.build()?;
    let sample = sample_covariance(&sigma, n, 99)?.sample;
    for id in [
        EstimatorId::Naive,
        EstimatorId::Lp,
        EstimatorId::Hybrid,
        EstimatorId::TwoStepHybrid,
    ] {
        let est = estimate(id, &sample, n, nets)?;
        println!(
            "{:<10} F {:.4}  MV {:.4}",
            id.name(),
            frobenius_loss(&est, &sigma)?,
            mv_loss(&est, &sigma)?
        );
    }
    Ok(())
}
