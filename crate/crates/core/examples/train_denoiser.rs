//! Trains a small covariance denoiser on simulated pairs and saves it.
//!
//! cargo run --release --example train_denoiser -- [out.cdnw]

use covden::denoiser::{
    build_training_set_simulation, save_weights, train, DenoiserConfig, DenoiserMode,
};
use covden::ModelSpec;

fn main() -> covden::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "denoiser.cdnw".into());
    let model = ModelSpec::block(vec![5, 7, 8, 10], 0.3);
    let set = build_training_set_simulation(&model, 60, 100, 1, DenoiserMode::Covariance)?;
    let config = DenoiserConfig {
        epochs: 8,
        ..DenoiserConfig::desk(30, DenoiserMode::Covariance, 1)
    };
    let outcome = train(&config, &set)?;
    for (epoch, (t, v)) in outcome.train_loss.iter().zip(&outcome.val_loss).enumerate() {
        println!("epoch {epoch:>2}  train {t:.5e}  val {v:.5e}");
    }
    save_weights(&outcome.weights, std::path::Path::new(&out))?;
    println!(
        "{} parameters written to {out}",
        outcome.weights.param_count()
    );
    Ok(())
}
