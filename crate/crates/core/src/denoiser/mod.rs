//! From-scratch residual convolutional denoiser for covariance and
//! eigenvector matrices: tensors, convolution with backpropagation, Adam
//! training, training-set builders and a checksummed weights format.

pub mod conv;
pub mod dataset;
pub mod io;
pub mod network;
pub mod tensor;
pub mod train;

pub use conv::{conv2d_same, ConvLayer};
pub use dataset::{
    align_columns, build_training_set_rolling, build_training_set_simulation,
    rolling_history_required, TrainingSet,
};
pub use io::{load_weights, save_weights};
pub use network::{DenoiserConfig, DenoiserMode, DenoiserWeights};
pub use tensor::Tensor;
pub use train::{train, TrainOutcome};

/// Analytic parameter gradient of the per-sample MSE on raw (already
/// normalized) row-major inputs. Exposed for gradient checking.
pub fn mse_gradient(
    weights: &DenoiserWeights,
    input: &[f64],
    target: &[f64],
) -> crate::Result<(f64, Vec<ConvLayer>)> {
    weights.loss_and_grad(input, target)
}

/// Per-sample MSE on normalized row-major inputs.
pub fn mse(weights: &DenoiserWeights, input: &[f64], target: &[f64]) -> crate::Result<f64> {
    let out = weights.forward_normalized(input)?;
    Ok(out
        .iter()
        .zip(target)
        .map(|(y, t)| (y - t) * (y - t))
        .sum::<f64>()
        / out.len() as f64)
}
