use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::conv::ConvLayer;
use super::dataset::TrainingSet;
use super::network::{round_to_f32, to_row_major, DenoiserConfig, DenoiserMode, DenoiserWeights};
use crate::error::{Error, Result};
use crate::rng;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Trained weights and the loss curves. Entry 0 of each curve is measured
/// before the first update, entry `e` after epoch `e`.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: DenoiserWeights,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(params: usize) -> Self {
        Adam {
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    fn step(&mut self, layers: &mut [ConvLayer], grads: &[ConvLayer], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let mut idx = 0;
        for (layer, grad) in layers.iter_mut().zip(grads) {
            let pairs = layer
                .kernel
                .data_mut()
                .iter_mut()
                .zip(grad.kernel.data())
                .chain(layer.bias.iter_mut().zip(&grad.bias));
            for (w, g) in pairs {
                let m = &mut self.m[idx];
                let v = &mut self.v[idx];
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let update = lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                *w = round_to_f32(*w - update);
                idx += 1;
            }
        }
    }
}

/// Number of held-out samples at the end of the set.
pub fn validation_count(count: usize, fraction: f64) -> usize {
    (count as f64 * fraction).floor() as usize
}

fn accumulate(total: &mut [ConvLayer], grads: &[ConvLayer], scale: f64) {
    for (t, g) in total.iter_mut().zip(grads) {
        for (a, b) in t.kernel.data_mut().iter_mut().zip(g.kernel.data()) {
            *a += scale * b;
        }
        for (a, b) in t.bias.iter_mut().zip(&g.bias) {
            *a += scale * b;
        }
    }
}

fn mean_loss(weights: &DenoiserWeights, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if inputs.is_empty() {
        return Ok(f64::NAN);
    }
    let losses = inputs
        .par_iter()
        .zip(targets.par_iter())
        .map(|(x, t)| {
            let out = weights.forward_normalized(x)?;
            Ok(out
                .iter()
                .zip(t)
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>()
                / out.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Adam on the mean squared error between network output and target.
///
/// The last `validation_fraction` of the set is held out. Training order is
/// shuffled each epoch from the seed; per-sample gradients within a batch are
/// computed in parallel and summed in index order, so the result does not
/// depend on thread scheduling.
pub fn train(config: &DenoiserConfig, data: &TrainingSet) -> Result<TrainOutcome> {
    config.validate()?;
    let p = config.input_size;
    if data.mode != config.mode {
        return Err(Error::param(format!(
            "training set is in {} mode, config in {}",
            data.mode, config.mode
        )));
    }
    if let Some(m) = data
        .inputs
        .iter()
        .chain(&data.targets)
        .find(|m| m.nrows() != p || m.ncols() != p)
    {
        return Err(Error::param(format!(
            "training matrices must be {p}x{p}, found {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let count = data.count();
    let n_val = validation_count(count, config.validation_fraction);
    let n_train = count - n_val;
    if n_train == 0 {
        return Err(Error::param("empty training split"));
    }

    let normalizer = match config.mode {
        DenoiserMode::Covariance => {
            let mean_diag = data.inputs[..n_train]
                .iter()
                .map(|m| m.trace())
                .sum::<f64>()
                / (n_train * p) as f64;
            if !(mean_diag > 0.0) || !mean_diag.is_finite() {
                return Err(Error::DegenerateVariance(format!(
                    "mean training variance is {mean_diag}"
                )));
            }
            mean_diag
        }
        DenoiserMode::Eigenvectors => 1.0,
    };
    let scale = 1.0 / normalizer;
    let inputs: Vec<Vec<f64>> = data.inputs.iter().map(|m| to_row_major(m, scale)).collect();
    let targets: Vec<Vec<f64>> = data
        .targets
        .iter()
        .map(|m| to_row_major(m, scale))
        .collect();
    let (train_x, val_x) = inputs.split_at(n_train);
    let (train_t, val_t) = targets.split_at(n_train);

    let mut weights = DenoiserWeights::init(config)?;
    weights.normalizer = normalizer;
    let mut adam = Adam::new(weights.param_count());
    let mut shuffle_rng = rng::stream_rng(config.seed, rng::NETWORK_STREAM + 1);
    let mut order: Vec<usize> = (0..n_train).collect();

    let mut train_loss = vec![mean_loss(&weights, train_x, train_t)?];
    let mut val_loss = Vec::new();
    if n_val > 0 {
        val_loss.push(mean_loss(&weights, val_x, val_t)?);
    }

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| weights.loss_and_grad(&train_x[i], &train_t[i]))
                .collect::<Result<Vec<_>>>()?;
            let mut total = weights.zero_grads();
            let inv = 1.0 / batch.len() as f64;
            for (loss, grads) in &results {
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        layer: format!("loss (epoch {})", epoch + 1),
                    });
                }
                accumulate(&mut total, grads, inv);
            }
            adam.step(&mut weights.layers, &total, config.learning_rate);
        }
        let tl = mean_loss(&weights, train_x, train_t)?;
        if !tl.is_finite() {
            return Err(Error::NonFinite {
                layer: format!("loss (epoch {})", epoch + 1),
            });
        }
        log::debug!("epoch {}: train mse {tl:.6e}", epoch + 1);
        train_loss.push(tl);
        if n_val > 0 {
            val_loss.push(mean_loss(&weights, val_x, val_t)?);
        }
    }
    Ok(TrainOutcome {
        weights,
        train_loss,
        val_loss,
    })
}
