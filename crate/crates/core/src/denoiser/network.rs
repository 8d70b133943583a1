//! Residual convolutional network: a ReLU stem convolution, a stack of
//! residual blocks (conv + ReLU, linear conv, skip add, ReLU) and a linear
//! single-channel head that maps the feature maps back to a `p x p` matrix.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::conv::{self, ConvLayer};
use crate::covariance::{CovarianceMatrix, Provenance};
use crate::error::{Error, Result};
use crate::rng;
use crate::spectral;

/// What the network is trained to denoise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenoiserMode {
    /// Sample covariance in, population covariance out; symmetrized and
    /// PSD-projected at prediction time.
    Covariance,
    /// Sample eigenvector matrix in, denoised eigenvectors out; returned raw.
    Eigenvectors,
}

impl fmt::Display for DenoiserMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenoiserMode::Covariance => "covariance",
            DenoiserMode::Eigenvectors => "eigenvectors",
        })
    }
}

impl FromStr for DenoiserMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "covariance" => Ok(DenoiserMode::Covariance),
            "eigenvectors" => Ok(DenoiserMode::Eigenvectors),
            other => Err(Error::param(format!("unknown denoiser mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub input_size: usize,
    pub num_blocks: usize,
    pub num_filters: usize,
    pub kernel: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub mode: DenoiserMode,
}

impl DenoiserConfig {
    /// Ten blocks of 64 3x3 filters, Adam at 1e-3, batches of 16 for ten
    /// epochs, 20% held out.
    pub fn reference(input_size: usize, mode: DenoiserMode, seed: u64) -> Self {
        DenoiserConfig {
            input_size,
            num_blocks: 10,
            num_filters: 64,
            kernel: 3,
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 10,
            validation_fraction: 0.2,
            seed,
            mode,
        }
    }

    /// Four blocks of 16 filters; otherwise the same hyperparameters.
    pub fn desk(input_size: usize, mode: DenoiserMode, seed: u64) -> Self {
        DenoiserConfig {
            num_blocks: 4,
            num_filters: 16,
            ..Self::reference(input_size, mode, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::param("denoiser input size must be positive"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::param(format!(
                "kernel size must be odd, got {}",
                self.kernel
            )));
        }
        if self.num_filters == 0 || self.batch_size == 0 {
            return Err(Error::param("filters and batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::param(format!(
                "validation fraction must lie in [0,1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::param(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        2 * self.num_blocks + 2
    }
}

/// All trainable tensors plus the architecture and the input scale.
///
/// Layers are stored in declaration order: stem, then `conv1`/`conv2` of
/// each block, then the head.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserWeights {
    pub config: DenoiserConfig,
    pub layers: Vec<ConvLayer>,
    /// Inputs are divided by this before the forward pass and outputs
    /// multiplied by it afterwards.
    pub normalizer: f64,
}

/// Intermediate activations of one forward pass.
pub(crate) struct Trace {
    /// Input to each block; the last entry feeds the head.
    xs: Vec<Vec<f64>>,
    /// ReLU output of each block's first convolution.
    hs: Vec<Vec<f64>>,
}

pub(crate) fn layer_name(index: usize, num_blocks: usize) -> String {
    if index == 0 {
        "stem".to_string()
    } else if index == 2 * num_blocks + 1 {
        "head".to_string()
    } else {
        format!("block{}.conv{}", (index - 1) / 2, (index - 1) % 2 + 1)
    }
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn check_finite(v: &[f64], index: usize, num_blocks: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            layer: layer_name(index, num_blocks),
        })
    }
}

pub(crate) fn round_to_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl DenoiserWeights {
    /// He-normal kernels (`std = sqrt(2 / fan_in)`), zero biases, drawn from
    /// the network stream of `config.seed` and rounded to f32.
    pub fn init(config: &DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream_rng(config.seed, rng::NETWORK_STREAM);
        let (f, k) = (config.num_filters, config.kernel);
        let mut shapes = vec![(f, 1)];
        for _ in 0..config.num_blocks {
            shapes.push((f, f));
            shapes.push((f, f));
        }
        shapes.push((1, f));
        let layers = shapes
            .into_iter()
            .map(|(cout, cin)| {
                let mut layer = ConvLayer::zeros(cout, cin, k);
                let std = (2.0 / (cin * k * k) as f64).sqrt();
                for w in layer.kernel.data_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *w = round_to_f32(z * std);
                }
                layer
            })
            .collect();
        Ok(DenoiserWeights {
            config: config.clone(),
            layers,
            normalizer: 1.0,
        })
    }

    /// Zero kernels and biases with the architecture of `config`.
    pub fn zeros(config: &DenoiserConfig) -> Result<Self> {
        let mut w = Self::init(config)?;
        for layer in &mut w.layers {
            layer.kernel.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(w)
    }

    pub fn num_blocks(&self) -> usize {
        self.config.num_blocks
    }

    pub fn stem(&self) -> &ConvLayer {
        &self.layers[0]
    }

    /// `(conv1, conv2)` of residual block `b`.
    pub fn block(&self, b: usize) -> (&ConvLayer, &ConvLayer) {
        (&self.layers[1 + 2 * b], &self.layers[2 + 2 * b])
    }

    pub fn head(&self) -> &ConvLayer {
        &self.layers[self.layers.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    pub(crate) fn forward_trace(&self, input: &[f64]) -> Result<(Vec<f64>, Trace)> {
        let p = self.config.input_size;
        let nb = self.num_blocks();
        if input.len() != p * p {
            return Err(Error::param(format!(
                "network expects a {p}x{p} input, got {} values",
                input.len()
            )));
        }
        let mut x = conv::forward_single(self.stem(), input, p, p);
        relu_in_place(&mut x);
        check_finite(&x, 0, nb)?;
        let mut xs = Vec::with_capacity(nb + 1);
        let mut hs = Vec::with_capacity(nb);
        for b in 0..nb {
            let (c1, c2) = self.block(b);
            let mut h = conv::forward_single(c1, &x, p, p);
            relu_in_place(&mut h);
            check_finite(&h, 1 + 2 * b, nb)?;
            let mut s = conv::forward_single(c2, &h, p, p);
            for (sv, xv) in s.iter_mut().zip(&x) {
                *sv += xv;
            }
            relu_in_place(&mut s);
            check_finite(&s, 2 + 2 * b, nb)?;
            hs.push(h);
            xs.push(std::mem::replace(&mut x, s));
        }
        let out = conv::forward_single(self.head(), &x, p, p);
        check_finite(&out, 2 * nb + 1, nb)?;
        xs.push(x);
        Ok((out, Trace { xs, hs }))
    }

    /// Network output for a normalized row-major `p x p` input.
    pub(crate) fn forward_normalized(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_trace(input).map(|(out, _)| out)
    }

    /// Backpropagate `grad_out` (gradient w.r.t. the head output) and add
    /// the parameter gradients to `grads`.
    pub(crate) fn backward(
        &self,
        input: &[f64],
        trace: &Trace,
        grad_out: &[f64],
        grads: &mut [ConvLayer],
    ) {
        let p = self.config.input_size;
        let nb = self.num_blocks();
        let last = grads.len() - 1;
        let mut g = conv::backward_single(
            self.head(),
            &trace.xs[nb],
            grad_out,
            p,
            p,
            &mut grads[last],
            true,
        );
        for b in (0..nb).rev() {
            // Through the block's output ReLU.
            for (gv, xv) in g.iter_mut().zip(&trace.xs[b + 1]) {
                if *xv <= 0.0 {
                    *gv = 0.0;
                }
            }
            let (c1, c2) = self.block(b);
            let (left, right) = grads.split_at_mut(2 + 2 * b);
            let mut gh = conv::backward_single(c2, &trace.hs[b], &g, p, p, &mut right[0], true);
            for (gv, hv) in gh.iter_mut().zip(&trace.hs[b]) {
                if *hv <= 0.0 {
                    *gv = 0.0;
                }
            }
            let gx = conv::backward_single(c1, &trace.xs[b], &gh, p, p, &mut left[1 + 2 * b], true);
            for (gv, v) in g.iter_mut().zip(gx) {
                *gv += v;
            }
        }
        for (gv, xv) in g.iter_mut().zip(&trace.xs[0]) {
            if *xv <= 0.0 {
                *gv = 0.0;
            }
        }
        conv::backward_single(self.stem(), input, &g, p, p, &mut grads[0], false);
    }

    pub(crate) fn zero_grads(&self) -> Vec<ConvLayer> {
        self.layers
            .iter()
            .map(|l| ConvLayer::zeros(l.out_channels(), l.in_channels(), l.size()))
            .collect()
    }

    /// Mean squared error of one normalized pair and its parameter gradient.
    pub(crate) fn loss_and_grad(
        &self,
        input: &[f64],
        target: &[f64],
    ) -> Result<(f64, Vec<ConvLayer>)> {
        let (out, trace) = self.forward_trace(input)?;
        let count = out.len() as f64;
        let mut loss = 0.0;
        let grad_out: Vec<f64> = out
            .iter()
            .zip(target)
            .map(|(y, t)| {
                let d = y - t;
                loss += d * d;
                2.0 * d / count
            })
            .collect();
        let mut grads = self.zero_grads();
        self.backward(input, &trace, &grad_out, &mut grads);
        Ok((loss / count, grads))
    }

    /// Scaled network output, before any mode-specific post-processing.
    pub fn forward_raw(&self, input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let p = self.config.input_size;
        if input.nrows() != p || input.ncols() != p {
            return Err(Error::param(format!(
                "network expects a {p}x{p} matrix, got {}x{}",
                input.nrows(),
                input.ncols()
            )));
        }
        let scaled = to_row_major(input, 1.0 / self.normalizer);
        let out = self.forward_normalized(&scaled)?;
        Ok(from_row_major(p, &out, self.normalizer))
    }

    /// Full prediction: covariance mode symmetrizes and projects onto the PSD
    /// cone, eigenvector mode returns the raw output.
    pub fn forward(&self, input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let raw = self.forward_raw(input)?;
        match self.config.mode {
            DenoiserMode::Eigenvectors => Ok(raw),
            DenoiserMode::Covariance => {
                let floor = 1e-10 * self.normalizer.abs().max(f64::MIN_POSITIVE);
                spectral::psd_project(&raw, floor)
            }
        }
    }

    pub fn predict_covariance(&self, s: &DMatrix<f64>) -> Result<CovarianceMatrix> {
        if self.config.mode != DenoiserMode::Covariance {
            return Err(Error::param(
                "network was trained on eigenvectors, not covariances",
            ));
        }
        CovarianceMatrix::from_psd_construction(self.forward(s)?, Provenance::External)
    }

    pub fn predict_eigenvectors(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.config.mode != DenoiserMode::Eigenvectors {
            return Err(Error::param(
                "network was trained on covariances, not eigenvectors",
            ));
        }
        self.forward(v)
    }
}

pub(crate) fn to_row_major(m: &DMatrix<f64>, scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)] * scale);
        }
    }
    out
}

pub(crate) fn from_row_major(p: usize, v: &[f64], scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| v[i * p + j] * scale)
}
