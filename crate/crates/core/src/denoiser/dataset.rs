use nalgebra::DMatrix;

use super::network::DenoiserMode;
use crate::covariance::CovarianceMatrix;
use crate::data::ReturnsPanel;
use crate::error::{Error, Result};
use crate::models::{ModelSpec, SampleGenerator};
use crate::rng;
use crate::spectral;

/// Paired network inputs and regression targets.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub inputs: Vec<DMatrix<f64>>,
    pub targets: Vec<DMatrix<f64>>,
    pub mode: DenoiserMode,
}

impl TrainingSet {
    pub fn new(
        inputs: Vec<DMatrix<f64>>,
        targets: Vec<DMatrix<f64>>,
        mode: DenoiserMode,
    ) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::param(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(first) = inputs.first() {
            let shape = first.shape();
            if inputs.iter().chain(&targets).any(|m| m.shape() != shape) {
                return Err(Error::param("training matrices differ in shape"));
            }
        }
        Ok(TrainingSet {
            inputs,
            targets,
            mode,
        })
    }

    pub fn count(&self) -> usize {
        self.inputs.len()
    }
}

/// Reorder the columns of `target` so that column `k` is the unused target
/// column with the largest absolute inner product with `input[:, k]`
/// (greedy, lowest index on ties).
pub fn align_columns(input: &DMatrix<f64>, target: &DMatrix<f64>) -> DMatrix<f64> {
    let p = input.ncols();
    let overlap = input.transpose() * target;
    let mut used = vec![false; p];
    let mut out = DMatrix::zeros(target.nrows(), p);
    for k in 0..p {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..p).filter(|&j| !used[j]) {
            let v = overlap[(k, j)].abs();
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        let (j, _) = best.expect("a free column remains");
        used[j] = true;
        out.set_column(k, &target.column(j));
    }
    out
}

fn eigenvector_pair(
    input: &CovarianceMatrix,
    target: &CovarianceMatrix,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let v_in = input.spectral()?.eigenvectors;
    let v_target = target.spectral()?.eigenvectors;
    let aligned = align_columns(&v_in, &v_target);
    Ok((v_in, aligned))
}

/// Simulated pairs: sample covariances drawn from the training streams of
/// `seed` against the population matrix (or their eigenvectors).
pub fn build_training_set_simulation(
    model: &ModelSpec,
    n: usize,
    count: usize,
    seed: u64,
    mode: DenoiserMode,
) -> Result<TrainingSet> {
    if count < 2 {
        return Err(Error::param(format!(
            "training set needs at least 2 samples, got {count}"
        )));
    }
    let sigma = model.build()?;
    let generator = SampleGenerator::new(&sigma)?;
    build_from_generator(&generator, n, count, seed, mode)
}

pub(crate) fn build_from_generator(
    generator: &SampleGenerator,
    n: usize,
    count: usize,
    seed: u64,
    mode: DenoiserMode,
) -> Result<TrainingSet> {
    let sigma = generator.population();
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    let target_vectors = match mode {
        DenoiserMode::Eigenvectors => Some(sigma.spectral()?.eigenvectors),
        DenoiserMode::Covariance => None,
    };
    for j in 0..count {
        let draw = generator.draw(n, seed, rng::TRAINING_STREAM_BASE + j as u64)?;
        match &target_vectors {
            None => {
                inputs.push(draw.sample.values().clone());
                targets.push(sigma.values().clone());
            }
            Some(v_target) => {
                let v_in = draw.sample.spectral()?.eigenvectors;
                targets.push(align_columns(&v_in, v_target));
                inputs.push(v_in);
            }
        }
    }
    TrainingSet::new(inputs, targets, mode)
}

/// Rows of history a rolling training set needs.
pub fn rolling_history_required(window_length: usize, count: usize, stride: usize) -> usize {
    2 * window_length + count.saturating_sub(1) * stride
}

/// Pairs from a returns history. Pair `j` (0-based) takes the window
/// starting at `L − 2w − (count − 1 − j)·stride` as input and the next
/// non-overlapping window of the same length as target, so the last target
/// ends on the final row of the panel.
pub fn build_training_set_rolling(
    returns: &ReturnsPanel,
    window_length: usize,
    count: usize,
    stride: usize,
    mode: DenoiserMode,
) -> Result<TrainingSet> {
    if count < 2 || window_length < 2 || stride == 0 {
        return Err(Error::param(format!(
            "rolling training set needs count >= 2, window >= 2 and stride >= 1 (got {count}, {window_length}, {stride})"
        )));
    }
    let required = rolling_history_required(window_length, count, stride);
    let available = returns.n();
    if available < required {
        return Err(Error::InsufficientHistory {
            required,
            available,
        });
    }
    let first = available - required;
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for j in 0..count {
        let start = first + j * stride;
        let input = returns.window_covariance(start, window_length)?;
        let target = returns.window_covariance(start + window_length, window_length)?;
        match mode {
            DenoiserMode::Covariance => {
                inputs.push(input.into_values());
                targets.push(target.into_values());
            }
            DenoiserMode::Eigenvectors => {
                let (v_in, v_target) = eigenvector_pair(&input, &target)?;
                inputs.push(v_in);
                targets.push(v_target);
            }
        }
    }
    TrainingSet::new(inputs, targets, mode)
}

/// Sign-convention check used by tests and diagnostics.
pub fn obeys_sign_convention(v: &DMatrix<f64>) -> bool {
    v.column_iter().all(|col| {
        let mut c: Vec<f64> = col.iter().copied().collect();
        let before = c.clone();
        spectral::fix_column_sign(&mut c);
        c == before
    })
}
