//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! 64-bit seed and a 64-bit stream index. Monte Carlo realization `i` reads
//! stream `i`; training samples read streams offset by [`TRAINING_STREAM_BASE`]
//! so they never overlap the evaluation draws of the same run.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// First stream index reserved for simulated training samples.
pub const TRAINING_STREAM_BASE: u64 = 1 << 40;

/// Stream used for network weight initialization and shuffling.
pub const NETWORK_STREAM: u64 = 1 << 41;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `rows x cols` matrix of i.i.d. N(0,1) entries, drawn in row-major order.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let values: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DMatrix::from_row_slice(rows, cols, &values)
}
