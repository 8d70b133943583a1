//! Recovers block structure from the sample correlation of shuffled assets.

use covden::models::{build_block_model, sample_covariance};
use covden::spectral::{cov_to_corr, spectral_seriation, Permutation};
use covden::{CovarianceMatrix, Provenance};

fn main() -> covden::Result<()> {
    let sigma = build_block_model(&[3, 3, 3], 0.7)?;
    let shuffle = Permutation::new(vec![0, 3, 6, 1, 4, 7, 2, 5, 8])?;
    let mixed = CovarianceMatrix::new(
        shuffle.apply_symmetric(sigma.values()),
        Provenance::External,
    )?;
    let sample = sample_covariance(&mixed, 250, 1)?.sample;
    let (corr, _) = cov_to_corr(sample.values())?;
    let perm = spectral_seriation(&corr)?;
    println!("order: {:?}", perm.order());
    let ordered = perm.apply_symmetric(&corr);
    for i in 0..ordered.nrows() {
        let row: String = (0..ordered.ncols())
            .map(|j| if ordered[(i, j)] > 0.5 { '#' } else { '.' })
            .collect();
        println!("{row}");
    }
    Ok(())
}
