//! Nonlinear eigenvalue shrinkage on a single sample: the shrunk spectrum
//! sits closer to the population one than the raw sample spectrum does.

use covden::estimators::{estimate_lp, lp_shrink};
use covden::evaluation::frobenius_loss;
use covden::models::sample_covariance;
use covden::ModelSpec;

fn main() -> covden::Result<()> {
    let n = 120;
    let sigma = ModelSpec::reference_powerlaw(7).build()?;
    let sample = sample_covariance(&sigma, n, 7)?.sample;

    let raw = sample.spectral()?.eigenvalues;
    let shrunk = lp_shrink(raw.as_slice(), n)?;
    let truth = sigma.spectral()?.eigenvalues;
    println!(
        "{:>4} {:>12} {:>12} {:>12}",
        "k", "population", "sample", "shrunk"
    );
    for k in [0, 1, 2, 5, 10, 20, 50, 99] {
        println!(
            "{k:>4} {:>12.5} {:>12.5} {:>12.5}",
            truth[k], raw[k], shrunk[k]
        );
    }

    let lp = estimate_lp(&sample, n)?;
    println!(
        "frobenius loss: sample {:.4}, shrunk {:.4}",
        frobenius_loss(&sample, &sigma)?,
        frobenius_loss(&lp, &sigma)?
    );
    Ok(())
}
