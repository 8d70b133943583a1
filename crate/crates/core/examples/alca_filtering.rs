//! Hierarchical filtering of a noisy block correlation matrix and the
//! dendrogram behind it.

use covden::estimators::alca::correlation_distance;
use covden::estimators::{estimate_alca, Dendrogram, Linkage};
use covden::evaluation::frobenius_loss;
use covden::models::sample_covariance;
use covden::spectral::cov_to_corr;
use covden::ModelSpec;

fn main() -> covden::Result<()> {
    let sigma = ModelSpec::block(vec![4, 6, 8], 0.4).build()?;
    let sample = sample_covariance(&sigma, 40, 3)?.sample;
    let filtered = estimate_alca(&sample)?;
    println!(
        "frobenius loss: sample {:.4}, filtered {:.4}",
        frobenius_loss(&sample, &sigma)?,
        frobenius_loss(&filtered, &sigma)?
    );

    let (corr, _) = cov_to_corr(sample.values())?;
    let tree = Dendrogram::build(&correlation_distance(&corr)?, Linkage::Average)?;
    println!("last merges (height, size):");
    for node in tree.nodes.iter().rev().take(4) {
        println!("  {:.3} {}", node.height, node.members.len());
    }
    Ok(())
}
