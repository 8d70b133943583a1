//! Monte Carlo comparison of the non-learned estimators on the three
//! population models.
//!
//! cargo run --release --example simulate_tables -- [m]

use covden::evaluation::run_monte_carlo;
use covden::{EstimatorId, ModelSpec};

fn main() -> covden::Result<()> {
    let m: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(50);
    let estimators = [
        EstimatorId::Naive,
        EstimatorId::Lp,
        EstimatorId::Alca,
        EstimatorId::TwoStepLp,
    ];
    for model in [
        ModelSpec::reference_block(),
        ModelSpec::reference_nested(),
        ModelSpec::reference_powerlaw(42),
    ] {
        let report = run_monte_carlo(&model, 200, m, &estimators, 42, None)?;
        println!("{}", report.to_table());
    }
    Ok(())
}
