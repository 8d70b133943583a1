//! Closed-form and long-only minimum-variance portfolios.

use covden::portfolio::{mvp_plus_weights, mvp_weights, solve_long_only_mvp};
use covden::{CovarianceMatrix, Provenance};
use nalgebra::DMatrix;

fn main() -> covden::Result<()> {
    // The second asset hedges the first, so the unconstrained optimum shorts it.
    let sigma =
        DMatrix::from_row_slice(3, 3, &[0.04, 0.03, 0.0, 0.03, 0.09, 0.01, 0.0, 0.01, 0.02]);
    let cov = CovarianceMatrix::new(sigma.clone(), Provenance::External)?;
    let free = mvp_weights(&cov)?;
    let long = mvp_plus_weights(&cov)?;
    println!(
        "unconstrained {:?}  variance {:.5}",
        free.as_slice(),
        free.variance(&sigma)
    );
    println!(
        "long-only     {:?}  variance {:.5}",
        long.as_slice(),
        long.variance(&sigma)
    );
    let sol = solve_long_only_mvp(&sigma)?;
    println!(
        "active-set iterations {}, KKT residual {:.1e}",
        sol.iterations, sol.residual
    );
    Ok(())
}
