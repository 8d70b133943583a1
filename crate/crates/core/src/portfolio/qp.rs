//! Long-only minimum variance: `min wᵀΣw` subject to `1ᵀw = 1`, `w ≥ 0`.
//!
//! Primal active-set method. Starting from the uniform portfolio, each
//! iteration solves the budget-constrained problem on the free coordinates;
//! if that point is infeasible the step is cut at the first bound reached
//! (lowest index on ties) and that coordinate is fixed at zero. At a
//! stationary point the fixed coordinate with the most negative multiplier
//! (lowest index on ties) is released, until all multipliers are nonnegative.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub weights: Vec<f64>,
    /// Common value of `(Σw)_i` on the support.
    pub multiplier: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Largest violation of the optimality conditions at `w`: budget,
/// nonnegativity, equal marginal variance on the support, and no smaller
/// marginal variance off the support.
pub fn kkt_residual(sigma: &DMatrix<f64>, w: &[f64]) -> f64 {
    let g = sigma * DVector::from_column_slice(w);
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 1e-12).collect();
    if support.is_empty() {
        return f64::INFINITY;
    }
    let lambda = support.iter().map(|&i| g[i]).sum::<f64>() / support.len() as f64;
    let mut r = (w.iter().sum::<f64>() - 1.0).abs();
    for (i, &wi) in w.iter().enumerate() {
        r = r.max((-wi).max(0.0));
        if wi > 1e-12 {
            r = r.max((g[i] - lambda).abs());
        } else {
            r = r.max((lambda - g[i]).max(0.0));
        }
    }
    r
}

/// Budget-constrained minimizer over `free`: solves
/// `[Σ_FF 1; 1ᵀ 0] [x; −ν] = [0; 1]`.
fn solve_equality(sigma: &DMatrix<f64>, free: &[usize]) -> Result<(DVector<f64>, f64)> {
    let k = free.len();
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            kkt[(a, b)] = sigma[(i, j)];
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => kkt
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|_| Error::Singular {
                which: "equality-constrained QP subproblem",
            })?,
    };
    Ok((sol.rows(0, k).into_owned(), -sol[k]))
}

pub fn solve_long_only_mvp(sigma: &DMatrix<f64>) -> Result<QpSolution> {
    let p = sigma.nrows();
    if p == 0 || !sigma.is_square() {
        return Err(Error::param("QP needs a non-empty square covariance"));
    }
    let scale = sigma.amax().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let max_iter = 50 * p + 100;

    let mut w = vec![1.0 / p as f64; p];
    let mut fixed = vec![false; p];
    let mut iterations = 0;
    // Set after a full step: w already minimizes over the free coordinates.
    let mut stationary = false;
    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::Solver {
                residual: kkt_residual(sigma, &w),
            });
        }
        let free: Vec<usize> = (0..p).filter(|&i| !fixed[i]).collect();
        let (x, nu) = solve_equality(sigma, &free)?;
        let step: Vec<f64> = free.iter().enumerate().map(|(a, &i)| x[a] - w[i]).collect();
        let step_norm = step.iter().fold(0.0f64, |m, d| m.max(d.abs()));

        if stationary || step_norm <= 1e-14 {
            stationary = false;
            let g = sigma * DVector::from_column_slice(&w);
            let release = (0..p)
                .filter(|&i| fixed[i])
                .map(|i| (i, g[i] - nu))
                .filter(|&(_, mu)| mu < -tol)
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            match release {
                Some((i, _)) => {
                    fixed[i] = false;
                    continue;
                }
                None => {
                    for v in w.iter_mut() {
                        *v = v.max(0.0);
                    }
                    let total: f64 = w.iter().sum();
                    w.iter_mut().for_each(|v| *v /= total);
                    let residual = kkt_residual(sigma, &w);
                    return Ok(QpSolution {
                        weights: w,
                        multiplier: nu,
                        iterations,
                        residual,
                    });
                }
            }
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for (a, &i) in free.iter().enumerate() {
            if step[a] < 0.0 {
                let ratio = -w[i] / step[a];
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
        }
        for (a, &i) in free.iter().enumerate() {
            w[i] += alpha * step[a];
        }
        match blocking {
            Some(i) => {
                w[i] = 0.0;
                fixed[i] = true;
            }
            None => stationary = true,
        }
    }
}
