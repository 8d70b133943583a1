//! Symmetric-matrix machinery shared by every estimator: eigendecomposition
//! with a fixed ordering and sign convention, PSD projection, correlation
//! conversion, the empirical Stieltjes transform and spectral seriation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

const EIGEN_MAX_ITER: usize = 10_000;

/// Eigenvalues sorted descending with matching eigenvector columns.
///
/// In every column the entry of largest absolute value is nonnegative; when
/// several entries tie for the largest magnitude the first one decides.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(values) Vᵀ`, symmetrized.
    pub fn reconstruct_with(&self, values: &DVector<f64>) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= values[k];
        }
        symmetrize(&(scaled * v.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(&self.eigenvalues)
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Flip the column so that its largest-magnitude entry is nonnegative.
pub fn fix_column_sign(col: &mut [f64]) {
    let mut best = 0;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// Only the lower triangle is read by the underlying solver, so callers with
/// a slightly asymmetric matrix should [`symmetrize`] first.
pub fn eigendecompose_sym(m: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    if !m.is_square() {
        return Err(Error::param(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericDomain(
            "non-finite entry in eigendecomposition input".into(),
        ));
    }
    let p = m.nrows();
    if p == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITER).ok_or(
        Error::NonConvergence {
            iterations: EIGEN_MAX_ITER,
        },
    )?;

    // Stable sort, descending; ties keep the solver's order.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        fix_column_sign(&mut col);
        eigenvectors.set_column(dst, &DVector::from_vec(col));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Clamp the spectrum of `(M + Mᵀ)/2` from below at `floor`.
pub fn psd_project(m: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    if floor < 0.0 || !floor.is_finite() {
        return Err(Error::param(format!(
            "PSD floor must be a nonnegative real, got {floor}"
        )));
    }
    let sym = symmetrize(m);
    let dec = eigendecompose_sym(&sym)?;
    if dec.eigenvalues.iter().all(|&l| l >= floor) {
        return Ok(sym);
    }
    let clamped = dec.eigenvalues.map(|l| l.max(floor));
    Ok(dec.reconstruct_with(&clamped))
}

/// Empirical Stieltjes transform `(1/p) Σ_j 1/(λ_j − z)`.
pub fn stieltjes(z: Complex64, eigenvalues: &[f64]) -> Result<Complex64> {
    if eigenvalues.is_empty() {
        return Err(Error::param("Stieltjes transform of an empty spectrum"));
    }
    if z.im == 0.0 && eigenvalues.contains(&z.re) {
        return Err(Error::Pole(z.re));
    }
    let sum: Complex64 = eigenvalues
        .iter()
        .map(|&l| (Complex64::new(l, 0.0) - z).inv())
        .sum();
    Ok(sum / eigenvalues.len() as f64)
}

/// Split a covariance matrix into its correlation matrix and variances.
pub fn cov_to_corr(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = m.nrows();
    let variances = m.diagonal();
    if let Some(i) = variances.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "variance at index {i} is {}, expected a positive value",
            variances[i]
        )));
    }
    let sd = variances.map(f64::sqrt);
    let corr = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            m[(i, j)] / (sd[i] * sd[j])
        }
    });
    Ok((corr, variances))
}

/// Rescale a correlation matrix by `H^{1/2} C H^{1/2}`.
pub fn corr_to_cov(corr: &DMatrix<f64>, variances: &DVector<f64>) -> DMatrix<f64> {
    let sd = variances.map(f64::sqrt);
    let p = corr.nrows();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            variances[i]
        } else {
            corr[(i, j)] * sd[i] * sd[j]
        }
    })
}

/// A bijection on `0..p`; `order[k]` is the original index placed at position `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn identity(p: usize) -> Self {
        Permutation {
            order: (0..p).collect(),
        }
    }

    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || seen[i] {
                return Err(Error::param(format!("{order:?} is not a permutation")));
            }
            seen[i] = true;
        }
        Ok(Permutation { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.order.len()];
        for (pos, &src) in self.order.iter().enumerate() {
            inv[src] = pos;
        }
        Permutation { order: inv }
    }

    /// `PᵀMP`: entry `(a, b)` of the result is `M[order[a], order[b]]`.
    pub fn apply_symmetric(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.order.len();
        DMatrix::from_fn(p, p, |a, b| m[(self.order[a], self.order[b])])
    }

    /// Reorder the rows of `m`.
    pub fn apply_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.order.len(), m.ncols(), |a, t| m[(self.order[a], t)])
    }

    pub fn apply_vec<T: Clone>(&self, v: &[T]) -> Vec<T> {
        self.order.iter().map(|&i| v[i].clone()).collect()
    }
}

/// Order assets by the Fiedler vector of the similarity Laplacian built
/// from `A = (C + 1)/2`.
///
/// When the Fiedler eigenvalue is degenerate the vector is not determined by
/// the matrix, and the identity order is returned.
pub fn spectral_seriation(corr: &DMatrix<f64>) -> Result<Permutation> {
    let p = corr.nrows();
    if p <= 2 {
        return Ok(Permutation::identity(p));
    }
    let similarity = corr.map(|c| (c + 1.0) * 0.5);
    let mut laplacian = -similarity.clone();
    for i in 0..p {
        let degree: f64 = similarity.row(i).iter().sum();
        laplacian[(i, i)] += degree;
    }
    let dec = eigendecompose_sym(&symmetrize(&laplacian))?;
    // Descending order: the smallest is at p-1, the Fiedler value at p-2.
    let fiedler_value = dec.eigenvalues[p - 2];
    let next_value = dec.eigenvalues[p - 3];
    let scale = dec.eigenvalues[0].abs().max(1.0);
    if (next_value - fiedler_value).abs() <= 1e-9 * scale {
        return Ok(Permutation::identity(p));
    }
    let mut fiedler: Vec<f64> = dec.eigenvectors.column(p - 2).iter().copied().collect();
    if fiedler[0] > fiedler[p - 1] {
        fiedler.iter_mut().for_each(|v| *v = -*v);
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| fiedler[a].total_cmp(&fiedler[b]).then(a.cmp(&b)));
    Permutation::new(order)
}
