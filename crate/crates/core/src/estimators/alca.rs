//! Agglomerative clustering on a correlation distance and the hierarchical
//! filter built from its cophenetic distances.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::covariance::{CovarianceMatrix, Provenance};
use crate::error::{Error, Result};
use crate::estimators::EstimatorId;
use crate::spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Average,
    Single,
}

/// One merge. Children are node ids: `0..p` are leaves, `p + k` is the
/// node created by merge `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DendrogramNode {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub nodes: Vec<DendrogramNode>,
}

impl Dendrogram {
    /// Build a dendrogram from a symmetric dissimilarity matrix.
    ///
    /// Distances between merged clusters follow the Lance–Williams update.
    /// Among equal distances the pair with the lexicographically smallest
    /// `(min id, max id)` merges first.
    pub fn build(dist: &DMatrix<f64>, linkage: Linkage) -> Result<Self> {
        let p = dist.nrows();
        if !dist.is_square() {
            return Err(Error::param("distance matrix must be square"));
        }
        // Slot-indexed working copy; slots are reused by merged clusters.
        let mut d = dist.clone();
        let mut ids: Vec<usize> = (0..p).collect();
        let mut sizes = vec![1usize; p];
        let mut members: Vec<Vec<usize>> = (0..p).map(|i| vec![i]).collect();
        let mut active: Vec<usize> = (0..p).collect();
        let mut nodes = Vec::with_capacity(p.saturating_sub(1));

        while active.len() > 1 {
            let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
            for (ai, &a) in active.iter().enumerate() {
                for &b in &active[ai + 1..] {
                    let dab = d[(a, b)];
                    let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                    let better = match best {
                        None => true,
                        Some((bd, bkey, _, _)) => dab < bd || (dab == bd && key < bkey),
                    };
                    if better {
                        best = Some((dab, key, a, b));
                    }
                }
            }
            let (height, _, a, b) = best.expect("at least two active clusters");
            let (na, nb) = (sizes[a] as f64, sizes[b] as f64);
            for &k in &active {
                if k == a || k == b {
                    continue;
                }
                let merged = match linkage {
                    Linkage::Average => (na * d[(k, a)] + nb * d[(k, b)]) / (na + nb),
                    Linkage::Single => d[(k, a)].min(d[(k, b)]),
                };
                d[(k, a)] = merged;
                d[(a, k)] = merged;
            }
            let (left, right) = if ids[a] < ids[b] {
                (ids[a], ids[b])
            } else {
                (ids[b], ids[a])
            };
            let mut merged_members = std::mem::take(&mut members[a]);
            merged_members.extend(std::mem::take(&mut members[b]));
            merged_members.sort_unstable();
            nodes.push(DendrogramNode {
                left,
                right,
                height,
                members: merged_members.clone(),
            });
            members[a] = merged_members;
            sizes[a] += sizes[b];
            ids[a] = p + nodes.len() - 1;
            active.retain(|&k| k != b);
        }
        Ok(Dendrogram { leaves: p, nodes })
    }

    fn node_members(&self, id: usize) -> Vec<usize> {
        if id < self.leaves {
            vec![id]
        } else {
            self.nodes[id - self.leaves].members.clone()
        }
    }

    /// Height of the lowest common ancestor of every pair; zero diagonal.
    pub fn cophenetic(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.leaves, self.leaves);
        for node in &self.nodes {
            let left = self.node_members(node.left);
            let right = self.node_members(node.right);
            for &i in &left {
                for &j in &right {
                    out[(i, j)] = node.height;
                    out[(j, i)] = node.height;
                }
            }
        }
        out
    }

    pub fn root_height(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.height)
    }
}

/// `D = 1 − C` with an exact zero diagonal. Rejects correlations outside
/// `[−1, 1]` by more than `1e-10`.
pub fn correlation_distance(corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = corr.nrows();
    let mut d = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let c = corr[(i, j)];
            if c.abs() > 1.0 + 1e-10 || !c.is_finite() {
                return Err(Error::InvalidCorrelation {
                    row: i,
                    col: j,
                    value: c,
                });
            }
            d[(i, j)] = 1.0 - c.clamp(-1.0, 1.0);
        }
    }
    Ok(spectral::symmetrize(&d))
}

/// Hierarchically filtered correlation `1 − D(ρ)` for a correlation matrix.
///
/// When the root merges above distance 1 the filtered matrix can be
/// indefinite; it is then projected onto the PSD cone and rescaled back to
/// unit diagonal.
pub fn filter_correlation(corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dist = correlation_distance(corr)?;
    let tree = Dendrogram::build(&dist, Linkage::Average)?;
    let filtered = tree.cophenetic().map(|h| 1.0 - h);
    if tree.root_height() <= 1.0 {
        return Ok(filtered);
    }
    let dec = spectral::eigendecompose_sym(&filtered)?;
    let min = dec.eigenvalues[dec.dim() - 1];
    if min >= -1e-12 * dec.eigenvalues[0].abs() {
        return Ok(filtered);
    }
    let projected = spectral::psd_project(&filtered, 0.0)?;
    let (rescaled, _) = spectral::cov_to_corr(&projected)?;
    Ok(spectral::symmetrize(&rescaled))
}

pub fn estimate_alca(s: &CovarianceMatrix) -> Result<CovarianceMatrix> {
    let (corr, variances) = spectral::cov_to_corr(s.values())?;
    let filtered = filter_correlation(&corr)?;
    let values = spectral::corr_to_cov(&filtered, &variances);
    CovarianceMatrix::from_psd_construction(values, Provenance::Estimator(EstimatorId::Alca))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dist(p: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(p, p);
        for &(i, j, v) in entries {
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
        d
    }

    #[test]
    fn average_linkage_by_hand() {
        // 0-1 merge at 1; {0,1}-2 at (4+6)/2 = 5.
        let d = dist(3, &[(0, 1, 1.0), (0, 2, 4.0), (1, 2, 6.0)]);
        let tree = Dendrogram::build(&d, Linkage::Average).unwrap();
        assert_eq!(tree.nodes.len(), 2);
        assert_eq!((tree.nodes[0].left, tree.nodes[0].right), (0, 1));
        assert_abs_diff_eq!(tree.nodes[1].height, 5.0);
        assert_eq!(tree.nodes[1].members, vec![0, 1, 2]);
        let single = Dendrogram::build(&d, Linkage::Single).unwrap();
        assert_abs_diff_eq!(single.nodes[1].height, 4.0);
        let coph = tree.cophenetic();
        assert_abs_diff_eq!(coph[(0, 2)], 5.0);
        assert_abs_diff_eq!(coph[(0, 1)], 1.0);
        assert_abs_diff_eq!(coph[(2, 2)], 0.0);
    }

    #[test]
    fn ties_merge_lowest_pair_first() {
        let d = dist(
            4,
            &[
                (0, 1, 1.0),
                (2, 3, 1.0),
                (0, 2, 2.0),
                (0, 3, 2.0),
                (1, 2, 2.0),
                (1, 3, 2.0),
            ],
        );
        let tree = Dendrogram::build(&d, Linkage::Average).unwrap();
        assert_eq!((tree.nodes[0].left, tree.nodes[0].right), (0, 1));
        assert_eq!((tree.nodes[1].left, tree.nodes[1].right), (2, 3));
        assert_eq!((tree.nodes[2].left, tree.nodes[2].right), (4, 5));
    }

    #[test]
    fn two_uncorrelated_assets_unchanged() {
        let s = CovarianceMatrix::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]),
            Provenance::External,
        )
        .unwrap();
        let out = estimate_alca(&s).unwrap();
        assert_abs_diff_eq!(out.values(), s.values(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_out_of_range_correlation() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(matches!(
            correlation_distance(&c),
            Err(Error::InvalidCorrelation { .. })
        ));
    }
}
