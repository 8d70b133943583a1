//! Population covariance models and the Gaussian data-generating process
//! `Y = sqrt(Σ) X`, `S = Y Yᵀ / n`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceMatrix, Provenance};
use crate::error::{Error, Result};
use crate::rng;
use crate::spectral;

/// Block sizes of the twelve-block model on 100 assets.
pub const REFERENCE_BLOCK_SIZES: [usize; 12] = [3, 3, 4, 5, 6, 7, 7, 9, 11, 13, 15, 17];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(rename = "block")]
    BlockDiagonal,
    #[serde(rename = "nested")]
    NestedHierarchical,
    #[serde(rename = "powerlaw")]
    PowerLaw,
}

impl ModelKind {
    pub fn number(self) -> u8 {
        match self {
            ModelKind::BlockDiagonal => 1,
            ModelKind::NestedHierarchical => 2,
            ModelKind::PowerLaw => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BlockDiagonal => "block",
            ModelKind::NestedHierarchical => "nested",
            ModelKind::PowerLaw => "powerlaw",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" | "1" | "model-1" => Ok(ModelKind::BlockDiagonal),
            "nested" | "2" | "model-2" => Ok(ModelKind::NestedHierarchical),
            "powerlaw" | "3" | "model-3" => Ok(ModelKind::PowerLaw),
            other => Err(Error::param(format!(
                "unknown model kind `{other}` (block, nested, powerlaw)"
            ))),
        }
    }
}

/// Parameters of one population model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub block_sizes: Vec<usize>,
    pub gamma: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl ModelSpec {
    pub fn block(block_sizes: Vec<usize>, gamma: f64) -> Self {
        ModelSpec {
            kind: ModelKind::BlockDiagonal,
            p: block_sizes.iter().sum(),
            block_sizes,
            gamma,
            alpha: 0.0,
            seed: 0,
        }
    }

    pub fn nested(p: usize, gamma: f64) -> Self {
        ModelSpec {
            kind: ModelKind::NestedHierarchical,
            p,
            block_sizes: Vec::new(),
            gamma,
            alpha: 0.0,
            seed: 0,
        }
    }

    pub fn powerlaw(p: usize, alpha: f64, seed: u64) -> Self {
        ModelSpec {
            kind: ModelKind::PowerLaw,
            p,
            block_sizes: Vec::new(),
            gamma: 0.0,
            alpha,
            seed,
        }
    }

    /// Twelve heterogeneous blocks, p = 100, γ = 0.3.
    pub fn reference_block() -> Self {
        Self::block(REFERENCE_BLOCK_SIZES.to_vec(), 0.3)
    }

    /// Nested hierarchy, p = 100, γ = 0.1.
    pub fn reference_nested() -> Self {
        Self::nested(100, 0.1)
    }

    /// Power law, p = 100, α = 1.5.
    pub fn reference_powerlaw(seed: u64) -> Self {
        Self::powerlaw(100, 1.5, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::param("model dimension p must be positive"));
        }
        match self.kind {
            ModelKind::BlockDiagonal => {
                let total: usize = self.block_sizes.iter().sum();
                if total != self.p {
                    return Err(Error::param(format!(
                        "block sizes sum to {total}, expected p = {}",
                        self.p
                    )));
                }
                if !(self.gamma > 0.0 && self.gamma < 1.0) {
                    return Err(Error::param(format!(
                        "block model needs gamma in (0,1), got {}",
                        self.gamma
                    )));
                }
            }
            ModelKind::NestedHierarchical => {
                if !(self.gamma > 0.0 && self.gamma < 1.0) {
                    return Err(Error::param(format!(
                        "nested model needs gamma in (0,1), got {}",
                        self.gamma
                    )));
                }
            }
            ModelKind::PowerLaw => {
                if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
                    return Err(Error::param(format!(
                        "power-law model needs alpha >= 0, got {}",
                        self.alpha
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<CovarianceMatrix> {
        self.validate()?;
        match self.kind {
            ModelKind::BlockDiagonal => build_block_model(&self.block_sizes, self.gamma),
            ModelKind::NestedHierarchical => build_nested_model(self.p, self.gamma),
            ModelKind::PowerLaw => build_powerlaw_model(self.p, self.alpha, self.seed),
        }
    }

    /// Plain `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = format!("kind = {}\np = {}\n", self.kind, self.p);
        if !self.block_sizes.is_empty() {
            let sizes: Vec<String> = self.block_sizes.iter().map(ToString::to_string).collect();
            out.push_str(&format!("block_sizes = {}\n", sizes.join(",")));
        }
        out.push_str(&format!(
            "gamma = {:?}\nalpha = {:?}\nseed = {}\n",
            self.gamma, self.alpha, self.seed
        ));
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let entries = parse_kv(text)?;
        let get = |key: &str| entries.get(key).map(String::as_str);
        let kind: ModelKind = get("kind")
            .ok_or_else(|| Error::param("model config is missing `kind`"))?
            .parse()?;
        let block_sizes = match get("block_sizes") {
            Some(list) if !list.is_empty() => list
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::param(format!("bad block size `{s}`")))
                })
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        let p = match get("p") {
            Some(v) => parse_num(v, "p")?,
            None => block_sizes.iter().sum(),
        };
        let spec = ModelSpec {
            kind,
            p,
            block_sizes,
            gamma: get("gamma")
                .map(|v| parse_num(v, "gamma"))
                .transpose()?
                .unwrap_or(0.0),
            alpha: get("alpha")
                .map(|v| parse_num(v, "alpha"))
                .transpose()?
                .unwrap_or(0.0),
            seed: get("seed")
                .map(|v| parse_num(v, "seed"))
                .transpose()?
                .unwrap_or(0),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parse `key = value` lines; `#` starts a comment. Unknown keys are
/// rejected by the callers that know their key set.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    const KEYS: [&str; 6] = ["kind", "p", "block_sizes", "gamma", "alpha", "seed"];
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::param(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::param(format!(
                "line {}: unknown model key `{key}`",
                lineno + 1
            )));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn parse_num<T: FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::param(format!("`{key}` has invalid value `{v}`")))
}

/// Unit diagonal, `gamma` inside each block, zero across blocks.
pub fn build_block_model(block_sizes: &[usize], gamma: f64) -> Result<CovarianceMatrix> {
    if block_sizes.is_empty() || block_sizes.contains(&0) {
        return Err(Error::param(format!(
            "block sizes must be positive, got {block_sizes:?}"
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::param(format!(
            "gamma must lie in [0,1), got {gamma}"
        )));
    }
    let p: usize = block_sizes.iter().sum();
    let mut label = Vec::with_capacity(p);
    for (b, &size) in block_sizes.iter().enumerate() {
        label.extend(std::iter::repeat_n(b, size));
    }
    let values = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if label[i] == label[j] {
            gamma
        } else {
            0.0
        }
    });
    CovarianceMatrix::new(values, Provenance::Model(ModelKind::BlockDiagonal))
}

/// `Σ = L Lᵀ` with the anti-triangular `L` (`L_ij = γ` for `i + j ≤ p + 1`,
/// 1-based), i.e. `Σ_ij = γ² (p + 1 − max(i, j))`.
pub fn build_nested_model(p: usize, gamma: f64) -> Result<CovarianceMatrix> {
    if p == 0 {
        return Err(Error::param("nested model needs p >= 1"));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::param(format!(
            "nested model needs gamma > 0, got {gamma}"
        )));
    }
    let g2 = gamma * gamma;
    let values = DMatrix::from_fn(p, p, |i, j| g2 * (p - i.max(j)) as f64);
    CovarianceMatrix::new(values, Provenance::Model(ModelKind::NestedHierarchical))
}

/// Haar-distributed orthogonal matrix: QR of a seeded Gaussian matrix with
/// the signs fixed so that `R` has a positive diagonal.
pub fn random_orthogonal(p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng::stream_rng(seed, 0);
    let g = rng::gaussian_matrix(p, p, &mut rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..p {
        if r[(k, k)] < 0.0 {
            let mut col = q.column_mut(k);
            col.neg_mut();
        }
    }
    q
}

/// `Σ = O Λ Oᵀ` with `Λ_ii = i^(−α)`.
pub fn build_powerlaw_model(p: usize, alpha: f64, seed: u64) -> Result<CovarianceMatrix> {
    if p == 0 {
        return Err(Error::param("power-law model needs p >= 1"));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::param(format!(
            "power-law model needs alpha >= 0, got {alpha}"
        )));
    }
    let spectrum = powerlaw_spectrum(p, alpha);
    let o = random_orthogonal(p, seed);
    let dec = spectral::SpectralDecomposition {
        eigenvalues: spectrum,
        eigenvectors: o,
    };
    CovarianceMatrix::new(dec.reconstruct(), Provenance::Model(ModelKind::PowerLaw))
}

pub fn powerlaw_spectrum(p: usize, alpha: f64) -> DVector<f64> {
    DVector::from_iterator(p, (1..=p).map(|i| (i as f64).powf(-alpha)))
}

/// One Gaussian draw and its sample covariance.
#[derive(Debug, Clone)]
pub struct SampleDraw {
    pub data: DMatrix<f64>,
    pub sample: CovarianceMatrix,
    pub n: usize,
    pub seed: u64,
}

/// Caches `sqrt(Σ)` so repeated draws from one population skip the eigensolve.
#[derive(Debug, Clone)]
pub struct SampleGenerator {
    sigma: CovarianceMatrix,
    root: DMatrix<f64>,
}

impl SampleGenerator {
    pub fn new(sigma: &CovarianceMatrix) -> Result<Self> {
        let dec = sigma.spectral()?;
        let max = dec.eigenvalues[0].max(0.0);
        let min = dec.eigenvalues[dec.dim() - 1];
        if min < -1e-10 * max {
            return Err(Error::NumericDomain(format!(
                "cannot take the square root: eigenvalue {min:.3e}"
            )));
        }
        let root = dec.reconstruct_with(&dec.eigenvalues.map(|l| l.max(0.0).sqrt()));
        Ok(SampleGenerator {
            sigma: sigma.clone(),
            root,
        })
    }

    pub fn population(&self) -> &CovarianceMatrix {
        &self.sigma
    }

    pub fn sqrt_sigma(&self) -> &DMatrix<f64> {
        &self.root
    }

    /// Draw `n` observations from stream `stream` of `seed`.
    pub fn draw(&self, n: usize, seed: u64, stream: u64) -> Result<SampleDraw> {
        if n < 2 {
            return Err(Error::param(format!(
                "need at least 2 observations, got {n}"
            )));
        }
        let p = self.sigma.dim();
        let mut rng = rng::stream_rng(seed, stream);
        let x = rng::gaussian_matrix(p, n, &mut rng);
        let data = &self.root * x;
        let sample = sample_cov_of(&data)?;
        Ok(SampleDraw {
            data,
            sample,
            n,
            seed,
        })
    }
}

/// `(1/n) Y Yᵀ` for a `p x n` data matrix (no centering).
pub fn sample_cov_of(data: &DMatrix<f64>) -> Result<CovarianceMatrix> {
    let n = data.ncols() as f64;
    let s = (data * data.transpose()) / n;
    CovarianceMatrix::from_psd_construction(s, Provenance::Sample)
        .map_err(|e| Error::NumericDomain(format!("sample covariance: {e}")))
}

pub fn sample_covariance(sigma: &CovarianceMatrix, n: usize, seed: u64) -> Result<SampleDraw> {
    SampleGenerator::new(sigma)?.draw(n, seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_block_model() {
        let sigma = build_block_model(&REFERENCE_BLOCK_SIZES, 0.3).unwrap();
        assert_eq!(sigma.dim(), 100);
        assert_abs_diff_eq!(sigma.trace(), 100.0, epsilon = 1e-12);
        let off: f64 = sigma.values().iter().map(|v| v * v).sum::<f64>() - 100.0;
        // (Σ s_b² − p) γ² with Σ s_b² = 1078.
        assert_abs_diff_eq!(off, 88.02, epsilon = 1e-9);
    }

    #[test]
    fn zero_gamma_block_is_identity() {
        let sigma = build_block_model(&[4], 0.0).unwrap();
        assert_eq!(sigma.values(), &DMatrix::identity(4, 4));
    }

    #[test]
    fn equicorrelation_spectrum() {
        let dec = build_block_model(&[5], 0.3).unwrap().spectral().unwrap();
        let expected = [2.2, 0.7, 0.7, 0.7, 0.7];
        for (l, e) in dec.eigenvalues.iter().zip(expected) {
            assert_abs_diff_eq!(*l, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn block_model_rejects_bad_parameters() {
        assert!(build_block_model(&[3, 0], 0.3).is_err());
        assert!(build_block_model(&[3], 1.0).is_err());
        assert!(build_block_model(&[3], -0.1).is_err());
    }

    #[test]
    fn nested_small_cases() {
        let one = build_nested_model(1, 0.1).unwrap();
        assert_abs_diff_eq!(one.values()[(0, 0)], 0.01, epsilon = 1e-15);
        let three = build_nested_model(3, 0.1).unwrap();
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[0.03, 0.02, 0.01, 0.02, 0.02, 0.01, 0.01, 0.01, 0.01],
        );
        assert_abs_diff_eq!(three.values(), &expected, epsilon = 1e-15);
        assert!(build_nested_model(0, 0.1).is_err());
    }

    #[test]
    fn nested_matches_anti_triangular_product() {
        let (p, g) = (7, 0.2);
        let l = DMatrix::from_fn(p, p, |i, j| if i + j < p { g } else { 0.0 });
        let oracle = &l * l.transpose();
        let sigma = build_nested_model(p, g).unwrap();
        assert_abs_diff_eq!(sigma.values(), &oracle, epsilon = 1e-15);
    }

    #[test]
    fn nested_reference_scale() {
        let sigma = build_nested_model(100, 0.1).unwrap();
        assert_abs_diff_eq!(sigma.values()[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma.trace(), 50.5, epsilon = 1e-10);
    }

    #[test]
    fn powerlaw_identity_when_flat() {
        let sigma = build_powerlaw_model(5, 0.0, 123).unwrap();
        assert_abs_diff_eq!(sigma.values(), &DMatrix::identity(5, 5), epsilon = 1e-12);
    }

    #[test]
    fn powerlaw_trace_is_partial_zeta() {
        let sigma = build_powerlaw_model(100, 1.5, 3).unwrap();
        let zeta: f64 = (1..=100).map(|i| (i as f64).powf(-1.5)).sum();
        assert_abs_diff_eq!(zeta, 2.412874, epsilon = 1e-6);
        assert_abs_diff_eq!(sigma.trace(), zeta, epsilon = 1e-10);
    }

    #[test]
    fn orthogonal_draw_is_orthogonal() {
        let o = random_orthogonal(12, 99);
        assert_abs_diff_eq!(
            &o.transpose() * &o,
            DMatrix::identity(12, 12),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sample_matches_definition() {
        let sigma = build_block_model(&[2, 3], 0.4).unwrap();
        let draw = sample_covariance(&sigma, 50, 5).unwrap();
        let manual = (&draw.data * draw.data.transpose()) / 50.0;
        assert_abs_diff_eq!(draw.sample.values(), &manual, epsilon = 1e-12);
        let again = sample_covariance(&sigma, 50, 5).unwrap();
        assert_eq!(draw.sample.values(), again.sample.values());
        assert!(sample_covariance(&sigma, 1, 5).is_err());
    }

    #[test]
    fn kv_round_trip() {
        for spec in [
            ModelSpec::reference_block(),
            ModelSpec::reference_nested(),
            ModelSpec::reference_powerlaw(42),
        ] {
            assert_eq!(ModelSpec::from_kv(&spec.to_kv()).unwrap(), spec);
        }
        assert!(ModelSpec::from_kv("kind = block\nbogus = 1\n").is_err());
    }
}
