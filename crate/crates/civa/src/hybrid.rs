//! fMRI-like hybrid data with known ground truth.
//!
//! Each source SCV mixes a spatial reference, repeated across datasets,
//! with a correlated Gaussian latent block. The latent covariance ties
//! datasets together within an SCV (`mu1`) and, more weakly, across SCVs
//! (`mu0`).

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CivaError, Result};
use crate::linalg;
use crate::matrix_io;
use crate::model::{DatasetCollection, ReferenceSet};

/// How the closeness parameter `φ_n` weighs reference against latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceForm {
    /// `√(1−φ)·r + √φ·z`.
    #[default]
    VarianceFraction,
    /// `√(1−φ²)·r + φ·z`.
    Amplitude,
}

impl SourceForm {
    /// `(reference weight, latent weight)` for one `φ`.
    pub fn weights(self, phi: f64) -> (f64, f64) {
        match self {
            SourceForm::VarianceFraction => ((1.0 - phi).sqrt(), phi.sqrt()),
            SourceForm::Amplitude => ((1.0 - phi * phi).sqrt(), phi),
        }
    }
}

/// Where the spatial references come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReferenceSource {
    Synthetic {
        #[serde(default = "default_window")]
        smoothing_window: usize,
        #[serde(default = "default_pairwise_corr")]
        pairwise_corr: f64,
    },
    /// A matrix file with one reference per row.
    File { path: PathBuf },
}

fn default_window() -> usize {
    9
}

fn default_pairwise_corr() -> f64 {
    0.1
}

impl Default for ReferenceSource {
    fn default() -> Self {
        ReferenceSource::Synthetic { smoothing_window: default_window(), pairwise_corr: default_pairwise_corr() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridConfig {
    pub n: usize,
    pub k: usize,
    pub v: usize,
    /// Number of references handed to the constrained solvers.
    pub m: usize,
    #[serde(default = "default_mu0")]
    pub mu0: f64,
    #[serde(default = "default_mu1")]
    pub mu1: f64,
    /// One closeness value per source; empty means linearly spaced over
    /// `[0.3, 0.9]`.
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub form: SourceForm,
    #[serde(default)]
    pub references: ReferenceSource,
    #[serde(default = "default_cond_limit")]
    pub cond_limit: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_mu0() -> f64 {
    0.1
}

fn default_mu1() -> f64 {
    0.2
}

fn default_cond_limit() -> f64 {
    1e3
}

impl HybridConfig {
    pub fn new(n: usize, k: usize, v: usize, m: usize) -> Self {
        Self {
            n,
            k,
            v,
            m,
            mu0: default_mu0(),
            mu1: default_mu1(),
            phi: Vec::new(),
            form: SourceForm::default(),
            references: ReferenceSource::default(),
            cond_limit: default_cond_limit(),
            seed: 0,
        }
    }

    /// `φ` with the empty-list default filled in.
    pub fn phi_values(&self) -> Vec<f64> {
        if !self.phi.is_empty() {
            return self.phi.clone();
        }
        linspace(0.3, 0.9, self.n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CivaError::InvalidParameter(msg));
        if self.n < 2 || self.k < 1 || self.v <= self.n {
            return bad(format!("need N ≥ 2, K ≥ 1, V > N; got N={} K={} V={}", self.n, self.k, self.v));
        }
        if self.m < 1 || self.m > self.n {
            return bad(format!("M must be in 1..=N, got {}", self.m));
        }
        check_mu(self.mu0, self.mu1)?;
        let phi = self.phi_values();
        if phi.len() != self.n {
            return bad(format!("phi has {} entries, expected {}", phi.len(), self.n));
        }
        if phi.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("phi values must lie in [0, 1]".into());
        }
        if !(self.cond_limit > 1.0) {
            return bad(format!("cond_limit must exceed 1, got {}", self.cond_limit));
        }
        if let ReferenceSource::Synthetic { smoothing_window, pairwise_corr } = &self.references {
            if *smoothing_window == 0 {
                return bad("smoothing_window must be ≥ 1".into());
            }
            if !(0.0..1.0).contains(pairwise_corr) {
                return bad(format!("pairwise_corr must be in [0, 1), got {pairwise_corr}"));
            }
        }
        Ok(())
    }
}

fn check_mu(mu0: f64, mu1: f64) -> Result<()> {
    if !(0.0 <= mu0 && mu0 <= mu1 && mu1 <= 1.0) {
        return Err(CivaError::InvalidParameter(format!(
            "need 0 ≤ mu0 ≤ mu1 ≤ 1, got mu0={mu0} mu1={mu1}"
        )));
    }
    Ok(())
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| if i == count - 1 { hi } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 })
            .collect(),
    }
}

/// `(μ0·11ᵀ + (μ1−μ0)I_N) ⊗ 11ᵀ_K + (1−μ1)I_{NK}`, indexed `n·K + k`.
pub fn build_sigma_z(n: usize, k: usize, mu0: f64, mu1: f64) -> Result<DMatrix<f64>> {
    check_mu(mu0, mu1)?;
    let dim = n * k;
    Ok(DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            1.0
        } else if i / k == j / k {
            mu1
        } else {
            mu0
        }
    }))
}

fn standard_normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `V` draws from `N(0, Σ_z)` split into `N` blocks of `K × V`.
pub fn sample_latent(sigma_z: &DMatrix<f64>, k: usize, v: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    let dim = sigma_z.nrows();
    if k == 0 || dim % k != 0 || sigma_z.ncols() != dim {
        return Err(CivaError::DimensionMismatch(format!("Σ_z is {dim}×{}, K={k}", sigma_z.ncols())));
    }
    let factor = linalg::psd_factor(sigma_z)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = factor * standard_normal(dim, v, &mut rng);
    Ok((0..dim / k).map(|n| z.rows(n * k, k).into_owned()).collect())
}

/// Circular moving average of width `window`.
fn smooth(x: &DVector<f64>, window: usize) -> DVector<f64> {
    let v = x.len();
    let half = window / 2;
    DVector::from_fn(v, |i, _| {
        (0..window).map(|j| x[(i + v * window - half + j) % v]).sum::<f64>() / window as f64
    })
}

/// `m` smooth pseudo-spatial signals with sample pairwise correlation
/// `pairwise_corr`, each standardized.
pub fn synthesize_references(
    m: usize,
    v: usize,
    smoothing_window: usize,
    pairwise_corr: f64,
    seed: u64,
) -> Result<ReferenceSet> {
    if m == 0 || v <= m || smoothing_window == 0 {
        return Err(CivaError::InvalidParameter(format!(
            "need M ≥ 1, V > M and a positive window; got M={m} V={v} window={smoothing_window}"
        )));
    }
    let target = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { pairwise_corr });
    let mix = nalgebra::Cholesky::new(target)
        .ok_or_else(|| CivaError::InvalidParameter(format!("pairwise_corr {pairwise_corr} is not attainable")))?
        .unpack();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = standard_normal(m, v, &mut rng);
    for mut row in x.row_iter_mut() {
        let smoothed = smooth(&row.transpose(), smoothing_window);
        let mean = smoothed.mean();
        row.copy_from(&smoothed.add_scalar(-mean).transpose());
    }
    // whiten so the mixing below hits the target exactly
    let cov = &x * x.transpose() / v as f64;
    let chol = nalgebra::Cholesky::new(cov)
        .ok_or_else(|| CivaError::NumericalFailure("reference noise is rank deficient".into()))?;
    let white = chol
        .l()
        .solve_lower_triangular(&x)
        .ok_or_else(|| CivaError::NumericalFailure("whitening failed".into()))?;
    let mixed = mix * white;
    ReferenceSet::new(mixed.row_iter().map(|r| r.transpose()).collect())
}

/// `S_n = a·1_K r_nᵀ + b·Z_n` with `(a, b)` from the chosen form.
pub fn build_sources(
    latents: &[DMatrix<f64>],
    references: &ReferenceSet,
    phi: &[f64],
    form: SourceForm,
) -> Result<Vec<DMatrix<f64>>> {
    if latents.len() != phi.len() || references.len() < latents.len() {
        return Err(CivaError::DimensionMismatch(format!(
            "{} latent blocks, {} phi values, {} references",
            latents.len(),
            phi.len(),
            references.len()
        )));
    }
    latents
        .iter()
        .zip(phi)
        .enumerate()
        .map(|(n, (z, &p))| {
            let r = references.reference(n);
            if z.ncols() != r.len() {
                return Err(CivaError::DimensionMismatch("latent and reference lengths differ".into()));
            }
            let (a, b) = form.weights(p);
            let rt = r.transpose() * a;
            let mut s = z * b;
            for mut row in s.row_iter_mut() {
                row += &rt;
            }
            Ok(s)
        })
        .collect()
}

/// Gaussian mixing matrices with condition number below `cond_limit`.
pub fn generate_mixing(n: usize, k: usize, cond_limit: f64, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    const BUDGET: usize = 1000;
    if !(cond_limit > 1.0) {
        return Err(CivaError::InvalidParameter(format!("cond_limit must exceed 1, got {cond_limit}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            for _ in 0..BUDGET {
                let a = standard_normal(n, n, &mut rng);
                if linalg::condition_number(&a) < cond_limit {
                    return Ok(a);
                }
            }
            Err(CivaError::NumericalFailure(format!(
                "no mixing matrix with condition number below {cond_limit} in {BUDGET} draws"
            )))
        })
        .collect()
}

/// Sources, mixing and references behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `N` blocks of `K × V`.
    pub sources: Vec<DMatrix<f64>>,
    /// `K` matrices of `N × N`.
    pub mixing: Vec<DMatrix<f64>>,
    /// One reference per source.
    pub references: ReferenceSet,
}

impl GroundTruth {
    /// `S^[k]`: row `n` is row `k` of `S_n`.
    pub fn dataset_sources(&self, k: usize) -> DMatrix<f64> {
        let v = self.sources[0].ncols();
        DMatrix::from_fn(self.sources.len(), v, |n, j| self.sources[n][(k, j)])
    }

    /// Source `n` in dataset `k`.
    pub fn source(&self, n: usize, k: usize) -> DVector<f64> {
        self.sources[n].row(k).transpose()
    }

    /// The first `m` references, as given to constrained solvers.
    pub fn constraint_references(&self, m: usize) -> Result<ReferenceSet> {
        self.references.truncated(m)
    }
}

#[derive(Debug, Clone)]
pub struct HybridData {
    pub data: DatasetCollection,
    pub truth: GroundTruth,
}

/// `X^[k] = A^[k] S^[k]`.
pub fn assemble_datasets(
    sources: Vec<DMatrix<f64>>,
    mixing: Vec<DMatrix<f64>>,
    references: ReferenceSet,
) -> Result<HybridData> {
    let n = sources.len();
    let k = mixing.len();
    if n == 0 || sources.iter().any(|s| s.nrows() != k || s.ncols() != sources[0].ncols()) {
        return Err(CivaError::DimensionMismatch("source blocks must all be K × V".into()));
    }
    if mixing.iter().any(|a| a.nrows() != n || a.ncols() != n) {
        return Err(CivaError::DimensionMismatch("mixing matrices must be N × N".into()));
    }
    let truth = GroundTruth { sources, mixing, references };
    let datasets = (0..k).map(|kk| &truth.mixing[kk] * truth.dataset_sources(kk)).collect();
    Ok(HybridData { data: DatasetCollection::new(datasets)?, truth })
}

/// Independent seeds for the three random stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridSeeds {
    pub references: u64,
    pub latent: u64,
    pub mixing: u64,
}

impl HybridSeeds {
    pub fn from_base(seed: u64) -> Self {
        Self { references: splitmix(seed ^ 0x5245_4653), latent: splitmix(seed ^ 0x4c41_5445), mixing: splitmix(seed ^ 0x4d49_5849) }
    }
}

/// One step of SplitMix64.
pub fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The references named by the config: `N` of them, loaded or synthesized.
pub fn load_references(config: &HybridConfig, seed: u64) -> Result<ReferenceSet> {
    match &config.references {
        ReferenceSource::Synthetic { smoothing_window, pairwise_corr } => {
            synthesize_references(config.n, config.v, *smoothing_window, *pairwise_corr, seed)
        }
        ReferenceSource::File { path } => {
            let rows = matrix_io::read_matrix(path)?;
            if rows.nrows() < config.n || rows.ncols() != config.v {
                return Err(CivaError::DimensionMismatch(format!(
                    "reference file is {}×{}, need at least {}×{}",
                    rows.nrows(),
                    rows.ncols(),
                    config.n,
                    config.v
                )));
            }
            ReferenceSet::from_rows(&rows.rows(0, config.n).into_owned())
        }
    }
}

pub fn generate(config: &HybridConfig) -> Result<HybridData> {
    generate_with(config, HybridSeeds::from_base(config.seed))
}

pub fn generate_with(config: &HybridConfig, seeds: HybridSeeds) -> Result<HybridData> {
    config.validate()?;
    let references = load_references(config, seeds.references)?;
    let sigma_z = build_sigma_z(config.n, config.k, config.mu0, config.mu1)?;
    let latents = sample_latent(&sigma_z, config.k, config.v, seeds.latent)?;
    let sources = build_sources(&latents, &references, &config.phi_values(), config.form)?;
    let mixing = generate_mixing(config.n, config.k, config.cond_limit, seeds.mixing)?;
    assemble_datasets(sources, mixing, references)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn corr(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let a = a.add_scalar(-a.mean());
        let b = b.add_scalar(-b.mean());
        a.dot(&b) / (a.norm() * b.norm())
    }

    fn cov(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let a = a.add_scalar(-a.mean());
        let b = b.add_scalar(-b.mean());
        a.dot(&b) / a.len() as f64
    }

    #[test]
    fn sigma_z_small_case() {
        let s = build_sigma_z(2, 2, 0.1, 0.2).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 0.2, 0.1, 0.1, 0.2, 1.0, 0.1, 0.1, 0.1, 0.1, 1.0, 0.2, 0.1, 0.1, 0.2, 1.0],
        );
        assert_eq!(s, expected);
        assert!(s.symmetric_eigenvalues().min() > 0.0);
        assert_eq!(build_sigma_z(3, 2, 0.0, 0.0).unwrap(), DMatrix::identity(6, 6));
        assert!(build_sigma_z(2, 2, 0.3, 0.2).is_err());
    }

    #[test]
    fn sigma_z_unit_diagonal_and_psd() {
        for (mu0, mu1) in [(0.0, 1.0), (0.5, 0.5), (0.1, 0.9), (1.0, 1.0)] {
            let s = build_sigma_z(3, 4, mu0, mu1).unwrap();
            assert!(s.diagonal().iter().all(|&d| d == 1.0));
            assert!(s.clone().symmetric_eigenvalues().min() > -1e-12);
        }
    }

    #[test]
    fn latent_covariance_converges() {
        let sigma = build_sigma_z(4, 4, 0.1, 0.2).unwrap();
        let blocks = sample_latent(&sigma, 4, 50_000, 11).unwrap();
        let rows: Vec<DVector<f64>> = blocks.iter().flat_map(|b| b.row_iter().map(|r| r.transpose()).collect::<Vec<_>>()).collect();
        for i in 0..16 {
            for j in 0..16 {
                assert!((cov(&rows[i], &rows[j]) - sigma[(i, j)]).abs() < 0.02, "({i},{j})");
            }
        }
    }

    #[test]
    fn latent_sampling_is_deterministic() {
        let sigma = build_sigma_z(2, 3, 0.1, 0.2).unwrap();
        assert_eq!(sample_latent(&sigma, 3, 100, 5).unwrap(), sample_latent(&sigma, 3, 100, 5).unwrap());
        assert_ne!(sample_latent(&sigma, 3, 100, 5).unwrap(), sample_latent(&sigma, 3, 100, 6).unwrap());
    }

    #[test]
    fn independent_latents_are_uncorrelated() {
        let sigma = DMatrix::identity(6, 6);
        let blocks = sample_latent(&sigma, 3, 50_000, 2).unwrap();
        for k in 0..3 {
            for l in 0..3 {
                let c = corr(&blocks[0].row(k).transpose(), &blocks[1].row(l).transpose());
                assert!(c.abs() < 0.02);
            }
        }
    }

    #[test]
    fn references_are_standardized_and_correlated_as_requested() {
        for target in [0.0, 0.2] {
            let refs = synthesize_references(4, 50_000, 9, target, 3).unwrap();
            for r in refs.references() {
                assert!(r.mean().abs() < 1e-10);
                assert_relative_eq!(r.norm_squared() / r.len() as f64, 1.0, epsilon = 1e-8);
            }
            for i in 0..4 {
                for j in 0..i {
                    let c = corr(refs.reference(i), refs.reference(j));
                    assert!((c - target).abs() < 0.03, "{c} vs {target}");
                }
            }
        }
        assert!(synthesize_references(3, 100, 3, 1.0, 0).is_err());
    }

    #[test]
    fn references_are_smooth() {
        let refs = synthesize_references(1, 10_000, 9, 0.0, 1).unwrap();
        let r = refs.reference(0);
        let lag1 = corr(&r.rows(0, 9_999).into_owned(), &r.rows(1, 9_999).into_owned());
        assert!(lag1 > 0.8, "{lag1}");
    }

    fn one_scv(phi: f64, form: SourceForm) -> (DMatrix<f64>, DVector<f64>) {
        let (k, v) = (4, 50_000);
        let refs = synthesize_references(1, v, 9, 0.0, 7).unwrap();
        let sigma = build_sigma_z(1, k, 0.1, 0.2).unwrap();
        let z = sample_latent(&sigma, k, v, 8).unwrap();
        let s = build_sources(&z, &refs, &[phi], form).unwrap();
        (s[0].clone(), refs.reference(0).clone())
    }

    #[test]
    fn variance_fraction_second_moments() {
        for (phi, within) in [(0.9, 0.28), (0.3, 0.76)] {
            let (s, r) = one_scv(phi, SourceForm::VarianceFraction);
            for k in 0..4 {
                let sk = s.row(k).transpose();
                for l in 0..k {
                    let c = cov(&sk, &s.row(l).transpose());
                    assert!((c - within).abs() < 0.02, "phi={phi}: {c}");
                }
                let rc = corr(&sk, &r);
                assert!((rc - (1.0 - phi).sqrt()).abs() < 0.03, "phi={phi}: {rc}");
            }
        }
    }

    #[test]
    fn amplitude_second_moments() {
        let (s, _) = one_scv(0.9, SourceForm::Amplitude);
        let c = cov(&s.row(0).transpose(), &s.row(1).transpose());
        assert!((c - 0.352).abs() < 0.02, "{c}");
    }

    #[test]
    fn pure_reference_limit() {
        let (s, r) = one_scv(0.0, SourceForm::VarianceFraction);
        for row in s.row_iter() {
            assert_eq!(row.transpose(), r);
        }
    }

    #[test]
    fn mixing_respects_condition_limit() {
        let a = generate_mixing(5, 6, 50.0, 4).unwrap();
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|m| linalg::condition_number(m) < 50.0));
        assert_eq!(a, generate_mixing(5, 6, 50.0, 4).unwrap());
        assert!(generate_mixing(5, 1, 1.0, 0).is_err());
    }

    #[test]
    fn mixing_acceptance_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let accepted = (0..100)
            .filter(|_| linalg::condition_number(&standard_normal(20, 20, &mut rng)) < 1e3)
            .count();
        assert!(accepted > 90, "{accepted}");
    }

    #[test]
    fn identity_mixing_passes_sources_through() {
        let refs = synthesize_references(3, 200, 3, 0.0, 0).unwrap();
        let z = sample_latent(&build_sigma_z(3, 2, 0.1, 0.2).unwrap(), 2, 200, 0).unwrap();
        let s = build_sources(&z, &refs, &[0.3, 0.5, 0.7], SourceForm::VarianceFraction).unwrap();
        let hd = assemble_datasets(s, vec![DMatrix::identity(3, 3); 2], refs).unwrap();
        for k in 0..2 {
            assert_eq!(hd.data.dataset(k), &hd.truth.dataset_sources(k));
        }
    }

    #[test]
    fn inverse_mixing_recovers_sources() {
        let config = HybridConfig::new(4, 3, 500, 2);
        let hd = generate(&config).unwrap();
        for k in 0..3 {
            let w = hd.truth.mixing[k].clone().try_inverse().unwrap();
            let recovered = w * hd.data.dataset(k);
            assert_relative_eq!(recovered, hd.truth.dataset_sources(k), epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let config = HybridConfig { seed: 42, ..HybridConfig::new(3, 2, 300, 3) };
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.data.datasets(), b.data.datasets());
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn references_load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("refs.ivamat");
        let refs = synthesize_references(4, 100, 3, 0.1, 9).unwrap();
        matrix_io::write_matrix(&path, &refs.to_rows()).unwrap();
        let config = HybridConfig {
            references: ReferenceSource::File { path },
            ..HybridConfig::new(3, 2, 100, 2)
        };
        let loaded = load_references(&config, 0).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_relative_eq!(loaded.reference(2), refs.reference(2), epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(HybridConfig::new(4, 2, 100, 4).validate().is_ok());
        assert!(HybridConfig::new(4, 2, 100, 5).validate().is_err());
        assert!(HybridConfig { phi: vec![0.5; 3], ..HybridConfig::new(4, 2, 100, 2) }.validate().is_err());
        assert!(HybridConfig { mu0: 0.5, ..HybridConfig::new(4, 2, 100, 2) }.validate().is_err());
        assert_eq!(HybridConfig::new(4, 2, 100, 2).phi_values(), linspace(0.3, 0.9, 4));
    }
}
