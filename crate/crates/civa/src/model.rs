//! Shared data model: observed datasets, the cross-covariance cache that
//! makes solver iterations independent of the sample count, demixing
//! matrices, SCV covariances and reference signals.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CivaError, Result};
use crate::linalg;

/// Row means below this are treated as zero.
pub const CENTERING_TOL: f64 = 1e-10;

/// Number of channels/components `n`, datasets `k` and samples `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub k: usize,
    pub v: usize,
}

/// The `K` observation matrices, each `N × V` (rows are channels).
#[derive(Debug, Clone)]
pub struct DatasetCollection {
    datasets: Vec<DMatrix<f64>>,
    centered: bool,
}

impl DatasetCollection {
    /// Validates that all datasets share one `N × V` shape with
    /// `N ≥ 2`, `K ≥ 1` and `V > N`.
    pub fn new(datasets: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = datasets.first() else {
            return Err(CivaError::DimensionMismatch("need at least one dataset".into()));
        };
        let (n, v) = first.shape();
        if let Some((k, m)) = datasets.iter().enumerate().find(|(_, m)| m.shape() != (n, v)) {
            return Err(CivaError::DimensionMismatch(format!(
                "dataset {k} is {}x{}, dataset 0 is {n}x{v}",
                m.nrows(),
                m.ncols()
            )));
        }
        if n < 2 {
            return Err(CivaError::DimensionMismatch(format!("need N >= 2, got {n}")));
        }
        if v <= n {
            return Err(CivaError::DimensionMismatch(format!(
                "need more samples than channels (V={v}, N={n})"
            )));
        }
        let centered = datasets.iter().all(rows_are_centered);
        Ok(Self { datasets, centered })
    }

    pub fn dims(&self) -> Dims {
        let (n, v) = self.datasets[0].shape();
        Dims { n, k: self.datasets.len(), v }
    }

    pub fn dataset(&self, k: usize) -> &DMatrix<f64> {
        &self.datasets[k]
    }

    pub fn datasets(&self) -> &[DMatrix<f64>] {
        &self.datasets
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn into_inner(self) -> Vec<DMatrix<f64>> {
        self.datasets
    }
}

fn rows_are_centered(m: &DMatrix<f64>) -> bool {
    let v = m.ncols() as f64;
    m.row_iter().all(|row| (row.sum() / v).abs() < CENTERING_TOL)
}

/// Subtract each row's mean.
pub fn center_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let v = m.ncols() as f64;
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / v;
        row.add_scalar_mut(-mean);
    }
    out
}

/// Returns a centered copy; the input is left untouched.
pub fn center_datasets(raw: &DatasetCollection) -> DatasetCollection {
    let datasets: Vec<_> = raw.datasets.iter().map(center_rows).collect();
    DatasetCollection { datasets, centered: true }
}

/// Per-dataset symmetric whitening matrices `Q^[k] = C_k^{-1/2}`, with
/// `C_k = (1/V) X^[k] X^[k]ᵀ` of the centered data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whitening {
    pub matrices: Vec<DMatrix<f64>>,
}

impl Whitening {
    /// Demixing matrices for the unwhitened data: `W^[k] Q^[k]`. Rows are
    /// no longer unit norm.
    pub fn to_raw(&self, w: &DemixingSet) -> Result<DemixingSet> {
        if w.k() != self.matrices.len() {
            return Err(CivaError::DimensionMismatch("whitening does not match demixing set".into()));
        }
        DemixingSet::new(w.matrices().iter().zip(&self.matrices).map(|(wk, q)| wk * q).collect())
    }
}

/// Whitens centered datasets. Errors on a rank-deficient dataset.
pub fn whiten_datasets(data: &DatasetCollection) -> Result<(DatasetCollection, Whitening)> {
    if !data.is_centered() {
        return Err(CivaError::NotCentered);
    }
    let v = data.dims().v as f64;
    let mut matrices = Vec::with_capacity(data.datasets.len());
    let mut datasets = Vec::with_capacity(data.datasets.len());
    for (k, x) in data.datasets.iter().enumerate() {
        let c = x * x.transpose() / v;
        let eig = c.symmetric_eigen();
        let top = eig.eigenvalues.amax();
        if eig.eigenvalues.iter().any(|&l| !(l > 1e-12 * top)) {
            return Err(CivaError::NumericalFailure(format!("dataset {k} is rank deficient")));
        }
        let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let q = &eig.eigenvectors * scale * eig.eigenvectors.transpose();
        datasets.push(&q * x);
        matrices.push(q);
    }
    Ok((DatasetCollection { datasets, centered: true }, Whitening { matrices }))
}

/// `block(k, l) = (1/V) X^[k] X^[l]ᵀ` for every dataset pair.
#[derive(Debug, Clone)]
pub struct CrossCovarianceCache {
    n: usize,
    k: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl CrossCovarianceCache {
    /// The only pass over the samples in the solver path. Blocks with
    /// `k ≤ l` are computed; the lower triangle is their exact transpose.
    pub fn build(data: &DatasetCollection) -> Result<Self> {
        if !data.is_centered() {
            return Err(CivaError::NotCentered);
        }
        let Dims { n, k, v } = data.dims();
        let scale = 1.0 / v as f64;
        // Transposed copies make each block a contiguous `Aᵀ B` product.
        let transposed: Vec<DMatrix<f64>> = data.datasets.iter().map(|x| x.transpose()).collect();
        let mut blocks = vec![DMatrix::zeros(n, n); k * k];
        for a in 0..k {
            for b in a..k {
                let block = transposed[a].tr_mul(&transposed[b]) * scale;
                if a != b {
                    blocks[b * k + a] = block.transpose();
                }
                blocks[a * k + b] = block;
            }
        }
        Ok(Self { n, k, blocks })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn block(&self, k: usize, l: usize) -> &DMatrix<f64> {
        &self.blocks[k * self.k + l]
    }
}

/// The `K` demixing matrices `W^[k]`; row `n` of `W^[k]` is `w_n^[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemixingSet {
    matrices: Vec<DMatrix<f64>>,
}

impl DemixingSet {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(CivaError::DimensionMismatch("need at least one matrix".into()));
        };
        let n = first.nrows();
        if matrices.iter().any(|m| m.shape() != (n, n)) {
            return Err(CivaError::DimensionMismatch(
                "demixing matrices must all be N x N".into(),
            ));
        }
        Ok(Self { matrices })
    }

    /// Same matrices with every row scaled to unit norm.
    pub fn normalized(mut self) -> Result<Self> {
        for (k, m) in self.matrices.iter_mut().enumerate() {
            for (row, mut r) in m.row_iter_mut().enumerate() {
                let norm = r.norm();
                if norm == 0.0 || !norm.is_finite() {
                    return Err(CivaError::NonUnitRow { dataset: k, row, norm });
                }
                r.unscale_mut(norm);
            }
        }
        Ok(self)
    }

    /// One orthonormalized standard-normal matrix per dataset.
    pub fn random_orthonormal(n: usize, k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrices = (0..k)
            .map(|_| {
                let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
                linalg::orthonormalize(&g)
            })
            .collect();
        Self { matrices }
    }

    pub fn n(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrix(&self, k: usize) -> &DMatrix<f64> {
        &self.matrices[k]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// `w_n^[k]` as a column vector.
    pub fn row(&self, k: usize, n: usize) -> DVector<f64> {
        self.matrices[k].row(n).transpose()
    }

    pub fn set_row(&mut self, k: usize, n: usize, w: &DVector<f64>) {
        self.matrices[k].set_row(n, &w.transpose());
    }

    /// Largest deviation of any row norm from one.
    pub fn max_row_norm_error(&self) -> f64 {
        self.matrices
            .iter()
            .flat_map(|m| m.row_iter().map(|r| (r.norm() - 1.0).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    pub fn check_unit_rows(&self, tol: f64) -> Result<()> {
        for (k, m) in self.matrices.iter().enumerate() {
            for (row, r) in m.row_iter().enumerate() {
                let norm = r.norm();
                if (norm - 1.0).abs() > tol {
                    return Err(CivaError::NonUnitRow { dataset: k, row, norm });
                }
            }
        }
        Ok(())
    }

    pub fn into_inner(self) -> Vec<DMatrix<f64>> {
        self.matrices
    }
}

/// `y_n^[k] = (w_n^[k])ᵀ X^[k]` for every dataset. Makes a full pass over
/// the samples, so it is meant for metrics and diagnostics only.
pub fn estimate_sources(
    w: &DemixingSet,
    data: &DatasetCollection,
    n: usize,
    strict: bool,
) -> Result<Vec<DVector<f64>>> {
    let dims = data.dims();
    if w.n() != dims.n || w.k() != dims.k {
        return Err(CivaError::DimensionMismatch(
            "demixing set does not match datasets".into(),
        ));
    }
    if n >= dims.n {
        return Err(CivaError::IndexOutOfRange { index: n, len: dims.n });
    }
    (0..dims.k)
        .map(|k| {
            let row = w.matrix(k).row(n);
            if strict {
                let norm = row.norm();
                if (norm - 1.0).abs() > 1e-10 {
                    return Err(CivaError::NonUnitRow { dataset: k, row: n, norm });
                }
            }
            Ok((row * data.dataset(k)).transpose())
        })
        .collect()
}

/// One `K × K` covariance per SCV, plus the diagonal loading used when
/// each was last factorized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScvCovariances {
    pub covariances: Vec<DMatrix<f64>>,
    pub ridge: Vec<f64>,
}

impl ScvCovariances {
    pub fn new(covariances: Vec<DMatrix<f64>>) -> Self {
        let ridge = vec![0.0; covariances.len()];
        Self { covariances, ridge }
    }

    pub fn len(&self) -> usize {
        self.covariances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariances.is_empty()
    }
}

/// Reference signals, re-normalized to zero mean and unit (population)
/// variance on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    references: Vec<DVector<f64>>,
}

impl ReferenceSet {
    pub fn new(references: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = references.first() else {
            return Err(CivaError::DimensionMismatch("need at least one reference".into()));
        };
        let v = first.len();
        let mut out = Vec::with_capacity(references.len());
        for (m, r) in references.into_iter().enumerate() {
            if r.len() != v {
                return Err(CivaError::DimensionMismatch(format!(
                    "reference {m} has {} samples, expected {v}",
                    r.len()
                )));
            }
            out.push(standardize(&r).ok_or_else(|| {
                CivaError::DegenerateSignal(format!("reference {m} has zero variance"))
            })?);
        }
        Ok(Self { references: out })
    }

    /// Rows of `m` are references.
    pub fn from_rows(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.row_iter().map(|r| r.transpose()).collect())
    }

    pub fn len(&self) -> usize {
        self.references.len()
    }

    pub fn is_empty(&self) -> bool {
        self.references.is_empty()
    }

    pub fn samples(&self) -> usize {
        self.references[0].len()
    }

    pub fn reference(&self, m: usize) -> &DVector<f64> {
        &self.references[m]
    }

    pub fn references(&self) -> &[DVector<f64>] {
        &self.references
    }

    /// First `m` references.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.len() {
            return Err(CivaError::IndexOutOfRange { index: m, len: self.len() });
        }
        Ok(Self { references: self.references[..m].to_vec() })
    }

    pub fn to_rows(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.samples(), |i, j| self.references[i][j])
    }

    /// Cache `(1/V) X^[k] r_m` for every dataset and reference.
    pub fn project(&self, data: &DatasetCollection) -> Result<ProjectedReferences> {
        let dims = data.dims();
        if self.samples() != dims.v {
            return Err(CivaError::DimensionMismatch(format!(
                "references have {} samples, datasets have {}",
                self.samples(),
                dims.v
            )));
        }
        if self.len() > dims.n {
            return Err(CivaError::DimensionMismatch(format!(
                "{} references for {} components",
                self.len(),
                dims.n
            )));
        }
        let scale = 1.0 / dims.v as f64;
        let projections = (0..dims.k)
            .map(|k| {
                self.references
                    .iter()
                    .map(|r| data.dataset(k) * r * scale)
                    .collect()
            })
            .collect();
        let energy = self.references.iter().map(|r| r.norm_squared() * scale).collect();
        Ok(ProjectedReferences { m: self.len(), k: dims.k, projections, energy })
    }
}

/// Zero mean, unit population variance. `None` for a constant signal.
/// Signals that are already standard to rounding error come back unchanged,
/// so a stored reference set reloads bit for bit.
pub fn standardize(r: &DVector<f64>) -> Option<DVector<f64>> {
    let v = r.len() as f64;
    let mean = r.sum() / v;
    let centered = r.add_scalar(-mean);
    let sd = (centered.norm_squared() / v).sqrt();
    if sd <= f64::EPSILON * mean.abs().max(1.0) || !sd.is_finite() {
        return None;
    }
    if mean.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12 {
        return Some(r.clone());
    }
    Some(centered / sd)
}

/// V-free view of the references: `(1/V) X^[k] r_m` and `(1/V) ‖r_m‖²`.
#[derive(Debug, Clone)]
pub struct ProjectedReferences {
    m: usize,
    k: usize,
    projections: Vec<Vec<DVector<f64>>>,
    energy: Vec<f64>,
}

impl ProjectedReferences {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `(1/V) X^[k] r_m`.
    #[inline]
    pub fn projection(&self, m: usize, k: usize) -> &DVector<f64> {
        &self.projections[k][m]
    }

    /// `(1/V) ‖r_m‖²`.
    #[inline]
    pub fn energy(&self, m: usize) -> f64 {
        self.energy[m]
    }
}
