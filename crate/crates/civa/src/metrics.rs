//! Separation quality and run-to-run consistency.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraint::similarity;
use crate::error::{CivaError, Result};
use crate::model::{DatasetCollection, DemixingSet};

/// Intersymbol interference of one square matrix, normalized to `[0, 1]`.
pub fn isi(g: &DMatrix<f64>) -> Result<f64> {
    let n = g.nrows();
    if n < 2 || g.ncols() != n {
        return Err(CivaError::DimensionMismatch(format!("ISI needs a square matrix with N ≥ 2, got {}×{}", n, g.ncols())));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(CivaError::UndefinedMetric("non-finite entry".into()));
    }
    let a = g.abs();
    let mut total = 0.0;
    for (i, row) in a.row_iter().enumerate() {
        let max = row.max();
        if max == 0.0 {
            return Err(CivaError::UndefinedMetric(format!("row {i} is zero")));
        }
        total += row.sum() / max - 1.0;
    }
    for (j, col) in a.column_iter().enumerate() {
        let max = col.max();
        if max == 0.0 {
            return Err(CivaError::UndefinedMetric(format!("column {j} is zero")));
        }
        total += col.sum() / max - 1.0;
    }
    Ok(total / (2 * n * (n - 1)) as f64)
}

/// ISI of the mean absolute matrix `(1/K) Σ_k |G^[k]|`.
pub fn joint_isi(gs: &[DMatrix<f64>]) -> Result<f64> {
    let first = gs.first().ok_or_else(|| CivaError::UndefinedMetric("no matrices".into()))?;
    let mut mean = DMatrix::zeros(first.nrows(), first.ncols());
    for g in gs {
        if g.shape() != first.shape() {
            return Err(CivaError::DimensionMismatch("global matrices differ in shape".into()));
        }
        mean += g.abs();
    }
    isi(&(mean / gs.len() as f64))
}

/// `G^[k] = W^[k] A^[k]`.
pub fn global_matrices(w: &DemixingSet, mixing: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    if mixing.len() != w.k() || mixing.iter().any(|a| a.shape() != (w.n(), w.n())) {
        return Err(CivaError::DimensionMismatch("mixing does not match demixing set".into()));
    }
    Ok(w.matrices().iter().zip(mixing).map(|(wk, ak)| wk * ak).collect())
}

/// Joint-ISI of a demixing set against the true mixing.
pub fn joint_isi_of(w: &DemixingSet, mixing: &[DMatrix<f64>]) -> Result<f64> {
    joint_isi(&global_matrices(w, mixing)?)
}

/// For run `i`: `(1/R) Σ_{j≠i} jointISI({W_j^[k] (W_i^[k])⁻¹})`, treating
/// run `i`'s inverse demixing as a mixing estimate. Zero when runs differ
/// only by component order and scale.
pub fn cross_joint_isi(runs: &[DemixingSet]) -> Result<Vec<f64>> {
    cross_joint_isi_with(runs, CrossOrder::DemixThenMix)
}

/// Operand order for the pairwise products in [`cross_joint_isi_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossOrder {
    /// `W_j (W_i)⁻¹`.
    DemixThenMix,
    /// `(W_i)⁻¹ W_j`. Not invariant to reordering the components of a run.
    MixThenDemix,
}

pub fn cross_joint_isi_with(runs: &[DemixingSet], order: CrossOrder) -> Result<Vec<f64>> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    if runs.iter().any(|w| w.n() != first.n() || w.k() != first.k()) {
        return Err(CivaError::DimensionMismatch("runs differ in shape".into()));
    }
    let inverses: Vec<Vec<DMatrix<f64>>> = runs
        .iter()
        .map(|w| {
            w.matrices()
                .iter()
                .map(|m| {
                    m.clone()
                        .try_inverse()
                        .ok_or_else(|| CivaError::DegenerateDemixing("singular demixing matrix".into()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let r = runs.len();
    (0..r)
        .map(|i| {
            let mut acc = 0.0;
            for wj in runs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, w)| w) {
                let p: Vec<DMatrix<f64>> =
                    inverses[i]
                    .iter()
                    .zip(wj.matrices())
                    .map(|(ai, wjk)| match order {
                        CrossOrder::DemixThenMix => wjk * ai,
                        CrossOrder::MixThenDemix => ai * wjk,
                    })
                    .collect();
                acc += joint_isi(&p)?;
            }
            Ok(acc / r as f64)
        })
        .collect()
}

/// How estimated components were paired with true sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Component `n` against source `n`.
    Index,
    /// Greedy correlation matching.
    Matched,
}

/// `Y^[k] = W^[k] X^[k]` for every dataset.
fn estimates(w: &DemixingSet, data: &DatasetCollection) -> Result<Vec<DMatrix<f64>>> {
    let dims = data.dims();
    if w.n() != dims.n || w.k() != dims.k {
        return Err(CivaError::DimensionMismatch("demixing set does not match datasets".into()));
    }
    Ok((0..dims.k).map(|k| w.matrix(k) * data.dataset(k)).collect())
}

fn row(m: &DMatrix<f64>, i: usize) -> DVector<f64> {
    m.row(i).transpose()
}

/// `sqrt((1/MK) Σ_{n<M} Σ_k ε²(s_n^[k], y_{π(n)}^[k]))`. `sources` holds
/// one `K × V` block per true source; `assignment[n]` is the estimated
/// component paired with source `n` (identity when `None`).
pub fn similarity_factor(
    sources: &[DMatrix<f64>],
    w: &DemixingSet,
    data: &DatasetCollection,
    m: usize,
    assignment: Option<&[usize]>,
) -> Result<f64> {
    if m == 0 || m > sources.len() {
        return Err(CivaError::IndexOutOfRange { index: m, len: sources.len() });
    }
    let y = estimates(w, data)?;
    let k = y.len();
    let mut acc = 0.0;
    for (n, s) in sources.iter().take(m).enumerate() {
        let est = assignment.map_or(n, |a| a[n]);
        for (kk, yk) in y.iter().enumerate() {
            let e = similarity(&row(s, kk), &row(yk, est))?;
            acc += e * e;
        }
    }
    Ok((acc / (m * k) as f64).sqrt())
}

/// `C[n][j] = (1/K) Σ_k |corr(s_n^[k], y_j^[k])|`.
pub fn mean_similarity_matrix(
    sources: &[DMatrix<f64>],
    w: &DemixingSet,
    data: &DatasetCollection,
) -> Result<DMatrix<f64>> {
    let y = estimates(w, data)?;
    let n = w.n();
    if sources.len() != n {
        return Err(CivaError::DimensionMismatch("one source block per component expected".into()));
    }
    let mut c = DMatrix::zeros(n, n);
    for (kk, yk) in y.iter().enumerate() {
        for (i, s) in sources.iter().enumerate() {
            let s = row(s, kk);
            for j in 0..n {
                c[(i, j)] += similarity(&s, &row(yk, j))?;
            }
        }
    }
    Ok(c / y.len() as f64)
}

/// Greedy assignment maximizing `c`: `result[i]` is the column paired with
/// row `i`. Ties go to the lowest index.
pub fn greedy_assignment(c: &DMatrix<f64>) -> Vec<usize> {
    let n = c.nrows();
    let mut out = vec![usize::MAX; n];
    let mut used = vec![false; c.ncols()];
    for _ in 0..n.min(c.ncols()) {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for i in (0..n).filter(|&i| out[i] == usize::MAX) {
            for j in (0..c.ncols()).filter(|&j| !used[j]) {
                if c[(i, j)] > best.0 {
                    best = (c[(i, j)], i, j);
                }
            }
        }
        out[best.1] = best.2;
        used[best.2] = true;
    }
    out
}

/// Pairs each true source with an estimated component.
pub fn match_components(sources: &[DMatrix<f64>], w: &DemixingSet, data: &DatasetCollection) -> Result<Vec<usize>> {
    Ok(greedy_assignment(&mean_similarity_matrix(sources, w, data)?))
}
