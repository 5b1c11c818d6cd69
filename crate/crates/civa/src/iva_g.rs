//! Gaussian IVA kernel: cost, SCV covariance estimate, decoupling vectors,
//! the cost gradient and the projected normalized-gradient step.
//!
//! Every function here works from the [`CrossCovarianceCache`], so none of
//! them touches the `V` samples.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CivaError, Result};
use crate::linalg;
use crate::model::{CrossCovarianceCache, DemixingSet, ScvCovariances};

/// Step-size, stopping and regularization knobs shared by every variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Initial step size.
    pub eta0: f64,
    /// Multiplicative step decay applied when the objective fails to decrease.
    pub decay: f64,
    /// Stop when `max_{k,n} 1 - |w_prevᵀ w_next| < tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Relative diagonal loading used only when a Σ_n factorization fails.
    pub ridge_rel: f64,
    /// Seed for the random orthonormal initialization.
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { eta0: 0.1, decay: 0.95, tol: 1e-6, max_iters: 2000, ridge_rel: 1e-9, seed: 0 }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(CivaError::InvalidParameter(format!("eta0 must be > 0, got {}", self.eta0)));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(CivaError::InvalidParameter(format!(
                "decay must lie in (0, 1), got {}",
                self.decay
            )));
        }
        if !(self.tol > 0.0) {
            return Err(CivaError::InvalidParameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(CivaError::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.ridge_rel >= 0.0) {
            return Err(CivaError::InvalidParameter("ridge_rel must be >= 0".into()));
        }
        Ok(())
    }
}

/// `(w_n^[k])ᵀ block(k,l) w_n^[l]`.
#[inline]
pub fn cross_moment(cache: &CrossCovarianceCache, w: &DemixingSet, n: usize, k: usize, l: usize) -> f64 {
    let wk = w.matrix(k).row(n);
    let wl = w.matrix(l).row(n);
    let block = cache.block(k, l);
    let mut acc = 0.0;
    for i in 0..block.nrows() {
        let mut inner = 0.0;
        for j in 0..block.ncols() {
            inner += block[(i, j)] * wl[j];
        }
        acc += wk[i] * inner;
    }
    acc
}

/// Maximum-likelihood SCV covariance `Σ̂_n = (1/V) Σ_v y_n(v) y_n(v)ᵀ`.
pub fn update_scv_covariance(
    w: &DemixingSet,
    cache: &CrossCovarianceCache,
    n: usize,
) -> Result<DMatrix<f64>> {
    check_dims(w, cache)?;
    if n >= w.n() {
        return Err(CivaError::IndexOutOfRange { index: n, len: w.n() });
    }
    let k = w.k();
    let mut sigma = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = cross_moment(cache, w, n, a, b);
            sigma[(a, b)] = v;
            sigma[(b, a)] = v;
        }
    }
    Ok(sigma)
}

/// Σ̂_n for every component.
pub fn scv_covariances(w: &DemixingSet, cache: &CrossCovarianceCache) -> Result<ScvCovariances> {
    let covs = (0..w.n()).map(|n| update_scv_covariance(w, cache, n)).collect::<Result<_>>()?;
    Ok(ScvCovariances::new(covs))
}

fn check_dims(w: &DemixingSet, cache: &CrossCovarianceCache) -> Result<()> {
    if w.n() != cache.n() || w.k() != cache.k() {
        return Err(CivaError::DimensionMismatch(format!(
            "demixing set is N={} K={}, cache is N={} K={}",
            w.n(),
            w.k(),
            cache.n(),
            cache.k()
        )));
    }
    Ok(())
}

/// Negative log-likelihood of the Gaussian IVA model:
///
/// `NK/2 log 2π + ½ Σ_n log det Σ_n + ½ Σ_n Σ_{k,l} (Σ_n⁻¹)_{kl} w_kᵀ R^{kl} w_l − Σ_k log|det W^[k]|`
pub fn iva_g_cost(
    w: &DemixingSet,
    sigma: &ScvCovariances,
    cache: &CrossCovarianceCache,
) -> Result<f64> {
    iva_g_cost_with_ridge(w, sigma, cache, SolverSettings::default().ridge_rel)
}

pub fn iva_g_cost_with_ridge(
    w: &DemixingSet,
    sigma: &ScvCovariances,
    cache: &CrossCovarianceCache,
    ridge_rel: f64,
) -> Result<f64> {
    check_dims(w, cache)?;
    let (n, k) = (w.n(), w.k());
    if sigma.len() != n {
        return Err(CivaError::DimensionMismatch(format!(
            "{} SCV covariances for {n} components",
            sigma.len()
        )));
    }
    let mut cost = 0.5 * (n * k) as f64 * (2.0 * PI).ln();
    for (c, s) in sigma.covariances.iter().enumerate() {
        let (chol, _) = linalg::cholesky_with_ridge(s, ridge_rel)
            .ok_or(CivaError::IllConditionedModel { component: c })?;
        let moments = update_scv_covariance(w, cache, c)?;
        cost += 0.5 * linalg::cholesky_log_det(&chol);
        cost += 0.5 * chol.solve(&moments).trace();
    }
    for m in w.matrices() {
        cost -= linalg::log_abs_det(m)?;
    }
    Ok(cost)
}

/// Column `k` of `Σ⁻¹`, together with the ridge that had to be applied.
pub fn sigma_inverse_column(sigma: &DMatrix<f64>, k: usize, ridge_rel: f64) -> Option<(DVector<f64>, f64)> {
    let (chol, ridge) = linalg::cholesky_with_ridge(sigma, ridge_rel)?;
    let mut e = DVector::zeros(sigma.nrows());
    e[k] = 1.0;
    chol.solve_mut(&mut e);
    Some((e, ridge))
}

/// Unit vector orthogonal to every row of `W` except row `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingVector {
    pub d: DVector<f64>,
    /// `dᵀ w_n`, positive by construction.
    pub dot: f64,
}

/// Computes `d_n^[k]` from a QR factorization of `[W̃ᵀ | w_n]`: the last
/// column of `Q` spans the null space of `W̃`, and the trailing diagonal of
/// `R` equals `dᵀ w_n`.
pub fn decoupling_vector(wk: &DMatrix<f64>, n: usize) -> Result<DecouplingVector> {
    let (d, dot, _) = decouple(wk, n)?;
    Ok(DecouplingVector { d, dot })
}

fn decouple(wk: &DMatrix<f64>, n: usize) -> Result<(DVector<f64>, f64, DVector<f64>)> {
    let size = wk.nrows();
    if wk.ncols() != size {
        return Err(CivaError::DimensionMismatch("demixing matrix must be square".into()));
    }
    if n >= size {
        return Err(CivaError::IndexOutOfRange { index: n, len: size });
    }
    let mut stacked = DMatrix::zeros(size, size);
    let mut col = 0;
    for r in 0..size {
        if r != n {
            stacked.set_column(col, &wk.row(r).transpose());
            col += 1;
        }
    }
    stacked.set_column(size - 1, &wk.row(n).transpose());
    let qr = stacked.qr();
    let r = qr.r();
    let diag = r.diagonal();
    let scale = diag.amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(CivaError::DegenerateDemixing("zero demixing matrix".into()));
    }
    if diag.rows(0, size - 1).iter().any(|x| x.abs() <= 1e-13 * scale) {
        return Err(CivaError::DegenerateDemixing(format!(
            "rows other than {n} are linearly dependent"
        )));
    }
    let q = qr.q();
    let mut d = q.column(size - 1).into_owned();
    let mut dot = diag[size - 1];
    if dot.abs() <= 1e-13 * scale {
        return Err(CivaError::DegenerateDemixing(format!("row {n} lies in the span of the others")));
    }
    if dot < 0.0 {
        d.neg_mut();
        dot = -dot;
    }
    Ok((d, dot, diag.into_owned()))
}

/// `(log|dᵀ w_n|, ½ log det(W̃ W̃ᵀ))`, whose sum is `log|det W|`.
pub fn log_det_split(wk: &DMatrix<f64>, n: usize) -> Result<(f64, f64)> {
    let (_, dot, diag) = decouple(wk, n)?;
    let size = wk.nrows();
    let rest: f64 = diag.rows(0, size - 1).iter().map(|x| x.abs().ln()).sum();
    Ok((dot.ln(), rest))
}

/// `∂J/∂w_n^[k] = Σ_l block(k,l) w_n^[l] (Σ_n⁻¹)_{lk} − d/(dᵀw)`.
pub fn grad_iva_g(
    w: &DemixingSet,
    sigma: &ScvCovariances,
    cache: &CrossCovarianceCache,
    n: usize,
    k: usize,
) -> Result<DVector<f64>> {
    check_dims(w, cache)?;
    if n >= w.n() || k >= w.k() {
        return Err(CivaError::IndexOutOfRange { index: n.max(k), len: w.n().min(w.k()) });
    }
    let (inv_col, _) = sigma_inverse_column(&sigma.covariances[n], k, SolverSettings::default().ridge_rel)
        .ok_or(CivaError::IllConditionedModel { component: n })?;
    let dv = decoupling_vector(w.matrix(k), n)?;
    let mut g = likelihood_gradient(cache, w, n, k, &inv_col);
    g.axpy(-1.0 / dv.dot, &dv.d, 1.0);
    Ok(g)
}

/// The data term of the gradient, `Σ_l block(k,l) w_n^[l] (Σ_n⁻¹)_{lk}`.
pub fn likelihood_gradient(
    cache: &CrossCovarianceCache,
    w: &DemixingSet,
    n: usize,
    k: usize,
    sigma_inv_col: &DVector<f64>,
) -> DVector<f64> {
    let mut g = DVector::zeros(w.n());
    for l in 0..w.k() {
        let wl = w.matrix(l).row(n).transpose();
        g.gemv(sigma_inv_col[l], cache.block(k, l), &wl, 1.0);
    }
    g
}

/// Tangent-space normalized gradient step on the unit sphere.
pub fn gradient_step(w: &DVector<f64>, g: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
    if !linalg::is_finite(g) {
        return Err(CivaError::NumericalFailure("non-finite gradient".into()));
    }
    let radial = w.dot(g);
    let tangent = g - w * radial;
    let norm = tangent.norm();
    if norm < 1e-14 {
        return Ok(w.clone());
    }
    let moved = w - tangent * (eta / norm);
    let len = moved.norm();
    if !(len > 0.0) || !len.is_finite() {
        return Err(CivaError::NumericalFailure("step left the unit sphere".into()));
    }
    Ok(moved / len)
}

/// `max_{k,n} 1 − |w_prevᵀ w_next|`.
pub fn convergence_measure(prev: &DemixingSet, next: &DemixingSet) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, b) in prev.matrices().iter().zip(next.matrices()) {
        for (ra, rb) in a.row_iter().zip(b.row_iter()) {
            worst = worst.max(1.0 - ra.dot(&rb).abs());
        }
    }
    worst
}

pub fn has_converged(prev: &DemixingSet, next: &DemixingSet, tol: f64) -> bool {
    convergence_measure(prev, next) < tol
}
