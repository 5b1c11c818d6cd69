//! Reference-driven terms: the similarity measure and its V-free gradient,
//! the augmented Lagrangian penalty with its multiplier and threshold
//! dynamics, and the threshold-free reference regularizer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CivaError, Result};
use crate::model::{CrossCovarianceCache, DemixingSet, ProjectedReferences};

/// Which side of the current similarity the next threshold is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Smallest candidate strictly above ε: an over-tight constraint.
    ArgMin,
    /// Largest candidate at or below ε: a satisfied constraint.
    ArgMax,
}

/// How the thresholds `ρ_n^[k]` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThresholdStrategy {
    /// One constant threshold for every constraint.
    Fixed { rho: f64 },
    /// Per component, the candidate closest to any dataset's similarity;
    /// shared across datasets.
    PerComponent { thresholds: Vec<f64> },
    /// Per (component, dataset), switching between [`Scheme::ArgMin`] and
    /// [`Scheme::ArgMax`] when the multiplier crosses `mu_max` or hits zero.
    AdaptiveReverse { thresholds: Vec<f64>, mu_max: f64 },
    /// A single scheme with no switching. Used to probe multiplier dynamics.
    Pinned { scheme: Scheme, thresholds: Vec<f64> },
}

impl ThresholdStrategy {
    pub fn thresholds(&self) -> &[f64] {
        match self {
            Self::Fixed { .. } => &[],
            Self::PerComponent { thresholds }
            | Self::AdaptiveReverse { thresholds, .. }
            | Self::Pinned { thresholds, .. } => thresholds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Fixed { rho } => {
                if !(0.0..=1.0).contains(rho) {
                    return Err(CivaError::InvalidParameter(format!("rho {rho} outside [0, 1]")));
                }
            }
            Self::AdaptiveReverse { mu_max, .. } if !(*mu_max > 0.0) => {
                return Err(CivaError::InvalidParameter(format!("mu_max must be > 0, got {mu_max}")));
            }
            _ => {}
        }
        if !matches!(self, Self::Fixed { .. }) {
            let t = self.thresholds();
            if t.is_empty() {
                return Err(CivaError::InvalidParameter("empty threshold set".into()));
            }
            if t.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
                return Err(CivaError::InvalidParameter("thresholds must lie in (0, 1)".into()));
            }
            if t.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CivaError::InvalidParameter(
                    "thresholds must be strictly ascending".into(),
                ));
            }
        }
        Ok(())
    }
}

/// `{0.001, 0.1, 0.2, …, 0.9}`.
pub fn pt_thresholds() -> Vec<f64> {
    std::iter::once(0.001).chain((1..=9).map(|i| i as f64 / 10.0)).collect()
}

/// `{0.01, 0.02, …, 0.99}`.
pub fn ar_thresholds() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Thresholds, multipliers and scheme flags for the `M × K` constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintState {
    pub rho: DMatrix<f64>,
    pub mu: DMatrix<f64>,
    /// Row-major `M × K` scheme flags; only consulted by adaptive strategies.
    pub scheme: Vec<Scheme>,
    pub gamma: f64,
    pub strategy: ThresholdStrategy,
}

impl ConstraintState {
    /// Multipliers start at zero and every scheme flag at [`Scheme::ArgMin`]
    /// (or the pinned scheme). Thresholds start at zero until the first
    /// selection.
    pub fn new(m: usize, k: usize, gamma: f64, strategy: ThresholdStrategy) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(CivaError::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
        }
        strategy.validate()?;
        let initial = match &strategy {
            ThresholdStrategy::Pinned { scheme, .. } => *scheme,
            _ => Scheme::ArgMin,
        };
        Ok(Self {
            rho: DMatrix::zeros(m, k),
            mu: DMatrix::zeros(m, k),
            scheme: vec![initial; m * k],
            gamma,
            strategy,
        })
    }

    pub fn m(&self) -> usize {
        self.rho.nrows()
    }

    pub fn k(&self) -> usize {
        self.rho.ncols()
    }

    pub fn scheme(&self, n: usize, k: usize) -> Scheme {
        self.scheme[n * self.k() + k]
    }

    pub fn mu_max(&self) -> Option<f64> {
        match self.strategy {
            ThresholdStrategy::AdaptiveReverse { mu_max, .. } => Some(mu_max),
            _ => None,
        }
    }

    /// Flip the scheme of constraint `(n, k)` based on its multiplier.
    /// Non-adaptive strategies never switch.
    pub fn maybe_switch_scheme(&mut self, n: usize, k: usize) -> Scheme {
        let idx = n * self.k() + k;
        if let Some(mu_max) = self.mu_max() {
            let mu = self.mu[(n, k)];
            if mu >= mu_max {
                self.scheme[idx] = Scheme::ArgMax;
            } else if mu <= 0.0 {
                self.scheme[idx] = Scheme::ArgMin;
            }
        }
        self.scheme[idx]
    }

    /// Threshold for `(n, k)` given the `M × K` similarity matrix.
    pub fn select_threshold(&self, eps: &DMatrix<f64>, n: usize, k: usize) -> f64 {
        match &self.strategy {
            ThresholdStrategy::Fixed { rho } => *rho,
            ThresholdStrategy::PerComponent { thresholds } => {
                let row: Vec<f64> = eps.row(n).iter().copied().collect();
                select_closest(thresholds, &row)
            }
            ThresholdStrategy::AdaptiveReverse { thresholds, .. } => {
                select_by_scheme(thresholds, self.scheme(n, k), eps[(n, k)])
            }
            ThresholdStrategy::Pinned { scheme, thresholds } => {
                select_by_scheme(thresholds, *scheme, eps[(n, k)])
            }
        }
    }
}

/// The candidate minimizing `min_k |ρ − ε^[k]|`; ties go to the smaller candidate.
pub fn select_closest(thresholds: &[f64], eps: &[f64]) -> f64 {
    let mut best = thresholds[0];
    let mut best_dist = f64::INFINITY;
    for &rho in thresholds {
        let dist = eps.iter().map(|e| (rho - e).abs()).fold(f64::INFINITY, f64::min);
        if dist < best_dist {
            best = rho;
            best_dist = dist;
        }
    }
    best
}

/// Smallest candidate strictly above `eps`, or the largest candidate if none is.
pub fn select_argmin(thresholds: &[f64], eps: f64) -> f64 {
    thresholds
        .iter()
        .copied()
        .find(|&rho| rho > eps)
        .unwrap_or(thresholds[thresholds.len() - 1])
}

/// Largest candidate at or below `eps`, or the smallest candidate if none is.
pub fn select_argmax(thresholds: &[f64], eps: f64) -> f64 {
    thresholds
        .iter()
        .rev()
        .copied()
        .find(|&rho| rho <= eps)
        .unwrap_or(thresholds[0])
}

pub fn select_by_scheme(thresholds: &[f64], scheme: Scheme, eps: f64) -> f64 {
    match scheme {
        Scheme::ArgMin => select_argmin(thresholds, eps),
        Scheme::ArgMax => select_argmax(thresholds, eps),
    }
}

/// `α = μ + γ(ρ − ε)` and the clipped multiplier `max(0, α)`.
pub fn update_multiplier(mu: f64, gamma: f64, rho: f64, eps: f64) -> (f64, f64) {
    let alpha = mu + gamma * (rho - eps);
    (alpha, alpha.max(0.0))
}

/// `(1/2γ) Σ_{n,k} [max(0, μ + γ(ρ − ε))² − μ²]`.
pub fn penalty_value(state: &ConstraintState, eps: &DMatrix<f64>) -> f64 {
    let g = state.gamma;
    let mut acc = 0.0;
    for n in 0..state.m() {
        for k in 0..state.k() {
            let mu = state.mu[(n, k)];
            let active = (mu + g * (state.rho[(n, k)] - eps[(n, k)])).max(0.0);
            acc += active * active - mu * mu;
        }
    }
    acc / (2.0 * g)
}

/// Absolute Pearson correlation. With `center = false` this is the absolute
/// cosine similarity.
pub fn similarity_with(a: &DVector<f64>, b: &DVector<f64>, center: bool) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CivaError::DimensionMismatch(format!(
            "signals have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    let (a, b) = if center {
        (a.add_scalar(-a.mean()), b.add_scalar(-b.mean()))
    } else {
        (a.clone(), b.clone())
    };
    let (na, nb) = (a.norm(), b.norm());
    if na <= f64::MIN_POSITIVE || nb <= f64::MIN_POSITIVE {
        return Err(CivaError::DegenerateSignal("zero-variance signal".into()));
    }
    Ok((a.dot(&b).abs() / (na * nb)).min(1.0))
}

/// Centered similarity `|corr(a, b)|`.
pub fn similarity(a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    similarity_with(a, b, true)
}

/// `∂ε(r, y)/∂y = sign(rᵀy)/(‖r‖‖y‖) · (r − (rᵀy/‖y‖²) y)`, on raw samples.
pub fn similarity_sample_gradient(r: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (nr, ny2) = (r.norm(), y.norm_squared());
    if nr <= f64::MIN_POSITIVE || ny2 <= f64::MIN_POSITIVE {
        return Err(CivaError::DegenerateSignal("zero-norm signal".into()));
    }
    let ry = r.dot(y);
    Ok((r - y * (ry / ny2)) * (sign(ry) / (nr * ny2.sqrt())))
}

#[inline]
fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// ε(r_m, y) for `y = X^[k]ᵀ w`, together with the pieces of its gradient.
#[derive(Debug, Clone)]
pub struct ProjectedSimilarity {
    pub eps: f64,
    /// `(1/V) rᵀ y`.
    pub inner: f64,
    /// `(1/V) ‖y‖²`.
    pub power: f64,
    /// `block(k,k) w`.
    pub rw: DVector<f64>,
}

/// ε(r_m, (w)ᵀ X^[k]) evaluated from the caches; no pass over the samples.
pub fn projected_similarity(
    proj: &ProjectedReferences,
    cache: &CrossCovarianceCache,
    w: &DVector<f64>,
    m: usize,
    k: usize,
) -> Result<ProjectedSimilarity> {
    let rw = cache.block(k, k) * w;
    let power = w.dot(&rw);
    let energy = proj.energy(m);
    if !(power > 1e-300) || !(energy > 0.0) {
        return Err(CivaError::DegenerateSignal(format!(
            "estimated source for dataset {k} has zero power"
        )));
    }
    let inner = w.dot(proj.projection(m, k));
    let eps = (inner.abs() / (energy * power).sqrt()).min(1.0);
    Ok(ProjectedSimilarity { eps, inner, power, rw })
}

/// `∂ε(r_m, y)/∂w = X^[k] ∂ε/∂y`, computed from `(1/V) X^[k] r_m` and `block(k,k) w`.
pub fn similarity_gradient(
    proj: &ProjectedReferences,
    cache: &CrossCovarianceCache,
    w: &DVector<f64>,
    m: usize,
    k: usize,
) -> Result<DVector<f64>> {
    let s = projected_similarity(proj, cache, w, m, k)?;
    Ok(similarity_gradient_from(proj, &s, m, k))
}

pub(crate) fn similarity_gradient_from(
    proj: &ProjectedReferences,
    s: &ProjectedSimilarity,
    m: usize,
    k: usize,
) -> DVector<f64> {
    let scale = sign(s.inner) / (proj.energy(m) * s.power).sqrt();
    let mut g = proj.projection(m, k) * scale;
    g.axpy(-scale * s.inner / s.power, &s.rw, 1.0);
    g
}

/// `ε(r_n, y_n^[k])` for `n < M` and every dataset.
pub fn similarity_matrix(
    proj: &ProjectedReferences,
    cache: &CrossCovarianceCache,
    w: &DemixingSet,
) -> Result<DMatrix<f64>> {
    let mut eps = DMatrix::zeros(proj.m(), w.k());
    for n in 0..proj.m() {
        for k in 0..w.k() {
            eps[(n, k)] = projected_similarity(proj, cache, &w.row(k, n), n, k)?.eps;
        }
    }
    Ok(eps)
}

/// `−𝕀(n<M) max(0, μ + γ(ρ − ε)) ∂ε(r_n, y_n^[k])/∂w`.
pub fn grad_constraint_term(
    state: &ConstraintState,
    proj: &ProjectedReferences,
    cache: &CrossCovarianceCache,
    w: &DemixingSet,
    n: usize,
    k: usize,
) -> Result<DVector<f64>> {
    if n >= state.m() {
        return Ok(DVector::zeros(w.n()));
    }
    let wv = w.row(k, n);
    let s = projected_similarity(proj, cache, &wv, n, k)?;
    let active = (state.mu[(n, k)] + state.gamma * (state.rho[(n, k)] - s.eps)).max(0.0);
    if active == 0.0 {
        return Ok(DVector::zeros(w.n()));
    }
    Ok(similarity_gradient_from(proj, &s, n, k) * -active)
}

/// `Σ_{n<M} Σ_k [Σ_{m≠n, m<M} ε²(r_n, y_m^[k]) − ε²(r_n, y_n^[k])]`.
pub fn j_ref_value(
    proj: &ProjectedReferences,
    cache: &CrossCovarianceCache,
    w: &DemixingSet,
) -> Result<f64> {
    let m = proj.m();
    let mut acc = 0.0;
    for k in 0..w.k() {
        for comp in 0..m {
            let wv = w.row(k, comp);
            for r in 0..m {
                let e = projected_similarity(proj, cache, &wv, r, k)?.eps;
                if r == comp {
                    acc -= e * e;
                } else {
                    acc += e * e;
                }
            }
        }
    }
    Ok(acc)
}

/// Gradient of [`j_ref_value`] with respect to `w_n^[k]`:
/// `2 𝕀(n<M) (Σ_{m≠n} ε(r_m, y_n) ∂ε(r_m, y_n) − ε(r_n, y_n) ∂ε(r_n, y_n))`.
pub fn grad_j_ref(
    proj: &ProjectedReferences,
    cache: &CrossCovarianceCache,
    w: &DemixingSet,
    n: usize,
    k: usize,
) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(w.n());
    if n >= proj.m() {
        return Ok(g);
    }
    let wv = w.row(k, n);
    for r in 0..proj.m() {
        let s = projected_similarity(proj, cache, &wv, r, k)?;
        let weight = if r == n { -2.0 * s.eps } else { 2.0 * s.eps };
        g.axpy(weight, &similarity_gradient_from(proj, &s, r, k), 1.0);
    }
    Ok(g)
}
