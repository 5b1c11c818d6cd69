//! Fast invariant suite: finite-difference gradients, oracle equivalences,
//! metric properties and generator statistics.

use std::f64::consts::PI;
use std::fmt;

use anyhow::Result;
use civa::constraint::{self, ConstraintState, ThresholdStrategy};
use civa::hybrid::{self, HybridConfig};
use civa::iva_g::{self, scv_covariances};
use civa::metrics;
use civa::model::{ProjectedReferences, ScvCovariances};
use civa::{CrossCovarianceCache, DemixingSet, Preprocessing, Problem};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seeds::derive;

/// Signature of the reference-regularizer gradient; swappable so a broken
/// gradient can be shown to fail the check.
pub type GradRef<'a> =
    &'a dyn Fn(&ProjectedReferences, &CrossCovarianceCache, &DemixingSet, usize, usize) -> civa::Result<DVector<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e:#}")),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status}  {:<24} {}", self.name, self.detail)
    }
}

/// Problem sizes for the suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub instances: usize,
    pub fd_dims: (usize, usize, usize, usize),
    pub fd_tol: f64,
    pub generator_v: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 0, instances: 20, fd_dims: (4, 3, 2, 500), fd_tol: 1e-6, generator_v: 20_000 }
    }
}

/// A random instance for gradient checks: centered data with references
/// and a random, non-orthogonal demixing set.
pub struct Instance {
    pub problem: Problem,
    pub w: DemixingSet,
    pub sigma: ScvCovariances,
}

impl Instance {
    fn proj(&self) -> &ProjectedReferences {
        self.problem.projected.as_ref().unwrap()
    }

    fn cache(&self) -> &CrossCovarianceCache {
        &self.problem.cache
    }
}

pub fn instance(n: usize, k: usize, m: usize, v: usize, seed: u64) -> Result<Instance> {
    let mut cfg = HybridConfig::new(n, k, v, m);
    cfg.seed = seed;
    let data = hybrid::generate(&cfg)?;
    let refs = data.truth.constraint_references(m)?;
    let problem = Problem::with_preprocessing(&data.data, Some(&refs), Preprocessing::Center)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[1]));
    let mats = (0..k)
        .map(|_| DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.0 } + rng.random::<f64>() - 0.5))
        .collect();
    let w = DemixingSet::new(mats)?;
    let sigma = scv_covariances(&w, &problem.cache)?;
    Ok(Instance { problem, w, sigma })
}

/// Largest relative error between `grad(w, n, k)` and central differences of
/// `f` over every (component, dataset).
pub fn fd_max_error(
    w: &DemixingSet,
    f: &dyn Fn(&DemixingSet) -> civa::Result<f64>,
    grad: &dyn Fn(&DemixingSet, usize, usize) -> civa::Result<DVector<f64>>,
) -> Result<f64> {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..w.k() {
        for n in 0..w.n() {
            let analytic = grad(w, n, k)?;
            let mut numeric = DVector::zeros(w.n());
            for i in 0..w.n() {
                let mut row = w.row(k, n);
                let mut plus = w.clone();
                row[i] += h;
                plus.set_row(k, n, &row);
                let mut minus = w.clone();
                row[i] -= 2.0 * h;
                minus.set_row(k, n, &row);
                numeric[i] = (f(&plus)? - f(&minus)?) / (2.0 * h);
            }
            let scale = analytic.norm().max(numeric.norm()).max(1e-300);
            worst = worst.max((analytic - numeric).norm() / scale);
        }
    }
    Ok(worst)
}

fn instances(cfg: &VerifyConfig) -> impl Iterator<Item = Result<Instance>> + '_ {
    let (n, k, m, v) = cfg.fd_dims;
    (0..cfg.instances).map(move |i| instance(n, k, m, v, derive(cfg.seed, &[0x6664, i as u64])))
}

pub fn check_grad_iva(cfg: &VerifyConfig) -> Check {
    let r = (|| {
        let mut worst: f64 = 0.0;
        for inst in instances(cfg) {
            let inst = inst?;
            let f = |w: &DemixingSet| iva_g::iva_g_cost(w, &inst.sigma, inst.cache());
            let g = |w: &DemixingSet, n, k| iva_g::grad_iva_g(w, &inst.sigma, inst.cache(), n, k);
            worst = worst.max(fd_max_error(&inst.w, &f, &g)?);
        }
        Ok((worst < cfg.fd_tol, format!("max rel err {worst:.2e} over {} instances", cfg.instances)))
    })();
    Check::from_result("grad-iva-g", r)
}

/// Augmented Lagrangian with every constraint active (`active = true`) or
/// every constraint inactive.
pub fn check_grad_lagrangian(cfg: &VerifyConfig, active: bool) -> Check {
    let name = if active { "grad-lagrangian-active" } else { "grad-lagrangian-inactive" };
    let r = (|| {
        let mut worst: f64 = 0.0;
        let mut active_count = 0;
        let mut total = 0;
        for inst in instances(cfg) {
            let inst = inst?;
            let (proj, cache) = (inst.proj(), inst.cache());
            let mut state = ConstraintState::new(proj.m(), inst.w.k(), 3.0, ThresholdStrategy::Fixed { rho: 0.5 })?;
            if active {
                state.rho.fill(0.9);
                state.mu.fill(0.5);
            } else {
                state.rho.fill(0.0);
                state.mu.fill(0.0);
            }
            let eps = constraint::similarity_matrix(proj, cache, &inst.w)?;
            for (i, e) in eps.iter().enumerate() {
                total += 1;
                if state.mu[i] + state.gamma * (state.rho[i] - e) > 0.0 {
                    active_count += 1;
                }
            }
            let f = |w: &DemixingSet| -> civa::Result<f64> {
                let eps = constraint::similarity_matrix(proj, cache, w)?;
                Ok(iva_g::iva_g_cost(w, &inst.sigma, cache)? + constraint::penalty_value(&state, &eps))
            };
            let g = |w: &DemixingSet, n, k| -> civa::Result<DVector<f64>> {
                Ok(iva_g::grad_iva_g(w, &inst.sigma, cache, n, k)?
                    + constraint::grad_constraint_term(&state, proj, cache, w, n, k)?)
            };
            worst = worst.max(fd_max_error(&inst.w, &f, &g)?);
        }
        let expected = if active { total } else { 0 };
        Ok((
            worst < cfg.fd_tol && active_count == expected,
            format!("max rel err {worst:.2e}, {active_count}/{total} constraints active"),
        ))
    })();
    Check::from_result(name, r)
}

/// `J + (λ/2) J_ref` against `∂J + (λ/2) grad_ref`.
pub fn check_grad_tf_with(cfg: &VerifyConfig, grad_ref: GradRef<'_>) -> Check {
    let lambda = 1.0;
    let r = (|| {
        let mut worst: f64 = 0.0;
        for inst in instances(cfg) {
            let inst = inst?;
            let (proj, cache) = (inst.proj(), inst.cache());
            let f = |w: &DemixingSet| -> civa::Result<f64> {
                Ok(iva_g::iva_g_cost(w, &inst.sigma, cache)? + 0.5 * lambda * constraint::j_ref_value(proj, cache, w)?)
            };
            let g = |w: &DemixingSet, n, k| -> civa::Result<DVector<f64>> {
                Ok(iva_g::grad_iva_g(w, &inst.sigma, cache, n, k)? + grad_ref(proj, cache, w, n, k)? * (0.5 * lambda))
            };
            worst = worst.max(fd_max_error(&inst.w, &f, &g)?);
        }
        Ok((worst < cfg.fd_tol, format!("max rel err {worst:.2e}")))
    })();
    Check::from_result("grad-tf", r)
}

pub fn check_grad_tf(cfg: &VerifyConfig) -> Check {
    check_grad_tf_with(cfg, &constraint::grad_j_ref)
}

/// The cost from the caches against the per-sample Gaussian negative
/// log-likelihood, for an arbitrary SPD `Σ_n`.
pub fn check_likelihood(seed: u64, tol: f64) -> Check {
    let r = (|| {
        let (n, k, v) = (3, 2, 200);
        let inst = instance(n, k, 1, v, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[2]));
        let sigma: Vec<DMatrix<f64>> = (0..n)
            .map(|_| {
                let b = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() - 0.5);
                &b * b.transpose() + DMatrix::identity(k, k)
            })
            .collect();
        let cached = iva_g::iva_g_cost(&inst.w, &ScvCovariances::new(sigma.clone()), inst.cache())?;
        let data = &inst.problem.data;
        let y: Vec<DMatrix<f64>> = (0..k).map(|kk| inst.w.matrix(kk) * data.dataset(kk)).collect();
        let mut direct = 0.0;
        for (c, s) in sigma.iter().enumerate() {
            let inv = s.clone().try_inverse().unwrap();
            let logdet = s.determinant().ln();
            for t in 0..v {
                let scv = DVector::from_fn(k, |kk, _| y[kk][(c, t)]);
                direct += 0.5 * (k as f64 * (2.0 * PI).ln() + logdet + (scv.transpose() * &inv * &scv)[0]);
            }
        }
        direct /= v as f64;
        for m in inst.w.matrices() {
            direct -= m.determinant().abs().ln();
        }
        let diff = (cached - direct).abs();
        Ok((diff < tol, format!("|cached - direct| = {diff:.2e}")))
    })();
    Check::from_result("likelihood-oracle", r)
}

/// `Σ̂_n` from the caches against `(1/V) Y_n Y_nᵀ`.
pub fn check_covariance(seed: u64, tol: f64) -> Check {
    let r = (|| {
        let (n, k, v) = (4, 3, 300);
        let inst = instance(n, k, 1, v, seed)?;
        let data = &inst.problem.data;
        let mut worst: f64 = 0.0;
        for c in 0..n {
            let y = DMatrix::from_fn(k, v, |kk, t| (inst.w.matrix(kk).row(c) * data.dataset(kk).column(t))[0]);
            let direct = &y * y.transpose() / v as f64;
            let cached = iva_g::update_scv_covariance(&inst.w, inst.cache(), c)?;
            worst = worst.max((direct - cached).amax());
        }
        Ok((worst < tol, format!("max abs diff {worst:.2e}")))
    })();
    Check::from_result("covariance-oracle", r)
}

/// ε from the projected caches against ε on the estimated sources.
pub fn check_projected_similarity(seed: u64) -> Check {
    let r = (|| {
        let inst = instance(4, 3, 2, 400, seed)?;
        let fast = constraint::similarity_matrix(inst.proj(), inst.cache(), &inst.w)?;
        let refs = inst.problem.references.as_ref().unwrap();
        let mut worst: f64 = 0.0;
        for m in 0..refs.len() {
            for k in 0..3 {
                let y = (inst.w.matrix(k).row(m) * inst.problem.data.dataset(k)).transpose();
                worst = worst.max((constraint::similarity(refs.reference(m), &y)? - fast[(m, k)]).abs());
            }
        }
        Ok((worst < 1e-12, format!("max abs diff {worst:.2e}")))
    })();
    Check::from_result("similarity-projection", r)
}

fn permutation(p: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(p.len(), p.len(), |i, j| if p[i] == j { 1.0 } else { 0.0 })
}

fn random_perm(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn nonzero_diag(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| {
        let m = rng.random_range(0.1..10.0);
        if rng.random::<bool>() { m } else { -m }
    }))
}

fn sign_diag(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 }))
}

/// ISI and cross-joint-ISI properties on random instances.
///
/// Diagonal scalings: arbitrary nonzero scalings are checked on scaled
/// permutations (ISI stays zero) and ±1 scalings on general matrices.
pub fn check_metric_properties(seed: u64) -> Check {
    let r = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut failures = Vec::new();
        for trial in 0..50 {
            let n = rng.random_range(2..8);
            let p = permutation(&random_perm(n, &mut rng));
            let sp = nonzero_diag(n, &mut rng) * &p * nonzero_diag(n, &mut rng);
            if metrics::isi(&sp)? > 1e-15 {
                failures.push(format!("scaled permutation {trial}"));
            }
            let ones = metrics::isi(&DMatrix::from_element(n, n, 1.0))?;
            if (ones - 1.0).abs() > 1e-12 {
                failures.push(format!("all-ones {n}"));
            }
            let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
            let base = metrics::isi(&g)?;
            let signs = sign_diag(n, &mut rng) * &g * sign_diag(n, &mut rng);
            let q = permutation(&random_perm(n, &mut rng));
            let perm = &q * &g * q.transpose();
            let scalar = &g * rng.random_range(0.1..10.0);
            for (what, other) in [("sign scaling", signs), ("permutation", perm), ("scalar", scalar)] {
                if (metrics::isi(&other)? - base).abs() > 1e-12 {
                    failures.push(format!("{what} {trial}"));
                }
            }
        }
        for trial in 0..10 {
            let (n, k) = (rng.random_range(2..6), rng.random_range(1..4));
            let runs: Vec<DemixingSet> = {
                let w = DemixingSet::new(
                    (0..k).map(|_| DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5)).collect(),
                )?;
                let p = permutation(&random_perm(n, &mut rng));
                let flipped: Vec<DMatrix<f64>> =
                    w.matrices().iter().map(|m| &p * sign_diag(n, &mut rng) * m).collect();
                vec![w, DemixingSet::new(flipped)?]
            };
            if metrics::cross_joint_isi(&runs)?.iter().any(|&x| x > 1e-10) {
                failures.push(format!("cross-joint-ISI {trial}"));
            }
        }
        let ok = failures.is_empty();
        let detail = if ok { "all properties hold".to_string() } else { failures.join(", ") };
        Ok((ok, detail))
    })();
    Check::from_result("metric-properties", r)
}

/// Empirical second moments of generated sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorStats {
    /// Mean off-diagonal within-SCV covariance at φ = 0.9.
    pub within_high: f64,
    /// Mean source-reference correlation at φ = 0.9.
    pub ref_corr_high: f64,
    /// Mean off-diagonal within-SCV covariance at φ = 0.3.
    pub within_low: f64,
}

fn centered(x: DVector<f64>) -> DVector<f64> {
    let m = x.mean();
    x.add_scalar(-m)
}

pub fn generator_stats(v: usize, seed: u64) -> Result<GeneratorStats> {
    let k = 4;
    let mut cfg = HybridConfig::new(2, k, v, 1);
    cfg.phi = vec![0.9, 0.3];
    cfg.seed = seed;
    let truth = hybrid::generate(&cfg)?.truth;
    let within = |n: usize| {
        let s = &truth.sources[n];
        let mut acc = 0.0;
        for a in 0..k {
            for b in 0..a {
                let x = centered(s.row(a).transpose());
                let y = centered(s.row(b).transpose());
                acc += x.dot(&y) / v as f64;
            }
        }
        acc / (k * (k - 1) / 2) as f64
    };
    let r = centered(truth.references.reference(0).clone());
    let ref_corr = (0..k)
        .map(|a| {
            let x = centered(truth.sources[0].row(a).transpose());
            x.dot(&r) / (x.norm() * r.norm())
        })
        .sum::<f64>()
        / k as f64;
    Ok(GeneratorStats { within_high: within(0), ref_corr_high: ref_corr, within_low: within(1) })
}

pub fn check_generator(v: usize, seed: u64) -> Check {
    let r = generator_stats(v, seed).map(|s| {
        let ok = (s.within_high - 0.28).abs() < 0.02
            && (s.ref_corr_high - 0.1f64.sqrt()).abs() < 0.03
            && (s.within_low - 0.76).abs() < 0.02;
        (
            ok,
            format!(
                "V={v}: cov(0.9)={:.4} corr(0.9)={:.4} cov(0.3)={:.4}",
                s.within_high, s.ref_corr_high, s.within_low
            ),
        )
    });
    Check::from_result("generator-statistics", r)
}

pub fn run_checks(cfg: &VerifyConfig) -> Vec<Check> {
    vec![
        check_grad_iva(cfg),
        check_grad_lagrangian(cfg, true),
        check_grad_lagrangian(cfg, false),
        check_grad_tf(cfg),
        check_likelihood(cfg.seed, 1e-9),
        check_covariance(cfg.seed, 1e-10),
        check_projected_similarity(cfg.seed),
        check_metric_properties(cfg.seed),
        check_generator(cfg.generator_v, cfg.seed),
    ]
}
