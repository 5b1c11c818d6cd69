//! The vector-gradient solver shared by every variant.
//!
//! One sweep visits components `n = 1..N` and, within each, datasets
//! `k = 1..K`. Each visit refreshes `Σ̂_n⁻¹`, forms the gradient of the
//! variant's objective with respect to `w_n^[k]`, takes a normalized step
//! on the unit sphere and refreshes row and column `k` of `Σ̂_n`. The order
//! is significant: later visits see the updated rows.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraint::{
    self, ar_thresholds, pt_thresholds, ConstraintState, Scheme, ThresholdStrategy,
};
use crate::error::{CivaError, Result};
use crate::iva_g::{self, SolverSettings};
use crate::linalg;
use crate::model::{
    center_datasets, whiten_datasets, CrossCovarianceCache, DatasetCollection, DemixingSet, Dims,
    ProjectedReferences, ReferenceSet, ScvCovariances, Whitening,
};

/// The five algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "iva-g-v")]
    IvaGV,
    #[serde(rename = "civa-fixed")]
    CivaFixed,
    #[serde(rename = "pt-civa")]
    PtCiva,
    #[serde(rename = "ar-civa")]
    ArCiva,
    #[serde(rename = "tf-civa")]
    TfCiva,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::IvaGV, Variant::CivaFixed, Variant::PtCiva, Variant::ArCiva, Variant::TfCiva];

    pub fn name(self) -> &'static str {
        match self {
            Variant::IvaGV => "iva-g-v",
            Variant::CivaFixed => "civa-fixed",
            Variant::PtCiva => "pt-civa",
            Variant::ArCiva => "ar-civa",
            Variant::TfCiva => "tf-civa",
        }
    }

    pub fn uses_references(self) -> bool {
        self != Variant::IvaGV
    }

    /// The variant's objective with its published hyperparameters.
    pub fn default_method(self) -> Method {
        match self {
            Variant::IvaGV => Method::Unconstrained,
            Variant::CivaFixed => Method::Lagrangian {
                gamma: 3.0,
                strategy: ThresholdStrategy::Fixed { rho: 0.5 },
            },
            Variant::PtCiva => Method::Lagrangian {
                gamma: 3.0,
                strategy: ThresholdStrategy::PerComponent { thresholds: pt_thresholds() },
            },
            Variant::ArCiva => Method::Lagrangian {
                gamma: 100.0,
                strategy: ThresholdStrategy::AdaptiveReverse { thresholds: ar_thresholds(), mu_max: 1.0 },
            },
            Variant::TfCiva => Method::Regularized { lambda: 1.0 },
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = CivaError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CivaError::InvalidParameter(format!("unknown variant {s:?}")))
    }
}

/// The objective minimized on top of the Gaussian IVA cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Unconstrained,
    /// Augmented Lagrangian with penalty `gamma` and a threshold strategy.
    Lagrangian { gamma: f64, strategy: ThresholdStrategy },
    /// `J + (λ/2) J_ref`.
    Regularized { lambda: f64 },
}

impl Method {
    pub fn validate(&self) -> Result<()> {
        match self {
            Method::Unconstrained => Ok(()),
            Method::Lagrangian { gamma, strategy } => {
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return Err(CivaError::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
                }
                strategy.validate()
            }
            Method::Regularized { lambda } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return Err(CivaError::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
                }
                Ok(())
            }
        }
    }

    pub fn uses_references(&self) -> bool {
        !matches!(self, Method::Unconstrained)
    }
}

/// A scheme flip for one constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchEvent {
    /// 1-based sweep in which the flip happened.
    pub sweep: usize,
    pub component: usize,
    pub dataset: usize,
    pub to: Scheme,
}

/// Constraint bookkeeping for augmented Lagrangian runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub final_state: ConstraintState,
    pub switch_events: Vec<SwitchEvent>,
    /// Mean threshold and multiplier after each sweep.
    pub mean_rho_trace: Vec<f64>,
    pub mean_mu_trace: Vec<f64>,
    /// Full multiplier matrices per sweep, when requested.
    pub mu_trace: Vec<DMatrix<f64>>,
    /// Row-major `M × K`: `ε(r_n, y_n^[k]) ≥ ρ_n^[k]` at exit.
    pub satisfied: Vec<bool>,
}

impl ConstraintReport {
    pub fn satisfied_count(&self) -> usize {
        self.satisfied.iter().filter(|&&s| s).count()
    }
}

/// Everything a solver run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub demixing: DemixingSet,
    pub scv: ScvCovariances,
    /// Completed sweeps.
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    /// Objective before the first sweep followed by one value per sweep.
    pub objective_trace: Vec<f64>,
    pub convergence_trace: Vec<f64>,
    /// Sweeps after which the step size was decayed.
    pub decay_events: Vec<usize>,
    pub final_eta: f64,
    /// Wall time of the iterations; cache construction is excluded.
    pub solve_seconds: f64,
    /// `ε(r_n, y_n^[k])` at exit (`M × K`) for reference-driven runs.
    pub similarity: Option<DMatrix<f64>>,
    pub constraints: Option<ConstraintReport>,
}

impl SolverReport {
    pub fn seconds_per_iteration(&self) -> f64 {
        self.solve_seconds / self.iterations.max(1) as f64
    }
}

/// What happens to the data before the caches are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preprocessing {
    /// Remove row means only.
    Center,
    /// Remove row means, then whiten each dataset.
    #[default]
    CenterWhiten,
}

/// Preprocessed data with the caches every solver needs. Demixing matrices
/// produced by a solver act on `data`; [`Problem::to_raw`] maps them back
/// to the caller's coordinates.
#[derive(Debug, Clone)]
pub struct Problem {
    pub data: DatasetCollection,
    pub whitening: Option<Whitening>,
    pub cache: CrossCovarianceCache,
    pub references: Option<ReferenceSet>,
    pub projected: Option<ProjectedReferences>,
}

impl Problem {
    pub fn new(data: &DatasetCollection, references: Option<&ReferenceSet>) -> Result<Self> {
        Self::with_preprocessing(data, references, Preprocessing::default())
    }

    pub fn with_preprocessing(
        data: &DatasetCollection,
        references: Option<&ReferenceSet>,
        preprocessing: Preprocessing,
    ) -> Result<Self> {
        let centered = if data.is_centered() { data.clone() } else { center_datasets(data) };
        let (data, whitening) = match preprocessing {
            Preprocessing::Center => (centered, None),
            Preprocessing::CenterWhiten => {
                let (white, wh) = whiten_datasets(&centered)?;
                (white, Some(wh))
            }
        };
        let cache = CrossCovarianceCache::build(&data)?;
        let projected = references.map(|r| r.project(&data)).transpose()?;
        Ok(Self { data, whitening, cache, references: references.cloned(), projected })
    }

    pub fn dims(&self) -> Dims {
        self.data.dims()
    }

    /// Demixing matrices for the original, unwhitened data.
    pub fn to_raw(&self, w: &DemixingSet) -> Result<DemixingSet> {
        match &self.whitening {
            Some(wh) => wh.to_raw(w),
            None => Ok(w.clone()),
        }
    }

    pub fn solver<'a>(&'a self, settings: &'a SolverSettings, method: &'a Method) -> Solver<'a> {
        let mut s = Solver::new(&self.cache, settings, method);
        if let Some(p) = &self.projected {
            s = s.with_references(p);
        }
        s
    }

    /// Solve from the seeded random initialization and map the result back.
    pub fn fit(&self, method: &Method, settings: &SolverSettings) -> Result<Fit> {
        let dims = self.dims();
        let init = DemixingSet::random_orthonormal(dims.n, dims.k, settings.seed);
        let report = self.solver(settings, method).run(init)?;
        let raw_demixing = self.to_raw(&report.demixing)?;
        Ok(Fit { report, raw_demixing })
    }
}

/// A solver report together with the demixing matrices in the caller's
/// coordinates.
#[derive(Debug, Clone)]
pub struct Fit {
    pub report: SolverReport,
    pub raw_demixing: DemixingSet,
}

/// IVA-G-V from the seeded random initialization.
pub fn run_iva_g_v(data: &DatasetCollection, settings: &SolverSettings) -> Result<Fit> {
    Problem::new(data, None)?.fit(&Method::Unconstrained, settings)
}

/// A reference-driven variant from the seeded random initialization.
pub fn run_constrained(
    method: &Method,
    data: &DatasetCollection,
    references: &ReferenceSet,
    settings: &SolverSettings,
) -> Result<Fit> {
    Problem::new(data, Some(references))?.fit(method, settings)
}

pub struct Solver<'a> {
    cache: &'a CrossCovarianceCache,
    references: Option<&'a ProjectedReferences>,
    settings: &'a SolverSettings,
    method: &'a Method,
    record_multipliers: bool,
    initial_mu: Option<DMatrix<f64>>,
}

impl<'a> Solver<'a> {
    pub fn new(cache: &'a CrossCovarianceCache, settings: &'a SolverSettings, method: &'a Method) -> Self {
        Self { cache, references: None, settings, method, record_multipliers: false, initial_mu: None }
    }

    pub fn with_references(mut self, refs: &'a ProjectedReferences) -> Self {
        self.references = Some(refs);
        self
    }

    /// Start the multipliers from `mu` (`M × K`, non-negative) instead of zero.
    pub fn with_initial_multipliers(mut self, mu: DMatrix<f64>) -> Self {
        self.initial_mu = Some(mu);
        self
    }

    /// Keep the full `M × K` multiplier matrix after every sweep.
    pub fn record_multipliers(mut self, on: bool) -> Self {
        self.record_multipliers = on;
        self
    }

    fn validate(&self, init: &DemixingSet) -> Result<()> {
        self.settings.validate()?;
        self.method.validate()?;
        if init.n() != self.cache.n() || init.k() != self.cache.k() {
            return Err(CivaError::DimensionMismatch(format!(
                "initial demixing set is N={} K={}, data are N={} K={}",
                init.n(),
                init.k(),
                self.cache.n(),
                self.cache.k()
            )));
        }
        if self.method.uses_references() {
            let refs = self.references.ok_or_else(|| {
                CivaError::InvalidParameter("this method needs reference signals".into())
            })?;
            if refs.k() != self.cache.k() || refs.m() > self.cache.n() {
                return Err(CivaError::DimensionMismatch(
                    "references do not match the datasets".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn run(&self, init: DemixingSet) -> Result<SolverReport> {
        self.validate(&init)?;
        let start = Instant::now();
        let (n_comp, n_sets) = (self.cache.n(), self.cache.k());
        let cache = self.cache;
        let mut w = init.normalized()?;
        let mut sigma: Vec<DMatrix<f64>> =
            (0..n_comp).map(|n| iva_g::update_scv_covariance(&w, cache, n)).collect::<Result<_>>()?;

        let mut lagrangian = match self.method {
            Method::Lagrangian { gamma, strategy } => {
                let refs = self.references.expect("validated");
                let mut state = ConstraintState::new(refs.m(), n_sets, *gamma, strategy.clone())?;
                if let Some(mu) = &self.initial_mu {
                    if mu.shape() != state.mu.shape() || mu.iter().any(|&x| !(x >= 0.0)) {
                        return Err(CivaError::InvalidParameter(
                            "initial multipliers must be a non-negative M × K matrix".into(),
                        ));
                    }
                    state.mu = mu.clone();
                }
                let eps = constraint::similarity_matrix(refs, cache, &w)?;
                for n in 0..refs.m() {
                    for k in 0..n_sets {
                        state.rho[(n, k)] = state.select_threshold(&eps, n, k);
                    }
                }
                Some(LagrangianRun { state, events: Vec::new(), mean_rho: Vec::new(), mean_mu: Vec::new(), mu_trace: Vec::new() })
            }
            _ => None,
        };

        let mut objective = self.objective(&w, &sigma, lagrangian.as_ref().map(|l| &l.state))?;
        let mut objective_trace = vec![objective];
        let mut convergence_trace = Vec::new();
        let mut decay_events = Vec::new();
        let mut eta = self.settings.eta0;
        let mut converged = false;
        let mut iterations = 0;

        let mut rows: Vec<DVector<f64>> = vec![DVector::zeros(n_comp); n_sets];
        let mut products: Vec<DVector<f64>> = vec![DVector::zeros(n_comp); n_sets];

        for sweep in 1..=self.settings.max_iters {
            let previous = w.clone();
            for n in 0..n_comp {
                for (l, row) in rows.iter_mut().enumerate() {
                    *row = w.row(l, n);
                }
                if let Some(lr) = lagrangian.as_mut() {
                    if n < lr.state.m() && matches!(lr.state.strategy, ThresholdStrategy::PerComponent { .. }) {
                        let refs = self.references.expect("validated");
                        let eps: Vec<f64> = (0..n_sets)
                            .map(|k| constraint::projected_similarity(refs, cache, &rows[k], n, k).map(|s| s.eps))
                            .collect::<Result<_>>()?;
                        let rho = constraint::select_closest(lr.state.strategy.thresholds(), &eps);
                        lr.state.rho.row_mut(n).fill(rho);
                    }
                }
                for k in 0..n_sets {
                    let (inv_col, _) = iva_g::sigma_inverse_column(&sigma[n], k, self.settings.ridge_rel)
                        .ok_or(CivaError::IllConditionedModel { component: n })?;
                    let mut grad = DVector::zeros(n_comp);
                    for l in 0..n_sets {
                        products[l].gemv(1.0, cache.block(k, l), &rows[l], 0.0);
                        grad.axpy(inv_col[l], &products[l], 1.0);
                    }
                    let dv = iva_g::decoupling_vector(w.matrix(k), n)?;
                    grad.axpy(-1.0 / dv.dot, &dv.d, 1.0);

                    match self.method {
                        Method::Lagrangian { .. } => {
                            let lr = lagrangian.as_mut().expect("initialized");
                            if n < lr.state.m() {
                                let refs = self.references.expect("validated");
                                lr.step(refs, cache, &rows[k], n, k, sweep, &mut grad)?;
                            }
                        }
                        Method::Regularized { lambda } => {
                            let refs = self.references.expect("validated");
                            if n < refs.m() {
                                let g_ref = constraint::grad_j_ref(refs, cache, &w, n, k)?;
                                grad.axpy(0.5 * lambda, &g_ref, 1.0);
                            }
                        }
                        Method::Unconstrained => {}
                    }

                    let next = iva_g::gradient_step(&rows[k], &grad, eta)?;
                    w.set_row(k, n, &next);
                    rows[k] = next;
                    // refresh row and column k of Σ̂_n; other rows are unchanged
                    let s = &mut sigma[n];
                    for l in 0..n_sets {
                        let value = if l == k {
                            let rkk = cache.block(k, k) * &rows[k];
                            rows[k].dot(&rkk)
                        } else {
                            rows[k].dot(&products[l])
                        };
                        s[(k, l)] = value;
                        s[(l, k)] = value;
                    }
                }
            }
            iterations = sweep;

            let next_objective = self.objective(&w, &sigma, lagrangian.as_ref().map(|l| &l.state))?;
            if !next_objective.is_finite() {
                return Err(CivaError::NumericalFailure(format!("objective diverged at sweep {sweep}")));
            }
            if next_objective >= objective {
                eta *= self.settings.decay;
                decay_events.push(sweep);
            }
            objective = next_objective;
            objective_trace.push(objective);
            if let Some(lr) = lagrangian.as_mut() {
                lr.record(self.record_multipliers);
            }
            let measure = iva_g::convergence_measure(&previous, &w);
            convergence_trace.push(measure);
            if measure < self.settings.tol {
                converged = true;
                break;
            }
        }
        let solve_seconds = start.elapsed().as_secs_f64();

        let mut scv = ScvCovariances::new(sigma);
        for (n, s) in scv.covariances.iter().enumerate() {
            let (_, ridge) = linalg::cholesky_with_ridge(s, self.settings.ridge_rel)
                .ok_or(CivaError::IllConditionedModel { component: n })?;
            scv.ridge[n] = ridge;
        }
        let similarity = self
            .references
            .filter(|_| self.method.uses_references())
            .map(|refs| constraint::similarity_matrix(refs, cache, &w))
            .transpose()?;
        let constraints = lagrangian.map(|lr| {
            let eps = similarity.as_ref().expect("reference run");
            let satisfied = (0..lr.state.m())
                .flat_map(|n| (0..n_sets).map(move |k| (n, k)))
                .map(|(n, k)| eps[(n, k)] >= lr.state.rho[(n, k)])
                .collect();
            ConstraintReport {
                final_state: lr.state,
                switch_events: lr.events,
                mean_rho_trace: lr.mean_rho,
                mean_mu_trace: lr.mean_mu,
                mu_trace: lr.mu_trace,
                satisfied,
            }
        });

        Ok(SolverReport {
            demixing: w,
            scv,
            iterations,
            converged,
            final_objective: objective,
            objective_trace,
            convergence_trace,
            decay_events,
            final_eta: eta,
            solve_seconds,
            similarity,
            constraints,
        })
    }

    /// The full objective the step-size decay compares between sweeps.
    fn objective(&self, w: &DemixingSet, sigma: &[DMatrix<f64>], state: Option<&ConstraintState>) -> Result<f64> {
        let scv = ScvCovariances::new(sigma.to_vec());
        let cost = iva_g::iva_g_cost_with_ridge(w, &scv, self.cache, self.settings.ridge_rel)?;
        Ok(match self.method {
            Method::Unconstrained => cost,
            Method::Lagrangian { .. } => {
                let refs = self.references.expect("validated");
                let eps = constraint::similarity_matrix(refs, self.cache, w)?;
                cost + constraint::penalty_value(state.expect("lagrangian state"), &eps)
            }
            Method::Regularized { lambda } => {
                let refs = self.references.expect("validated");
                cost + 0.5 * lambda * constraint::j_ref_value(refs, self.cache, w)?
            }
        })
    }
}

struct LagrangianRun {
    state: ConstraintState,
    events: Vec<SwitchEvent>,
    mean_rho: Vec<f64>,
    mean_mu: Vec<f64>,
    mu_trace: Vec<DMatrix<f64>>,
}

impl LagrangianRun {
    /// Multiplier update, scheme switch, threshold selection, then the
    /// penalty gradient added to `grad`.
    fn step(
        &mut self,
        refs: &ProjectedReferences,
        cache: &CrossCovarianceCache,
        w: &DVector<f64>,
        n: usize,
        k: usize,
        sweep: usize,
        grad: &mut DVector<f64>,
    ) -> Result<()> {
        let sim = constraint::projected_similarity(refs, cache, w, n, k)?;
        let state = &mut self.state;
        let (_, mu) = constraint::update_multiplier(state.mu[(n, k)], state.gamma, state.rho[(n, k)], sim.eps);
        state.mu[(n, k)] = mu;
        let before = state.scheme(n, k);
        let after = state.maybe_switch_scheme(n, k);
        if before != after {
            self.events.push(SwitchEvent { sweep, component: n, dataset: k, to: after });
        }
        let rho = match &state.strategy {
            ThresholdStrategy::Fixed { rho } => *rho,
            // selected once per component visit
            ThresholdStrategy::PerComponent { .. } => state.rho[(n, k)],
            ThresholdStrategy::AdaptiveReverse { thresholds, .. } => {
                constraint::select_by_scheme(thresholds, after, sim.eps)
            }
            ThresholdStrategy::Pinned { scheme, thresholds } => {
                constraint::select_by_scheme(thresholds, *scheme, sim.eps)
            }
        };
        state.rho[(n, k)] = rho;
        let active = (mu + state.gamma * (rho - sim.eps)).max(0.0);
        if active > 0.0 {
            let g = constraint::similarity_gradient_from(refs, &sim, n, k);
            grad.axpy(-active, &g, 1.0);
        }
        Ok(())
    }

    fn record(&mut self, full: bool) {
        let count = self.state.mu.len().max(1) as f64;
        self.mean_rho.push(self.state.rho.sum() / count);
        self.mean_mu.push(self.state.mu.sum() / count);
        if full {
            self.mu_trace.push(self.state.mu.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplace_problem(n: usize, k: usize, v: usize, seed: u64) -> (DatasetCollection, ReferenceSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let refs: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(v, |_, _| {
                let u: f64 = rng.random::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }))
            .collect();
        let raw = (0..k)
            .map(|_| {
                let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5) + DMatrix::identity(n, n);
                let s = DMatrix::from_fn(n, v, |i, j| refs[i][j] * (1.0 + 0.2 * i as f64) + 0.3 * (rng.random::<f64>() - 0.5));
                a * s
            })
            .collect();
        (DatasetCollection::new(raw).unwrap(), ReferenceSet::new(refs).unwrap())
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("ica".parse::<Variant>().is_err());
    }

    #[test]
    fn defaults_are_valid() {
        for v in Variant::ALL {
            v.default_method().validate().unwrap();
        }
    }

    #[test]
    fn separates_well_conditioned_hybrid_data() {
        use crate::hybrid::{generate, HybridConfig};
        use crate::metrics::joint_isi_of;
        let config = HybridConfig { phi: vec![0.3, 0.6, 0.9], references: crate::hybrid::ReferenceSource::Synthetic { smoothing_window: 9, pairwise_corr: 0.0 }, mu0: 0.0, mu1: 0.6, ..HybridConfig::new(3, 2, 5000, 3) };
        let hd = generate(&config).unwrap();
        let fit = run_iva_g_v(&hd.data, &SolverSettings::default()).unwrap();
        let jisi = joint_isi_of(&fit.raw_demixing, &hd.truth.mixing).unwrap();
        assert!(jisi < 0.05, "{jisi}");
    }

    #[test]
    fn gaussian_ica_does_not_diverge() {
        // K = 1 with white Gaussian sources: every orthogonal W has the same cost
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = DMatrix::from_fn(3, 2000, |_, _| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng));
        let data = DatasetCollection::new(vec![x]).unwrap();
        let problem = Problem::new(&data, None).unwrap();
        let cost = |w: &DemixingSet| {
            let scv = iva_g::scv_covariances(w, &problem.cache).unwrap();
            iva_g::iva_g_cost(w, &scv, &problem.cache).unwrap()
        };
        let eye = DemixingSet::new(vec![DMatrix::identity(3, 3)]).unwrap();
        let rot = DemixingSet::random_orthonormal(3, 1, 4);
        assert!((cost(&eye) - cost(&rot)).abs() < 1e-8);
        let fit = problem.fit(&Method::Unconstrained, &SolverSettings::default()).unwrap();
        assert!(fit.report.final_objective.is_finite());
        assert!(fit.report.demixing.max_row_norm_error() < 1e-10);
    }

    #[test]
    fn center_only_preprocessing_keeps_coordinates() {
        let (data, _) = laplace_problem(3, 2, 300, 6);
        let problem = Problem::with_preprocessing(&data, None, Preprocessing::Center).unwrap();
        let w = DemixingSet::random_orthonormal(3, 2, 1);
        assert_eq!(problem.to_raw(&w).unwrap(), w);
        assert!(problem.whitening.is_none());
    }

    #[test]
    fn constrained_methods_require_references() {
        let (data, _) = laplace_problem(3, 2, 200, 1);
        let problem = Problem::new(&data, None).unwrap();
        let settings = SolverSettings { max_iters: 5, ..Default::default() };
        let method = Variant::TfCiva.default_method();
        let init = DemixingSet::random_orthonormal(3, 2, 0);
        assert!(problem.solver(&settings, &method).run(init).is_err());
    }

    #[test]
    fn invalid_settings_fail_before_iterating() {
        let (data, _) = laplace_problem(3, 2, 200, 1);
        let bad = SolverSettings { tol: 0.0, ..Default::default() };
        assert!(matches!(run_iva_g_v(&data, &bad), Err(CivaError::InvalidParameter(_))));
    }

    #[test]
    fn rows_stay_unit_and_objective_only_rises_at_decay_events() {
        let (data, refs) = laplace_problem(4, 3, 400, 2);
        let settings = SolverSettings { max_iters: 60, ..Default::default() };
        for variant in Variant::ALL {
            let report = if variant.uses_references() {
                run_constrained(&variant.default_method(), &data, &refs, &settings).unwrap().report
            } else {
                run_iva_g_v(&data, &settings).unwrap().report
            };
            assert!(report.demixing.max_row_norm_error() < 1e-10, "{variant}");
            for (i, pair) in report.objective_trace.windows(2).enumerate() {
                if pair[1] >= pair[0] {
                    assert!(report.decay_events.contains(&(i + 1)), "{variant}: undecayed rise at sweep {}", i + 1);
                }
            }
            assert_eq!(report.objective_trace.len(), report.iterations + 1);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let (data, refs) = laplace_problem(3, 2, 300, 3);
        let settings = SolverSettings { max_iters: 40, seed: 9, ..Default::default() };
        let method = Variant::ArCiva.default_method();
        let a = run_constrained(&method, &data, &refs, &settings).unwrap().report;
        let b = run_constrained(&method, &data, &refs, &settings).unwrap().report;
        assert_eq!(a.demixing, b.demixing);
        assert_eq!(a.objective_trace, b.objective_trace);
        assert_eq!(a.constraints, b.constraints);
    }

    #[test]
    fn constrained_run_tracks_references() {
        let (data, refs) = laplace_problem(3, 2, 2000, 4);
        let settings = SolverSettings { max_iters: 500, ..Default::default() };
        let report = run_constrained(&Variant::TfCiva.default_method(), &data, &refs, &settings).unwrap().report;
        let eps = report.similarity.unwrap();
        assert!(eps.min() > 0.9, "{eps}");
    }

    #[test]
    fn lagrangian_report_has_satisfaction_summary() {
        let (data, refs) = laplace_problem(3, 2, 500, 5);
        let settings = SolverSettings { max_iters: 30, ..Default::default() };
        let report = run_constrained(&Variant::PtCiva.default_method(), &data, &refs, &settings).unwrap().report;
        let c = report.constraints.unwrap();
        assert_eq!(c.satisfied.len(), 6);
        assert_eq!(c.mean_mu_trace.len(), report.iterations);
        // shared threshold within each component
        for n in 0..3 {
            assert_eq!(c.final_state.rho[(n, 0)], c.final_state.rho[(n, 1)]);
        }
    }
}
