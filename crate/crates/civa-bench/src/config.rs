//! Experiment configuration, read from TOML or JSON.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use civa::constraint::ThresholdStrategy;
use civa::hybrid::HybridConfig;
use civa::{Method, Preprocessing, SolverSettings, Variant};
use serde::{Deserialize, Serialize};

/// One algorithm in a comparison, optionally with overridden hyperparameters.
///
/// In a config file an entry is either a bare name (`"ar-civa"`) or a table
/// (`{ variant = "ar-civa", gamma = 50.0 }`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAlgorithm")]
pub struct AlgorithmSpec {
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawAlgorithm {
    Name(Variant),
    Table {
        variant: Variant,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default)]
        mu_max: Option<f64>,
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        rho: Option<f64>,
        #[serde(default)]
        eta0: Option<f64>,
    },
}

impl TryFrom<RawAlgorithm> for AlgorithmSpec {
    type Error = String;

    fn try_from(raw: RawAlgorithm) -> Result<Self, String> {
        let spec = match raw {
            RawAlgorithm::Name(variant) => AlgorithmSpec::new(variant),
            RawAlgorithm::Table { variant, gamma, mu_max, lambda, rho, eta0 } => {
                AlgorithmSpec { variant, gamma, mu_max, lambda, rho, eta0 }
            }
        };
        spec.method().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl AlgorithmSpec {
    pub fn new(variant: Variant) -> Self {
        Self { variant, gamma: None, mu_max: None, lambda: None, rho: None, eta0: None }
    }

    /// The variant's default method with the overrides applied. Overrides
    /// the variant has no use for are rejected.
    pub fn method(&self) -> Result<Method> {
        let mut method = self.variant.default_method();
        let reject = |name: &str| -> Result<Method> {
            bail!("{name} does not apply to {}", self.variant)
        };
        match &mut method {
            Method::Unconstrained => {
                for (name, set) in [
                    ("gamma", self.gamma.is_some()),
                    ("mu_max", self.mu_max.is_some()),
                    ("lambda", self.lambda.is_some()),
                    ("rho", self.rho.is_some()),
                ] {
                    if set {
                        return reject(name);
                    }
                }
            }
            Method::Lagrangian { gamma, strategy } => {
                if self.lambda.is_some() {
                    return reject("lambda");
                }
                if let Some(g) = self.gamma {
                    *gamma = g;
                }
                match strategy {
                    ThresholdStrategy::Fixed { rho } => {
                        if self.mu_max.is_some() {
                            return reject("mu_max");
                        }
                        if let Some(r) = self.rho {
                            *rho = r;
                        }
                    }
                    ThresholdStrategy::AdaptiveReverse { mu_max, .. } => {
                        if self.rho.is_some() {
                            return reject("rho");
                        }
                        if let Some(m) = self.mu_max {
                            *mu_max = m;
                        }
                    }
                    _ => {
                        if self.rho.is_some() {
                            return reject("rho");
                        }
                        if self.mu_max.is_some() {
                            return reject("mu_max");
                        }
                    }
                }
            }
            Method::Regularized { lambda } => {
                for (name, set) in [
                    ("gamma", self.gamma.is_some()),
                    ("mu_max", self.mu_max.is_some()),
                    ("rho", self.rho.is_some()),
                ] {
                    if set {
                        return reject(name);
                    }
                }
                if let Some(l) = self.lambda {
                    *lambda = l;
                }
            }
        }
        method.validate()?;
        Ok(method)
    }

    /// `base` with this algorithm's step-size override.
    pub fn settings(&self, base: &SolverSettings) -> SolverSettings {
        let mut s = base.clone();
        if let Some(eta0) = self.eta0 {
            s.eta0 = eta0;
        }
        s
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.variant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    K,
    M,
    #[default]
    None,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::K => "k",
            Axis::M => "m",
            Axis::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub axis: Axis,
    #[serde(default)]
    pub values: Vec<usize>,
}

impl Sweep {
    /// `(axis value or None, hybrid config for the point)` for every point.
    pub fn points(&self, base: &HybridConfig) -> Vec<(Option<usize>, HybridConfig)> {
        match self.axis {
            Axis::None => vec![(None, base.clone())],
            Axis::K => self.values.iter().map(|&k| (Some(k), HybridConfig { k, ..base.clone() })).collect(),
            Axis::M => self.values.iter().map(|&m| (Some(m), HybridConfig { m, ..base.clone() })).collect(),
        }
    }
}

/// How data are drawn across the runs of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// One dataset per point; runs differ only in initialization.
    #[default]
    FixedSources,
    /// Mixing and references fixed per point; latent sources redrawn per run.
    FreshSources,
}

/// Whether wall-clock times are written to the summary table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Timing {
    #[default]
    Wall,
    /// Leave runtime columns empty so repeated runs give identical bytes.
    Omit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hybrid: HybridConfig,
    #[serde(default = "all_variants")]
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default = "one")]
    pub runs_per_point: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub shared_init: bool,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub preprocessing: Preprocessing,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub save_matrices: bool,
    #[serde(default)]
    pub timing: Timing,
}

fn all_variants() -> Vec<AlgorithmSpec> {
    Variant::ALL.into_iter().map(AlgorithmSpec::new).collect()
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn new(hybrid: HybridConfig) -> Self {
        Self {
            hybrid,
            algorithms: all_variants(),
            sweep: Sweep::default(),
            runs_per_point: 1,
            seed: 0,
            output_dir: default_output(),
            shared_init: true,
            protocol: Protocol::default(),
            solver: SolverSettings::default(),
            preprocessing: Preprocessing::default(),
            threads: 0,
            save_matrices: false,
            timing: Timing::default(),
        }
    }

    /// Reads a config, picking the format from the extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => bail!("{}: config must end in .toml or .json", path.display()),
        };
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate().context("solver settings")?;
        if self.algorithms.is_empty() {
            bail!("no algorithms listed");
        }
        if self.runs_per_point == 0 {
            bail!("runs_per_point must be >= 1");
        }
        for alg in &self.algorithms {
            alg.method().with_context(|| format!("algorithm {alg}"))?;
            alg.settings(&self.solver).validate().with_context(|| format!("algorithm {alg}"))?;
        }
        match self.sweep.axis {
            Axis::None => {
                if !self.sweep.values.is_empty() {
                    bail!("sweep values given without an axis");
                }
            }
            _ if self.sweep.values.is_empty() => bail!("sweep over {} has no values", self.sweep.axis.name()),
            _ => {}
        }
        for (_, point) in self.sweep.points(&self.hybrid) {
            point.validate().context("hybrid data")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::new(HybridConfig::new(4, 3, 200, 2))
    }

    #[test]
    fn algorithm_entries_accept_names_and_tables() {
        let text = r#"
            algorithms = ["iva-g-v", { variant = "ar-civa", gamma = 50.0, mu_max = 2.0 }]
            [hybrid]
            n = 4
            k = 3
            v = 200
            m = 2
        "#;
        let c: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(c.algorithms[0], AlgorithmSpec::new(Variant::IvaGV));
        match c.algorithms[1].method().unwrap() {
            Method::Lagrangian { gamma, strategy: ThresholdStrategy::AdaptiveReverse { mu_max, .. } } => {
                assert_eq!((gamma, mu_max), (50.0, 2.0));
            }
            other => panic!("{other:?}"),
        }
        c.validate().unwrap();
    }

    #[test]
    fn misplaced_overrides_are_rejected() {
        let bad = AlgorithmSpec { lambda: Some(2.0), ..AlgorithmSpec::new(Variant::PtCiva) };
        assert!(bad.method().is_err());
        let bad = AlgorithmSpec { rho: Some(0.4), ..AlgorithmSpec::new(Variant::ArCiva) };
        assert!(bad.method().is_err());
        let ok = AlgorithmSpec { rho: Some(0.4), ..AlgorithmSpec::new(Variant::CivaFixed) };
        assert!(ok.method().is_ok());
        let json = r#"{"hybrid": {"n": 4, "k": 3, "v": 200, "m": 2}, "algorithms": [{"variant": "iva-g-v", "gamma": 1.0}]}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }

    #[test]
    fn zero_tolerance_fails_validation() {
        let mut c = base();
        c.solver.tol = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sweep_shape_is_checked() {
        let mut c = base();
        c.runs_per_point = 0;
        assert!(c.validate().is_err());
        let mut c = base();
        c.sweep = Sweep { axis: Axis::K, values: vec![] };
        assert!(c.validate().is_err());
        c.sweep.values = vec![2, 5];
        c.validate().unwrap();
        c.sweep = Sweep { axis: Axis::M, values: vec![1, 9] };
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut c = base();
        c.algorithms.push(AlgorithmSpec { gamma: Some(7.0), ..AlgorithmSpec::new(Variant::PtCiva) });
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
