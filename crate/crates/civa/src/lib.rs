//! Constrained independent vector analysis with Gaussian source models.
//!
//! The crate estimates one demixing matrix per dataset so that corresponding
//! sources across datasets stay dependent while distinct sources stay
//! independent. Optional reference signals steer chosen components, either
//! through inequality constraints handled by an augmented Lagrangian or
//! through a threshold-free regularizer.
//!
//! ```
//! use civa::hybrid::{generate, HybridConfig};
//! use civa::iva_g::SolverSettings;
//! use civa::solver::{run_constrained, Variant};
//!
//! let hd = generate(&HybridConfig::new(3, 2, 500, 2)).unwrap();
//! let refs = hd.truth.constraint_references(2).unwrap();
//! let settings = SolverSettings { max_iters: 50, ..Default::default() };
//! let fit = run_constrained(&Variant::TfCiva.default_method(), &hd.data, &refs, &settings).unwrap();
//! assert!(fit.report.demixing.max_row_norm_error() < 1e-10);
//! ```

pub mod constraint;
pub mod error;
pub mod hybrid;
pub mod iva_g;
pub mod linalg;
pub mod matrix_io;
pub mod metrics;
pub mod model;
pub mod solver;

pub use error::{CivaError, Result};
pub use iva_g::SolverSettings;
pub use model::{CrossCovarianceCache, DatasetCollection, DemixingSet, ReferenceSet};
pub use solver::{Fit, Method, Preprocessing, Problem, SolverReport, Variant};
