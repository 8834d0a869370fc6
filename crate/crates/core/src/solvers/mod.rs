//! From-scratch numerical solvers: positive lasso (fixed penalty and full
//! solution path), dictionary learning with nonnegative sparse codes, and
//! doubly-L1-regularized NMF.
//!
//! Note on objective scaling: the dictionary objective carries a 1/2 data-fit
//! factor (`fit_dictionary`), the encoding objective does not
//! (`positive_lasso`). The two `alpha` scales are therefore not
//! interchangeable; `fit_dictionary` converts internally.

mod dict;
mod lasso;
mod nmf;
mod path;

pub use dict::{fit_dictionary, DictionaryModel};
pub use lasso::{kkt_residual, positive_lasso, positive_lasso_warm};
pub use nmf::{fit_nmf, fit_nmf_with_stop, NmfModel};
pub use path::{positive_lasso_path, LassoPath, PathPoint};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("non-finite value in solver input")]
    NonFinite,
    #[error("negative entry {value} in nonnegative input at ({row}, {col})")]
    NegativeInput { row: usize, col: usize, value: f64 },
    #[error("data column {0} has non-finite norm")]
    DegenerateData(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
}

/// Stopping rules, seeding and initialization for the iterative fits.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative objective-change threshold.
    pub tolerance: f64,
    pub seed: u64,
    /// Stop a fit early once its variance explained reaches this percentage.
    pub target_ve: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 500,
            tolerance: 1e-6,
            seed: 0,
            target_ve: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iterations < 1 {
            return Err(SolverError::BadConfig("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(SolverError::BadConfig("tolerance must be > 0".into()));
        }
        Ok(())
    }
}
