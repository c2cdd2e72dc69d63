//! Numerical kernel shared by the estimators: compensated sums, order
//! statistics, weighted least squares, the Student-t distribution, a
//! counter-based normal sampler and the weighted ECDF.

mod ecdf;
mod order;
pub mod rng;
mod sum;
mod tdist;
mod wls;

pub use ecdf::{weighted_ecdf, EcdfPoint};
pub use order::{competition_ranks, median, quantile};
pub use sum::{compensated_sum, NeumaierSum};
pub use tdist::{ln_beta, ln_gamma, regularized_incomplete_beta, t_cdf, t_quantile, t_sf};
pub use wls::{wls_solve, Matrix, WlsSolution};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("quantile level {0} outside [0, 1]")]
    QuantileOutOfRange(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("underdetermined system: {rows} rows for {cols} columns")]
    Underdetermined { rows: usize, cols: usize },
    #[error("weight at row {0} is not strictly positive")]
    NonPositiveWeight(usize),
    #[error("negative weight at index {0}")]
    NegativeWeight(usize),
    #[error("design matrix is rank deficient (column {0})")]
    SingularDesign(usize),
}
