//! Per-(device, property) predictive cache for SENSE requests.

mod adapter;
mod model;
mod state;

pub use adapter::{
    diff_cartesian, diff_double, diff_image, AdapterRegistry, BooleanAdapter, CartesianAdapter,
    DiffAdapter, DoubleAdapter, ImageAdapter, TextAdapter,
};
pub use model::{
    CacheModel, Consistent, Cyclic, ModelFactory, ModelRegistry, ModelSpec, PolynomialRegression,
    DEFAULT_AR_ORDER, DEFAULT_DEGREE, DEFAULT_WINDOW,
};
pub use state::{
    write_error_samples_csv, write_metrics_csv, CacheKey, CachePolicy, CacheState, CacheStore,
    ErrorSample, LookupError, Metrics, MetricsRow, Served, ServedBy, REENABLE_AFTER,
};

use crate::Millis;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CacheError {
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("image dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("time {got} is not after last stored time {last}")]
    NonMonotonicTime { last: Millis, got: Millis },
    #[error("insufficient data: have {have} points, need {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("unknown cache model {0}")]
    UnknownModel(String),
    #[error("bad model parameter {0}")]
    BadModelParam(String),
    #[error("least-squares system could not be solved")]
    Singular,
}
