use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("chart error: {0}")]
    Chart(String),
    #[error("cleanliness violation at {point:?}: {detail}")]
    CleanlinessViolation { point: Vec<f64>, detail: String },
    #[error("vanishing order mismatch: {0}")]
    Order(String),
    #[error("phase not resolved: {0}")]
    NotResolved(String),
    #[error("missing critical manifold parametrization for p = {0}")]
    MissingCriticalManifold(usize),
    #[error("node budget exceeded: {needed} nodes requested, budget {budget}")]
    NodeBudget { needed: u64, budget: u64 },
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    Accuracy { estimate: f64, tolerance: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("ill-conditioned design matrix: condition number {0:e}")]
    IllConditioned(f64),
    #[error("incomplete spectrum: requested {requested} but table is complete only up to {available}")]
    IncompleteSpectrum { requested: f64, available: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("non-convergent limit: {0}")]
    NonConvergent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
