use thiserror::Error;

/// Errors raised by the numerical engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("regularity violation: {0}")]
    Regularity(String),

    #[error("activity {z} is not admissible (must be below {z_max})")]
    Admissibility { z: f64, z_max: f64 },

    #[error("stability selection failed for {config}: best sum {sum} < {bound}")]
    StabilitySelection { config: String, sum: f64, bound: f64 },

    #[error("family of {size} vertices exceeds the enumeration cap {cap} (about {estimate} edge subsets)")]
    SizeCap { size: usize, cap: usize, estimate: u64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("identity violated at order {order}: relative gap {gap:e}")]
    IdentityViolation { order: usize, gap: f64 },

    #[error("bound violated: {0}")]
    BoundViolation(String),

    #[error("cutoff too small: {0}")]
    Cutoff(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
