use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate safety row: b has zero dual norm")]
    DegenerateRow,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("X not compact; big-M undefined")]
    NotCompact,

    #[error("domain X is empty")]
    EmptyDomain,

    #[error("theta must be positive for this formulation (use the SAA model at theta = 0)")]
    ZeroRadius,

    #[error("no feasible radius: the sample average approximation is infeasible")]
    NoFeasibleRadius,

    #[error("radius search stopped ({0}) before finding a feasible radius")]
    RadiusSearchIncomplete(String),

    #[error("simplex stalled after {iterations} iterations")]
    LpStall { iterations: usize },

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("enumeration budget exceeded: {needed} supports > limit {limit}")]
    EnumerationBudget { needed: u128, limit: u128 },

    #[error("cvar undefined: epsilon * N must be positive and below N")]
    CvarMass,

    #[error("inconsistent bounds: upper {ub} below lower {lb}")]
    BoundOrder { lb: f64, ub: f64 },

    #[error("mps parse error on line {line}: {msg}")]
    Mps { line: usize, msg: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
