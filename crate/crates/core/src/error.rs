use thiserror::Error;

#[derive(Debug, Error)]
pub enum IsolabError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("not positive semidefinite within tolerance: lambda_min = {lambda_min:e}, clip = {clip:e}")]
    NotPsd { lambda_min: f64, clip: f64 },

    #[error("mu too small for completion: row norm {row:e}, column norm {col:e}, mu {mu:e}")]
    MuTooSmall { row: f64, col: f64, mu: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("power {requested} exceeds the exactness budget {budget} of the truncation")]
    BudgetExceeded { requested: usize, budget: usize },

    #[error("no finite growth constant at exponent {m}: norms of powers still increasing")]
    DivergingGrowth { m: u32 },

    #[error("embedding margin violated: q = {q:e} must stay below 1/2")]
    EmbeddingMargin { q: f64 },

    #[error("operator is not convex: lambda_min of the convexity form = {lambda_min:e}")]
    NotConvex { lambda_min: f64 },

    #[error("operator is not a contraction: norm = {norm}")]
    NotContraction { norm: f64 },

    #[error("intertwining hypothesis violated: residual {residual:e}")]
    Intertwining { residual: f64 },

    #[error("operator is not power bounded at the requested constant: {0}")]
    NotPowerBounded(String),

    #[error("iteration did not converge within {iterations} steps (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("infeasible input: {0}")]
    Infeasible(String),

    #[error("nonpositive weight ratio at index {index}")]
    NonpositiveWeight { index: i64 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, IsolabError>;
