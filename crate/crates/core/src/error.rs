use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("root bracket {index} has no sign change")]
    RootBracket { index: usize },

    #[error("capture fraction {requested} not reachable with {modes} modes per axis (reached {reached}); compute more 1D modes")]
    CaptureUnreachable {
        requested: f64,
        reached: f64,
        modes: usize,
    },

    #[error("basis size overflow: n_xi for M={dim}, p={degree} exceeds limit {limit}")]
    BasisOverflow {
        dim: usize,
        degree: usize,
        limit: usize,
    },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("point ({x}, {y}) outside the domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("projection basis not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("iterative solver stagnated after {iterations} iterations (relative residual {residual:e})")]
    Stagnation { iterations: usize, residual: f64 },

    #[error("reduced PGD system singular after {restarts} restarts")]
    PgdBreakdown { restarts: usize },
}
