use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("ball radius {eps} must lie in (0, {epsilon_s}) for this lattice")]
    BallTooLarge { eps: f64, epsilon_s: f64 },

    #[error("point ({0}, {1}) is not on the lattice")]
    OffLattice(f64, f64),

    #[error("degenerate covariance matrix (det = {0:.3e})")]
    DegenerateCovariance(f64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model is not centered: drift = ({0:.3e}, {1:.3e})")]
    NotCentered(f64, f64),

    #[error("driving chain is not ergodic: {0}")]
    NonErgodic(String),

    #[error("stationary law is ambiguous; closed communicating classes: {0:?}")]
    AmbiguousStationary(Vec<Vec<usize>>),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("dominant eigenvalue undefined at t = ({0:.6}, {1:.6}); shrink the radius")]
    LambdaUndefined(f64, f64),

    #[error("no modulus-one eigenvalue at t = ({0:.6}, {1:.6}); walk is not arithmetic there")]
    NotArithmeticAt(f64, f64),

    #[error("eigenvector modulus is not constant (max deviation {0:.3e}); hypothesis violated")]
    NonConstantModulus(f64),

    #[error("exact evolution supports H3 lattices only (got {0})")]
    UnsupportedLattice(&'static str),

    #[error("window cap reached with lost mass {lost:.3e} above budget {budget:.3e}")]
    TruncationOverflow { lost: f64, budget: f64 },

    #[error("weight has zero stationary mean")]
    DegenerateWeight,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("walk is arithmetic in its lattice; witness at t = ({0:.6}, {1:.6})")]
    Arithmetic(f64, f64),

    #[error("underpowered estimate: {0}")]
    Underpowered(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
