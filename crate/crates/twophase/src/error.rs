use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("outside sector: lambda = {re} + {im}i")]
    OutsideSector { re: f64, im: f64 },
    #[error("degenerate mode: lambda = 0 at the zero tangential frequency")]
    DegenerateMode,
    #[error("stencil underflow: {0}")]
    StencilUnderflow(String),
    #[error("quadrature not converged: estimate {estimate:e} above tolerance {tol:e}")]
    QuadratureNotConverged { estimate: f64, tol: f64 },
    #[error("incompatible zero mode: |g2(0)| = {0:e}")]
    IncompatibleZeroMode(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("M1 exceeded: sup |B| = {0}")]
    M1Exceeded(f64),
    #[error("M1 too large for the contraction: {m1} > {threshold}")]
    M1TooLarge { m1: f64, threshold: f64 },
    #[error("inverse not converged at x = {0:?}")]
    InverseNotConverged(Vec<f64>),
    #[error("not contracting: increment ratio {0} at or above 1 for 3 steps")]
    NotContracting(f64),
    #[error("iteration limit reached with relative increment {0:e}")]
    IterationLimit(f64),
    #[error("box too small: domain radius {radius} below 4R = {required}")]
    BoxTooSmall { radius: f64, required: f64 },
    #[error("interface unresolved: {0}")]
    InterfaceUnresolved(String),
    #[error("mean-zero violated: |(f,1)| = {mean:e}, bound {bound:e}")]
    MeanZeroViolated { mean: f64, bound: f64 },
    #[error("support violated: max |f| = {0:e} outside the annulus")]
    SupportViolated(f64),
    #[error("solver failed: {0}")]
    SolverFailed(String),
    #[error("singular system")]
    SingularSystem,
    #[error("inversion stagnated at relative residual {0:e}")]
    InversionStagnated(f64),
    #[error("invalid dump: {0}")]
    InvalidDump(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
