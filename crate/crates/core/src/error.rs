use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("expression parse error: {0}")]
    Parse(String),
    #[error("unsupported primitive `{0}`")]
    UnsupportedPrimitive(String),
    #[error("field leaves the domain ball of f: sup bound {bound} > radius {radius}")]
    DomainViolation { bound: f64, radius: f64 },
    #[error("regularity r = {r} must exceed {needed}")]
    Regularity { r: f64, needed: f64 },
    #[error("zero multiplier {value:e} at mode {mode:?}")]
    ZeroMultiplier { mode: Vec<i64>, value: f64 },
    #[error("operator is resonant ({0})")]
    Resonant(String),
    #[error("iteration diverged after {iterations} steps (last step ratio {ratio})")]
    Divergence { iterations: usize, ratio: f64 },
    #[error("iterate left the ball of radius {radius} (norm {norm})")]
    BallEscape { norm: f64, radius: f64 },
    #[error("no convergence within {0} iterations")]
    MaxIter(usize),
    #[error("kernel violates the single sign-flip orbit assumption: {0}")]
    KernelAssumption(String),
    #[error("no real branch for eps_m = {eps_m} (branches need sign {sigma})")]
    WrongSign { eps_m: f64, sigma: f64 },
    #[error("kernel amplitude too large for the range contraction (estimated ratio {0})")]
    AlphaTooLarge(f64),
    #[error("Newton stagnated at residual {0:e}")]
    Stagnation(f64),
    #[error("Newton collapsed to the zero solution (norm {0:e})")]
    Collapse(f64),
    #[error("quadrature horizon {horizon} exceeds the limit {limit}: spectral gap too small")]
    QuadratureTail { horizon: f64, limit: f64 },
    #[error("time {0} has the wrong sign for this block")]
    WrongTimeSign(f64),
    #[error("hyperbolic spectrum is empty in the truncation box")]
    EmptyHyperbolic,
    #[error("theta dependence not representable with {0} modes")]
    ThetaTruncation(usize),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
