use thiserror::Error;

pub type Result<T> = std::result::Result<T, FracError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FracError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fractional order must satisfy 0 < a < 1, got {0}")]
    InvalidOrder(f64),

    #[error("{what} must be at least {min}, got {got}")]
    CountTooSmall {
        what: &'static str,
        got: usize,
        min: usize,
    },

    #[error("exterior patch inner radius {inner} does not separate it from the disk of radius {radius}")]
    NoSeparation { inner: f64, radius: f64 },

    #[error("kernel is singular at coincident points")]
    CoincidentPoints,

    #[error("measurement arc is empty")]
    EmptySigma,

    #[error("solver supports only the unit disk centered at the origin")]
    UnsupportedGeometry,

    #[error("system (I + G M_q) is near-singular: condition estimate {estimate:.3e}")]
    IllConditioned { estimate: f64 },

    #[error("linear solve residual {residual:.3e} exceeds {limit:.1e}")]
    ResidualTooLarge { residual: f64, limit: f64 },

    #[error("evaluation point is within {distance:.3e} of a non-smooth surface of the profile")]
    TooCloseToSingularity { distance: f64 },

    #[error("boundary ratio does not converge (spread {spread:.3e}); wrong exponent?")]
    WrongExponent { spread: f64 },

    #[error("projection onto the complement of harmonics vanished after {attempts} attempts")]
    DegenerateProjection { attempts: usize },

    #[error("source column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<FracError>,
    },

    #[error("line search failed at iteration {iteration}: objective {objective:.6e} cannot be decreased")]
    Divergence { iteration: usize, objective: f64 },

    #[error("incompatible inputs: {0}")]
    Incompatible(String),
}
