use thiserror::Error;

/// Coarse classification used by callers that must map failures to process
/// exit codes: invalid input versus a numeric or budget failure encountered
/// during an otherwise well-posed computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {reason}")]
    InvalidGraph { reason: String },

    #[error("unknown vertex id `{id}`")]
    UnknownVertex { id: String },

    #[error("unknown edge id `{id}`")]
    UnknownEdge { id: String },

    #[error("invalid window ({a}, {b}]: require a < b and both finite")]
    InvalidWindow { a: f64, b: f64 },

    #[error("tolerance {tol} outside (0, {max}]")]
    InvalidTolerance { tol: f64, max: f64 },

    #[error("exact mode refused: {reason}")]
    ExactModeUnavailable { reason: String },

    #[error("graph has {n} vertices, above the subset-enumeration cap {cap}")]
    VertexCapExceeded { n: usize, cap: usize },

    #[error("cover would have {size} edges, above the size cap {cap}")]
    CoverCapExceeded { size: usize, cap: usize },

    #[error("unfolding to depth {depth} needs {edges} edges, above the cap {cap}")]
    UnfoldCapExceeded {
        depth: usize,
        edges: usize,
        cap: usize,
    },

    #[error("unfolding from root of degree {degree} at depth 0 is frontier-only")]
    DegenerateUnfold { degree: usize },

    #[error("integration failed on edge `{edge}`: step underflow at x = {x}")]
    IntegrationFailure { edge: String, x: f64 },

    #[error(
        "eigenvalue count {found} in ({a}, {b}] outside the decoupled corridor \
         [{lo}, {hi}] after refinement; suspicious subintervals: {intervals:?}"
    )]
    IncompleteScan {
        a: f64,
        b: f64,
        found: usize,
        lo: usize,
        hi: usize,
        intervals: Vec<(f64, f64)>,
    },

    #[error(
        "edge `{edge}` Dirichlet root count {found} violates the Sturm bracket \
         range [{lo}, {hi}] on ({a}, {b}]"
    )]
    SturmCountViolation {
        edge: String,
        found: usize,
        lo: usize,
        hi: usize,
        a: f64,
        b: f64,
    },

    #[error("girth {girth_min} not reached in {tries} tries; best girth found: {best}")]
    GirthNotReached {
        girth_min: usize,
        tries: usize,
        /// Largest girth among rejected lifts, `usize::MAX` rendered as unbounded
        /// never occurs here (a lift of a cyclic base is cyclic).
        best: usize,
    },

    #[error("vector length {got} does not match vertex count {expected}")]
    IndexMismatch { expected: usize, got: usize },

    #[error("eigenfunction trace residual {residual} exceeds {tol} at vertex `{vertex}`")]
    TraceResidual {
        vertex: String,
        residual: f64,
        tol: f64,
    },

    #[error("not applicable: {reason}")]
    NotApplicable { reason: String },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidGraph { .. }
            | Error::UnknownVertex { .. }
            | Error::UnknownEdge { .. }
            | Error::InvalidWindow { .. }
            | Error::InvalidTolerance { .. }
            | Error::ExactModeUnavailable { .. }
            | Error::DegenerateUnfold { .. }
            | Error::IndexMismatch { .. }
            | Error::NotApplicable { .. }
            | Error::Io(_)
            | Error::Json(_) => ErrorKind::Validation,
            Error::VertexCapExceeded { .. }
            | Error::CoverCapExceeded { .. }
            | Error::UnfoldCapExceeded { .. }
            | Error::IntegrationFailure { .. }
            | Error::IncompleteScan { .. }
            | Error::SturmCountViolation { .. }
            | Error::GirthNotReached { .. }
            | Error::TraceResidual { .. } => ErrorKind::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
