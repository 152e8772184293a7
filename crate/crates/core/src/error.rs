use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the discretization and solve pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh parameter: {0}")]
    InvalidMesh(String),

    #[error("cell {cell} is degenerate (signed area {area:e})")]
    DegenerateCell { cell: usize, area: f64 },

    #[error("cell index {0} out of range")]
    CellOutOfRange(usize),

    #[error("unsupported polynomial degree {0} (expected 1, 2 or 3)")]
    UnsupportedDegree(usize),

    #[error("Bernstein index {index} out of range for degree {degree}")]
    IndexOutOfRange { degree: usize, index: usize },

    #[error("unsupported derivative order {0} (at most 2)")]
    UnsupportedDerivativeOrder(usize),

    #[error("invalid barycentric point {0:?}")]
    InvalidBarycentric([f64; 3]),

    #[error("no quadrature rule with exactness {requested} (maximum {max})")]
    QuadratureUnavailable { requested: usize, max: usize },

    #[error("point ({0}, {1}) lies outside every cell")]
    PointOutsideMesh(f64, f64),

    #[error("boundary tag {0:?} does not occur on this mesh")]
    UnknownTag(crate::mesh::BoundaryTag),

    #[error("triplet ({row}, {col}) out of range for a {nrows}x{ncols} matrix")]
    TripletOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is singular: {0}")]
    SingularMatrix(String),

    #[error("linear solve residual {residual:e} exceeds the {bound:e} contract")]
    InaccurateSolve { residual: f64, bound: f64 },

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("variational inequality solver stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("time step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
