use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no vertices or no faces")]
    Empty,
    #[error("vertex {vertex} has a non-finite coordinate")]
    NonFiniteVertex { vertex: usize },
    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("edge ({a}, {b}) is shared by more than two faces")]
    NonManifoldEdge { a: usize, b: usize },
    #[error("transform determinant is {det}, expected 1")]
    DeterminantNotOne { det: f64 },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unsupported mesh format `{0}`")]
    UnknownFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("quadratic fit needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("quadratic fit system is singular")]
    SingularFit,
    #[error("source set is empty")]
    NoSources,
    #[error("vertex {vertex} is out of range ({count} vertices)")]
    VertexOutOfRange { vertex: usize, count: usize },
    #[error("edge lengths cover {got} edges, mesh has {expected}")]
    LengthCountMismatch { expected: usize, got: usize },
    #[error("samples must be distinct (vertex {0} repeated)")]
    DuplicateSample(usize),
    #[error("invalid sample count {k} for a mesh with {n} vertices")]
    InvalidSampleCount { k: usize, n: usize },
    #[error("histogram needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("distance matrix has no positive off-diagonal entry")]
    DegenerateMatrix,
}

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding dimension must be at least 1")]
    ZeroDimension,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("all points coincide; alignment is undefined")]
    DegeneratePointSet,
}

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("correspondence is empty")]
    EmptyCorrespondence,
    #[error("pair ({0}, {1}) references a sample outside the matrices")]
    InvalidPair(usize, usize),
    #[error("at most {max} samples are supported, got {got}")]
    TooManySamples { max: usize, got: usize },
    #[error("expected one image per sample ({expected}), got {got}")]
    ImageCount { expected: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
