//! Equi-affine invariant geodesic geometry on triangle meshes.
//!
//! The Euclidean first fundamental form of a surface is replaced by a metric
//! built from determinants of first and second derivatives of a local
//! quadratic fit. Distances measured with it are unchanged by volume-preserving
//! linear maps of the embedding, and every distance-based tool in this crate
//! (fast marching, Voronoi cells, canonical forms, correspondence and
//! intrinsic symmetry) inherits that invariance.

pub mod canonical;
pub mod cli;
pub mod error;
pub mod geodesics;
pub mod invariance;
pub mod io;
pub mod matching;
pub mod mesh;
pub mod metric;
pub mod shapes;
pub mod tessellation;

pub use error::{EmbeddingError, GeometryError, MatchError, MeshError};
pub use geodesics::{
    dijkstra_distance, distance_histogram, distance_matrix, fmm_distance, DistanceMap,
    DistanceMatrix, FastMarching,
};
pub use mesh::{apply_transform, mesh_stats, random_equiaffine, EquiAffineTransform, Mesh, Point3};
pub use metric::{assemble_edge_lengths, EdgeLengths, MetricKind, MetricTensor};
