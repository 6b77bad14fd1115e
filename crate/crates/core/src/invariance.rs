//! Before/after comparison of every distance-based tool under a
//! volume-preserving transform, for both metrics.

use serde::Serialize;

use crate::canonical::{canonical_form, procrustes_align, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE};
use crate::error::{EmbeddingError, GeometryError, MatchError};
use crate::geodesics::{distance_histogram, distance_matrix, histogram_l1, DistanceMatrix};
use crate::matching::{gh_match, Correspondence, MAX_SAMPLES};
use crate::mesh::{apply_transform, EquiAffineTransform, Mesh};
use crate::metric::{assemble_edge_lengths, MetricKind, MetricReport};
use crate::tessellation::{farthest_point_sample, voronoi};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum InvarianceError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceConfig {
    /// Samples for the histogram and the correspondence scores.
    pub k: usize,
    pub bins: usize,
    pub voronoi_k: usize,
    pub canonical_k: usize,
    pub dimension: usize,
    /// Samples for the blind matching score (`0` skips it).
    pub match_k: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for InvarianceConfig {
    fn default() -> Self {
        Self {
            k: 100,
            bins: 50,
            voronoi_k: 20,
            canonical_k: 200,
            dimension: 3,
            match_k: 50,
            restarts: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformSummary {
    pub matrix: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub determinant: f64,
    pub condition_number: f64,
}

impl TransformSummary {
    pub fn new(t: &EquiAffineTransform) -> Self {
        let a = t.linear();
        let b = t.translation();
        Self {
            matrix: [0, 1, 2].map(|i| [0, 1, 2].map(|j| a[(i, j)])),
            translation: [b.x, b.y, b.z],
            determinant: a.determinant(),
            condition_number: t.condition_number(),
        }
    }
}

/// Paired scores for one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricScores {
    pub metric: MetricKind,
    /// L1 between normalized distance histograms on M and AM.
    pub histogram_l1: f64,
    /// Fraction of vertices whose Voronoi label is unchanged.
    pub voronoi_agreement: f64,
    /// Procrustes residual between canonical forms, over the form diameter.
    pub canonical_rmsd: f64,
    /// Distortion of the vertex-id correspondence between M and AM.
    pub identity_distortion: f64,
    /// Distortion reached by blind matching (absent when skipped).
    pub matched_distortion: Option<f64>,
    pub report_before: MetricReport,
    pub report_after: MetricReport,
    pub max_asymmetry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub schema: u32,
    pub vertices: usize,
    pub faces: usize,
    pub transform: TransformSummary,
    pub config: InvarianceConfig,
    pub samples: Vec<usize>,
    pub equi_affine: MetricScores,
    pub euclidean: MetricScores,
}

pub fn invariance_report(
    mesh: &Mesh,
    transform: &EquiAffineTransform,
    config: &InvarianceConfig,
) -> Result<InvarianceReport, InvarianceError> {
    let moved = apply_transform(mesh, transform);
    let reference = assemble_edge_lengths(mesh, MetricKind::Euclidean);
    let total = config
        .k
        .max(config.voronoi_k)
        .max(config.canonical_k)
        .max(config.match_k);
    // Farthest-point prefixes are themselves farthest-point samples, so one
    // run serves every sample size.
    let samples = farthest_point_sample(mesh, &reference, total, 0)?;
    let equi_affine = metric_scores(mesh, &moved, MetricKind::EquiAffine, &samples, config)?;
    let euclidean = metric_scores(mesh, &moved, MetricKind::Euclidean, &samples, config)?;
    Ok(InvarianceReport {
        schema: SCHEMA_VERSION,
        vertices: mesh.vertex_count(),
        faces: mesh.face_count(),
        transform: TransformSummary::new(transform),
        config: config.clone(),
        samples,
        equi_affine,
        euclidean,
    })
}

fn prefix(dm: &DistanceMatrix, k: usize) -> DistanceMatrix {
    dm.subset(&(0..k).collect::<Vec<_>>()).normalized()
}

pub fn metric_scores(
    mesh: &Mesh,
    moved: &Mesh,
    metric: MetricKind,
    samples: &[usize],
    config: &InvarianceConfig,
) -> Result<MetricScores, InvarianceError> {
    let before = assemble_edge_lengths(mesh, metric);
    let after = assemble_edge_lengths(moved, metric);
    let dm_before = distance_matrix(mesh, &before, samples)?;
    let dm_after = distance_matrix(moved, &after, samples)?;

    let (hb, ha) = (prefix(&dm_before, config.k), prefix(&dm_after, config.k));
    let histogram_l1 = histogram_l1(
        &distance_histogram(&hb, config.bins)?,
        &distance_histogram(&ha, config.bins)?,
    );

    let seeds = &samples[..config.voronoi_k];
    let voronoi_agreement = voronoi(mesh, &before, seeds)?.agreement(&voronoi(moved, &after, seeds)?);

    let cb = canonical_form(&prefix(&dm_before, config.canonical_k), config.dimension, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE)?;
    let ca = canonical_form(&prefix(&dm_after, config.canonical_k), config.dimension, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE)?;
    let canonical_rmsd = procrustes_align(&ca, &cb, true)?.rmsd;

    let km = config.k.min(MAX_SAMPLES);
    let (mb, ma) = (prefix(&dm_before, km), prefix(&dm_after, km));
    let identity_distortion = Correspondence::identity(km, &mb, &ma)?.distortion;

    let matched_distortion = if config.match_k > 0 {
        let k = config.match_k.min(MAX_SAMPLES);
        let c = gh_match(&prefix(&dm_before, k), &prefix(&dm_after, k), config.restarts, config.seed)?;
        Some(c.distortion)
    } else {
        None
    };

    Ok(MetricScores {
        metric,
        histogram_l1,
        voronoi_agreement,
        canonical_rmsd,
        identity_distortion,
        matched_distortion,
        report_before: before.report().clone(),
        report_after: after.report().clone(),
        max_asymmetry: dm_before.max_asymmetry().max(dm_after.max_asymmetry()),
    })
}
