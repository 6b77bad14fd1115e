//! Per-triangle equi-affine metric tensor and per-edge lengths.
//!
//! Each triangle is unfolded together with its (up to three) edge neighbours,
//! the planar layout is mapped affinely so the triangle becomes the canonical
//! right isosceles triangle `(0,0), (1,0), (0,1)`, and a quadratic patch is
//! interpolated through the six vertex positions. At the barycentre the
//! determinants `det(x_u, x_v, x_ij)` give a pre-metric, normalised by
//! `|det|^{-1/4}` and made positive definite by taking absolute eigenvalues.
//! Edge lengths follow from the tensor on the three canonical edge vectors.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::mesh::{Mesh, Point3};

/// Relative floor on `|det ḡ|`, scaled by the sixth power of the mean edge
/// length so the clamp fires at `|K| h² <= 1e-10` regardless of units.
pub const DET_FLOOR_RELATIVE: f64 = 1e-10;
/// Eigenvalues below this fraction of the largest one are raised to it.
pub const EIG_FLOOR_RELATIVE: f64 = 1e-6;
/// Absolute floor used when both eigenvalues vanish, times `diag^{3/2}`.
pub const EIG_FLOOR_ABSOLUTE: f64 = 1e-12;
/// Minimum separation of patch points in canonical coordinates.
pub const POINT_SEPARATION: f64 = 1e-9;
/// Reciprocal condition number below which the interpolation is treated as singular.
const FIT_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    EquiAffine,
    Euclidean,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::EquiAffine => "equi_affine",
            Self::Euclidean => "euclidean",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    PreMetric,
    Normalized,
    Euclidean,
}

/// Symmetric 2×2 form, possibly indefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricForm2 {
    pub g11: f64,
    pub g12: f64,
    pub g22: f64,
    pub kind: FormKind,
}

impl SymmetricForm2 {
    pub fn new(g11: f64, g12: f64, g22: f64, kind: FormKind) -> Self {
        Self { g11, g12, g22, kind }
    }

    pub fn det(&self) -> f64 {
        self.g11 * self.g22 - self.g12 * self.g12
    }

    pub fn scaled(&self, s: f64, kind: FormKind) -> Self {
        Self::new(self.g11 * s, self.g12 * s, self.g22 * s, kind)
    }

    /// Eigenvalues (descending) and the rotation angle of the first eigenvector.
    pub fn eigen(&self) -> ([f64; 2], f64) {
        let mean = 0.5 * (self.g11 + self.g22);
        let half_diff = 0.5 * (self.g11 - self.g22);
        let r = half_diff.hypot(self.g12);
        let theta = 0.5 * self.g12.atan2(half_diff);
        ([mean + r, mean - r], if r == 0.0 { 0.0 } else { theta })
    }

    pub fn is_positive_definite(&self) -> bool {
        self.g11 > 0.0 && self.det() > 0.0
    }
}

/// Positive-definite metric tensor in canonical triangle coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTensor {
    pub g11: f64,
    pub g12: f64,
    pub g22: f64,
    pub eigenvalues: [f64; 2],
    /// The positivity fix changed the input form.
    pub fixed: bool,
}

impl MetricTensor {
    pub fn as_form(&self) -> SymmetricForm2 {
        SymmetricForm2::new(self.g11, self.g12, self.g22, FormKind::Normalized)
    }
}

/// Planar coordinates of a triangle and the far vertices of its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchParametrization {
    pub triangle: usize,
    /// Mesh vertex ids: three central vertices first, then neighbour vertices.
    pub vertex_ids: Vec<usize>,
    pub points: Vec<Vector2<f64>>,
    pub neighbor_count: usize,
}

/// Per-coordinate quadratic `c0 + cu u + cv v + cuv uv + cuu u² + cvv v²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPatch {
    /// `coeffs[axis] = [c0, cu, cv, cuv, cuu, cvv]`.
    pub coeffs: [[f64; 6]; 3],
    /// Evaluation point for derivatives.
    pub barycenter: Vector2<f64>,
}

fn basis(p: &Vector2<f64>) -> [f64; 6] {
    let (u, v) = (p.x, p.y);
    [1.0, u, v, u * v, u * u, v * v]
}

impl QuadraticPatch {
    pub fn evaluate(&self, p: &Vector2<f64>) -> Point3 {
        let b = basis(p);
        Point3::from_fn(|axis, _| self.coeffs[axis].iter().zip(b).map(|(c, b)| c * b).sum())
    }

    /// `(x_u, x_v)` at `p`.
    pub fn first_derivatives(&self, p: &Vector2<f64>) -> (Point3, Point3) {
        let (u, v) = (p.x, p.y);
        let xu = Point3::from_fn(|a, _| {
            let c = &self.coeffs[a];
            c[1] + c[3] * v + 2.0 * c[4] * u
        });
        let xv = Point3::from_fn(|a, _| {
            let c = &self.coeffs[a];
            c[2] + c[3] * u + 2.0 * c[5] * v
        });
        (xu, xv)
    }

    /// `(x_uu, x_uv, x_vv)`; constant for a quadratic.
    pub fn second_derivatives(&self) -> (Point3, Point3, Point3) {
        (
            Point3::from_fn(|a, _| 2.0 * self.coeffs[a][4]),
            Point3::from_fn(|a, _| self.coeffs[a][3]),
            Point3::from_fn(|a, _| 2.0 * self.coeffs[a][5]),
        )
    }
}

/// Places a point at distances `dp`, `dq` from `p`, `q` on the side of line
/// `pq` opposite to `away`.
fn hinge(p: Vector2<f64>, q: Vector2<f64>, dp: f64, dq: f64, away: Vector2<f64>) -> Vector2<f64> {
    let base = (q - p).norm();
    let u = (q - p) / base;
    let n = Vector2::new(-u.y, u.x);
    let along = (dp * dp - dq * dq + base * base) / (2.0 * base);
    let h = (dp * dp - along * along).max(0.0).sqrt();
    let side = if (away - p).dot(&n) >= 0.0 { -1.0 } else { 1.0 };
    p + u * along + n * (side * h)
}

/// Isometric planar layout of a triangle and its neighbours before canonisation.
/// `order` permutes which face corner becomes the first, second and third
/// central vertex.
pub fn hinged_layout(
    mesh: &Mesh,
    tri: usize,
    order: [usize; 3],
) -> Result<(Vec<usize>, Vec<Vector2<f64>>), GeometryError> {
    let face = mesh.faces()[tri];
    let ids = [face[order[0]], face[order[1]], face[order[2]]];
    let x = |v: usize| mesh.vertices()[v];
    let d = |a: usize, b: usize| (x(a) - x(b)).norm();
    let l01 = d(ids[0], ids[1]);
    let l02 = d(ids[0], ids[2]);
    let l12 = d(ids[1], ids[2]);
    let cx = (l01 * l01 + l02 * l02 - l12 * l12) / (2.0 * l01);
    let cy2 = l02 * l02 - cx * cx;
    if !(cy2 > 0.0) || !(l01 > 0.0) {
        return Err(GeometryError::DegenerateTriangle(tri));
    }
    let mut planar = vec![
        Vector2::new(0.0, 0.0),
        Vector2::new(l01, 0.0),
        Vector2::new(cx, cy2.sqrt()),
    ];
    let mut vertex_ids = ids.to_vec();
    for i in 0..3 {
        let (a, b, c) = (i, (i + 1) % 3, (i + 2) % 3);
        let Some(e) = mesh.edge_between(ids[a], ids[b]) else {
            continue;
        };
        let Some(&nb) = mesh.edges()[e].incident_faces().iter().find(|&&f| f != tri) else {
            continue;
        };
        let far = mesh.faces()[nb]
            .into_iter()
            .find(|&v| v != ids[a] && v != ids[b])
            .expect("neighbour face has a third vertex");
        if vertex_ids.contains(&far) {
            continue;
        }
        vertex_ids.push(far);
        planar.push(hinge(planar[a], planar[b], d(ids[a], far), d(ids[b], far), planar[c]));
    }
    Ok((vertex_ids, planar))
}

/// Unfolds the patch around `tri` in the face's own corner order.
pub fn unfold_patch(mesh: &Mesh, tri: usize) -> Result<PatchParametrization, GeometryError> {
    unfold_patch_with_order(mesh, tri, [0, 1, 2])
}

pub fn unfold_patch_with_order(
    mesh: &Mesh,
    tri: usize,
    order: [usize; 3],
) -> Result<PatchParametrization, GeometryError> {
    let (vertex_ids, planar) = hinged_layout(mesh, tri, order)?;
    let frame = Matrix2::from_columns(&[planar[1] - planar[0], planar[2] - planar[0]]);
    let inv = frame
        .try_inverse()
        .ok_or(GeometryError::DegenerateTriangle(tri))?;
    let mut points: Vec<Vector2<f64>> = planar.iter().map(|p| inv * (p - planar[0])).collect();
    // The central vertices land exactly on the canonical corners.
    points[0] = Vector2::new(0.0, 0.0);
    points[1] = Vector2::new(1.0, 0.0);
    points[2] = Vector2::new(0.0, 1.0);
    let mut keep_ids = vertex_ids[..3].to_vec();
    let mut keep_pts = points[..3].to_vec();
    for (id, p) in vertex_ids[3..].iter().zip(&points[3..]) {
        let finite = p.iter().all(|c| c.is_finite());
        let separated = keep_pts.iter().all(|q| (p - q).norm() > POINT_SEPARATION);
        if finite && separated {
            keep_ids.push(*id);
            keep_pts.push(*p);
        }
    }
    Ok(PatchParametrization {
        triangle: tri,
        neighbor_count: keep_ids.len() - 3,
        vertex_ids: keep_ids,
        points: keep_pts,
    })
}

/// Interpolates a quadratic through the patch points. Six points use the full
/// basis; five drop the `uv` term; fewer cannot be fitted.
pub fn fit_quadratic(
    patch: &PatchParametrization,
    positions: &[Point3],
) -> Result<QuadraticPatch, GeometryError> {
    assert_eq!(patch.points.len(), positions.len(), "one position per patch point");
    let n = patch.points.len().min(6);
    if n < 5 {
        return Err(GeometryError::TooFewPoints(n));
    }
    // Column indices into the full basis.
    let cols: &[usize] = if n == 6 { &[0, 1, 2, 3, 4, 5] } else { &[0, 1, 2, 4, 5] };
    let m = DMatrix::from_fn(n, n, |r, c| basis(&patch.points[r])[cols[c]]);
    let svd = m.svd(true, true);
    let sv = &svd.singular_values;
    if !(sv.min() > FIT_RCOND * sv.max()) {
        return Err(GeometryError::SingularFit);
    }
    let rhs = DMatrix::from_fn(n, 3, |r, axis| positions[r][axis]);
    let sol = svd.solve(&rhs, 0.0).map_err(|_| GeometryError::SingularFit)?;
    let mut coeffs = [[0.0; 6]; 3];
    for (axis, row) in coeffs.iter_mut().enumerate() {
        for (c, &col) in cols.iter().enumerate() {
            row[col] = sol[(c, axis)];
        }
    }
    Ok(QuadraticPatch {
        coeffs,
        barycenter: Vector2::new(1.0 / 3.0, 1.0 / 3.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreMetric {
    /// `ḡ_ij = det(x_u, x_v, x_ij)`.
    pub raw: SymmetricForm2,
    /// `ḡ_ij |det ḡ|^{-1/4}`.
    pub normalized: SymmetricForm2,
    /// `|det ḡ|` was raised to the floor before normalising.
    pub clamped: bool,
}

fn det3(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    Matrix3::from_columns(&[*a, *b, *c]).determinant()
}

/// Normalised pre-metric at the patch barycentre; `det_floor` bounds `|det ḡ|`
/// from below.
pub fn pre_metric(q: &QuadraticPatch, det_floor: f64) -> PreMetric {
    let (xu, xv) = q.first_derivatives(&q.barycenter);
    let (xuu, xuv, xvv) = q.second_derivatives();
    let raw = SymmetricForm2::new(
        det3(&xu, &xv, &xuu),
        det3(&xu, &xv, &xuv),
        det3(&xu, &xv, &xvv),
        FormKind::PreMetric,
    );
    let det = raw.det().abs();
    let clamped = !(det > det_floor);
    let det = if clamped { det_floor } else { det };
    PreMetric {
        raw,
        normalized: raw.scaled(det.powf(-0.25), FormKind::Normalized),
        clamped,
    }
}

/// Floor on `|det ḡ|` for a triangle with mean 3D edge length `h`.
pub fn det_floor(mean_edge_length: f64) -> f64 {
    DET_FLOOR_RELATIVE * mean_edge_length.powi(6)
}

/// Floor on eigenvalues of a vanishing form for a mesh of bounding-box diagonal `diag`.
pub fn absolute_eigen_floor(diag: f64) -> f64 {
    EIG_FLOOR_ABSOLUTE * diag.powf(1.5)
}

/// `G = U |Γ| Uᵀ`, with eigenvalues floored at `1e-6 · max|Γ|` (or at
/// `abs_floor` when both vanish).
pub fn fix_metric(s: &SymmetricForm2, abs_floor: f64) -> MetricTensor {
    let (gamma, theta) = s.eigen();
    let largest = gamma[0].abs().max(gamma[1].abs());
    let floor = if largest > 0.0 {
        EIG_FLOOR_RELATIVE * largest
    } else {
        abs_floor
    };
    let fixed_gamma = gamma.map(|g| g.abs().max(floor));
    let unchanged = fixed_gamma == gamma;
    if unchanged {
        return MetricTensor {
            g11: s.g11,
            g12: s.g12,
            g22: s.g22,
            eigenvalues: gamma,
            fixed: false,
        };
    }
    let (sin, cos) = theta.sin_cos();
    let [a, b] = fixed_gamma;
    MetricTensor {
        g11: a * cos * cos + b * sin * sin,
        g12: (a - b) * cos * sin,
        g22: a * sin * sin + b * cos * cos,
        eigenvalues: fixed_gamma,
        fixed: true,
    }
}

/// Lengths of the canonical edges `(0,0)-(1,0)`, `(0,0)-(0,1)`, `(1,0)-(0,1)`.
pub fn triangle_edge_lengths(g: &MetricTensor) -> [f64; 3] {
    [
        g.g11.sqrt(),
        g.g22.sqrt(),
        (g.g11 - 2.0 * g.g12 + g.g22).sqrt(),
    ]
}

/// Audit flags for one triangle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TriangleFlags {
    pub clamped: bool,
    pub fixed: bool,
    /// Pre-metric eigenvalues of opposite sign (hyperbolic point).
    pub indefinite: bool,
    /// Fit failed; Euclidean lengths were used.
    pub fallback: bool,
}

/// Metric data for one triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMetric {
    pub triangle: usize,
    pub tensor: Option<MetricTensor>,
    /// Mesh edge ids of the canonical edges, in the order of `lengths`.
    pub edges: [usize; 3],
    pub lengths: [f64; 3],
    pub flags: TriangleFlags,
}

fn euclidean_triangle(mesh: &Mesh, tri: usize, flags: TriangleFlags) -> TriangleMetric {
    let edges = mesh.face_edges(tri);
    TriangleMetric {
        triangle: tri,
        tensor: None,
        edges,
        lengths: edges.map(|e| mesh.edge_length(e)),
        flags,
    }
}

/// Full per-triangle pipeline with the given canonical corner order.
pub fn equiaffine_triangle(
    mesh: &Mesh,
    tri: usize,
    order: [usize; 3],
    abs_floor: f64,
) -> TriangleMetric {
    let fallback = TriangleFlags {
        fallback: true,
        ..Default::default()
    };
    let Ok(patch) = unfold_patch_with_order(mesh, tri, order) else {
        return euclidean_triangle(mesh, tri, fallback);
    };
    let positions: Vec<Point3> = patch.vertex_ids.iter().map(|&v| mesh.vertices()[v]).collect();
    let Ok(quad) = fit_quadratic(&patch, &positions) else {
        return euclidean_triangle(mesh, tri, fallback);
    };
    let [a, b, c] = [patch.vertex_ids[0], patch.vertex_ids[1], patch.vertex_ids[2]];
    let x = |v: usize| mesh.vertices()[v];
    let mean_edge = ((x(a) - x(b)).norm() + (x(a) - x(c)).norm() + (x(b) - x(c)).norm()) / 3.0;
    let pm = pre_metric(&quad, det_floor(mean_edge));
    let tensor = fix_metric(&pm.normalized, abs_floor);
    let edge = |p: usize, q: usize| mesh.edge_between(p, q).expect("triangle edge exists");
    TriangleMetric {
        triangle: tri,
        tensor: Some(tensor),
        edges: [edge(a, b), edge(a, c), edge(b, c)],
        lengths: triangle_edge_lengths(&tensor),
        flags: TriangleFlags {
            clamped: pm.clamped,
            fixed: tensor.fixed,
            indefinite: pm.raw.det() < 0.0,
            fallback: false,
        },
    }
}

/// Equi-affine metric data for every triangle, computed in parallel.
pub fn triangle_metrics(mesh: &Mesh) -> Vec<TriangleMetric> {
    let abs_floor = absolute_eigen_floor(mesh.bbox_diagonal());
    (0..mesh.face_count())
        .into_par_iter()
        .map(|f| equiaffine_triangle(mesh, f, [0, 1, 2], abs_floor))
        .collect()
}

/// Per-mesh audit counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MetricReport {
    pub triangles: usize,
    pub clamped: usize,
    pub fixed: usize,
    pub indefinite: usize,
    pub fallback: usize,
    /// Triangles whose averaged edge lengths break the strict triangle inequality.
    pub triangle_inequality_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLengths {
    lengths: Vec<f64>,
    contributors: Vec<u8>,
    metric: MetricKind,
    report: MetricReport,
}

impl EdgeLengths {
    /// Wraps externally supplied per-edge lengths.
    pub fn from_values(
        mesh: &Mesh,
        lengths: Vec<f64>,
        metric: MetricKind,
    ) -> Result<Self, GeometryError> {
        if lengths.len() != mesh.edge_count() {
            return Err(GeometryError::LengthCountMismatch {
                expected: mesh.edge_count(),
                got: lengths.len(),
            });
        }
        assert!(
            lengths.iter().all(|l| *l > 0.0 && l.is_finite()),
            "edge lengths must be positive and finite"
        );
        let contributors = mesh.edges().iter().map(|e| e.face_count).collect();
        let report = MetricReport {
            triangles: mesh.face_count(),
            triangle_inequality_violations: count_violations(mesh, &lengths),
            ..Default::default()
        };
        Ok(Self {
            lengths,
            contributors,
            metric,
            report,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.lengths
    }

    pub fn get(&self, edge: usize) -> f64 {
        self.lengths[edge]
    }

    pub fn contributors(&self) -> &[u8] {
        &self.contributors
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn report(&self) -> &MetricReport {
        &self.report
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Every length multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            lengths: self.lengths.iter().map(|l| l * s).collect(),
            ..self.clone()
        }
    }
}

fn count_violations(mesh: &Mesh, lengths: &[f64]) -> usize {
    (0..mesh.face_count())
        .filter(|&f| {
            let [a, b, c] = mesh.face_edges(f).map(|e| lengths[e]);
            !(a < b + c && b < a + c && c < a + b)
        })
        .count()
}

/// Per-edge lengths under the requested metric. Interior edges average the
/// values from their two triangles.
pub fn assemble_edge_lengths(mesh: &Mesh, metric: MetricKind) -> EdgeLengths {
    match metric {
        MetricKind::Euclidean => {
            let lengths = (0..mesh.edge_count()).map(|e| mesh.edge_length(e)).collect();
            EdgeLengths::from_values(mesh, lengths, metric).expect("one length per edge")
        }
        MetricKind::EquiAffine => from_triangle_metrics(mesh, &triangle_metrics(mesh)),
    }
}

/// Averages per-triangle lengths onto edges (arithmetic mean), summing in
/// face-id order so the result does not depend on scheduling.
pub fn from_triangle_metrics(mesh: &Mesh, tris: &[TriangleMetric]) -> EdgeLengths {
    let mut sum = vec![0.0; mesh.edge_count()];
    let mut count = vec![0u8; mesh.edge_count()];
    let mut report = MetricReport {
        triangles: tris.len(),
        ..Default::default()
    };
    for t in tris {
        for (e, l) in t.edges.iter().zip(t.lengths) {
            sum[*e] += l;
            count[*e] += 1;
        }
        report.clamped += t.flags.clamped as usize;
        report.fixed += t.flags.fixed as usize;
        report.indefinite += t.flags.indefinite as usize;
        report.fallback += t.flags.fallback as usize;
    }
    let lengths: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    report.triangle_inequality_violations = count_violations(mesh, &lengths);
    EdgeLengths {
        lengths,
        contributors: count,
        metric: MetricKind::EquiAffine,
        report,
    }
}

/// CSV dump: `triangle,g11,g12,g22,clamped,fixed,indefinite,fallback`.
pub fn triangle_metrics_csv(tris: &[TriangleMetric]) -> String {
    let mut s = String::from("triangle,g11,g12,g22,clamped,fixed,indefinite,fallback\n");
    for t in tris {
        let (g11, g12, g22) = t
            .tensor
            .map(|g| (g.g11, g.g12, g.g22))
            .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        let f = t.flags;
        writeln!(
            s,
            "{},{g11},{g12},{g22},{},{},{},{}",
            t.triangle, f.clamped as u8, f.fixed as u8, f.indefinite as u8, f.fallback as u8
        )
        .unwrap();
    }
    s
}

/// CSV dump: `edge,v0,v1,length,contributors`.
pub fn edge_lengths_csv(mesh: &Mesh, lengths: &EdgeLengths) -> String {
    let mut s = String::from("edge,v0,v1,length,contributors\n");
    for (e, edge) in mesh.edges().iter().enumerate() {
        writeln!(
            s,
            "{e},{},{},{},{}",
            edge.vertices[0], edge.vertices[1], lengths.lengths[e], lengths.contributors[e]
        )
        .unwrap();
    }
    s
}
