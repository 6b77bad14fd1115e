//! Triangle mesh with edge/face adjacency, validation and equi-affine transforms.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::MeshError;

pub type Point3 = Vector3<f64>;

/// Faces with area at or below this fraction of the squared bounding-box
/// diagonal are rejected.
pub const DEGENERATE_AREA_FRACTION: f64 = 1e-12;

/// Tolerance on `|det A - 1|` accepted by [`EquiAffineTransform::new`].
pub const DET_TOLERANCE: f64 = 1e-9;

/// Unordered vertex pair with its one or two incident faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Endpoints, smaller id first.
    pub vertices: [usize; 2],
    pub faces: [usize; 2],
    pub face_count: u8,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.face_count == 1
    }

    pub fn incident_faces(&self) -> &[usize] {
        &self.faces[..self.face_count as usize]
    }
}

/// Immutable triangulated surface.
///
/// Local edge `i` of a face joins corners `i` and `(i + 1) % 3`; `face_edges`
/// and `face_neighbors` are indexed the same way.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    edge_index: HashMap<(usize, usize), usize>,
    face_edges: Vec<[usize; 3]>,
    face_neighbors: Vec<[Option<usize>; 3]>,
    vertex_faces: Vec<Vec<usize>>,
    vertex_edges: Vec<Vec<usize>>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds a mesh and its adjacency, rejecting anything that violates the
    /// mesh invariants.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(MeshError::Empty);
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFiniteVertex { vertex: i });
            }
        }
        let n = vertices.len();
        for (f, face) in faces.iter().enumerate() {
            for &idx in face {
                if idx >= n {
                    return Err(MeshError::IndexOutOfRange {
                        face: f,
                        index: idx,
                        vertex_count: n,
                    });
                }
            }
        }
        let diag = bbox_diagonal(&vertices);
        let min_area = DEGENERATE_AREA_FRACTION * diag * diag;
        for (f, face) in faces.iter().enumerate() {
            let area = triangle_area(&vertices[face[0]], &vertices[face[1]], &vertices[face[2]]);
            let repeated = face[0] == face[1] || face[1] == face[2] || face[0] == face[2];
            if repeated || area <= min_area {
                return Err(MeshError::DegenerateFace { face: f, area });
            }
        }
        Self::with_topology(vertices, faces)
    }

    fn with_topology(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let mut edges: Vec<Edge> = Vec::with_capacity(faces.len() * 3 / 2 + 3);
        let mut edge_index = HashMap::with_capacity(faces.len() * 3 / 2 + 3);
        let mut face_edges = Vec::with_capacity(faces.len());
        for (f, face) in faces.iter().enumerate() {
            let mut fe = [0usize; 3];
            for i in 0..3 {
                let key = edge_key(face[i], face[(i + 1) % 3]);
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        faces: [f, usize::MAX],
                        face_count: 0,
                    });
                    edges.len() - 1
                });
                let edge = &mut edges[e];
                match edge.face_count {
                    0 => edge.faces[0] = f,
                    1 => edge.faces[1] = f,
                    _ => {
                        return Err(MeshError::NonManifoldEdge {
                            a: key.0,
                            b: key.1,
                        })
                    }
                }
                edge.face_count += 1;
                fe[i] = e;
            }
            face_edges.push(fe);
        }
        let face_neighbors = face_edges
            .iter()
            .enumerate()
            .map(|(f, fe)| {
                let mut nb = [None; 3];
                for i in 0..3 {
                    let edge = &edges[fe[i]];
                    nb[i] = edge.incident_faces().iter().copied().find(|&g| g != f);
                }
                nb
            })
            .collect();
        let mut vertex_faces = vec![Vec::new(); vertices.len()];
        for (f, face) in faces.iter().enumerate() {
            for &v in face {
                vertex_faces[v].push(f);
            }
        }
        let mut vertex_edges = vec![Vec::new(); vertices.len()];
        for (e, edge) in edges.iter().enumerate() {
            vertex_edges[edge.vertices[0]].push(e);
            vertex_edges[edge.vertices[1]].push(e);
        }
        Ok(Self {
            vertices,
            faces,
            edges,
            edge_index,
            face_edges,
            face_neighbors,
            vertex_faces,
            vertex_edges,
        })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edge id joining `a` and `b`, if they are adjacent.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&edge_key(a, b)).copied()
    }

    pub fn face_edges(&self, face: usize) -> [usize; 3] {
        self.face_edges[face]
    }

    /// Face across each local edge of `face`.
    pub fn face_neighbors(&self, face: usize) -> [Option<usize>; 3] {
        self.face_neighbors[face]
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn vertex_edges(&self, v: usize) -> &[usize] {
        &self.vertex_edges[v]
    }

    /// True when every edge has two incident faces.
    pub fn is_closed(&self) -> bool {
        self.edges.iter().all(|e| e.face_count == 2)
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        (self.vertices[a] - self.vertices[b]).norm()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.vertices)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume by the divergence theorem; `None` for open meshes.
    pub fn enclosed_volume(&self) -> Option<f64> {
        if !self.is_closed() {
            return None;
        }
        let sum: f64 = self
            .faces
            .iter()
            .map(|&[a, b, c]| {
                let (p, q, r) = (&self.vertices[a], &self.vertices[b], &self.vertices[c]);
                p.dot(&q.cross(r))
            })
            .sum();
        Some(sum / 6.0)
    }

    /// Same connectivity with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<Self, MeshError> {
        assert_eq!(vertices.len(), self.vertices.len(), "vertex count must match");
        Self::new(vertices, self.faces.clone())
    }
}

pub fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn bbox_diagonal(points: &[Point3]) -> f64 {
    let mut lo = Point3::repeat(f64::INFINITY);
    let mut hi = Point3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshStats {
    pub vertex_count: usize,
    pub face_count: usize,
    pub total_area: f64,
    pub bbox_diagonal: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enclosed_volume: Option<f64>,
}

pub fn mesh_stats(mesh: &Mesh) -> MeshStats {
    MeshStats {
        vertex_count: mesh.vertex_count(),
        face_count: mesh.face_count(),
        total_area: mesh.total_area(),
        bbox_diagonal: mesh.bbox_diagonal(),
        enclosed_volume: mesh.enclosed_volume(),
    }
}

/// Volume-preserving affine map `v -> A v + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquiAffineTransform {
    a: Matrix3<f64>,
    b: Vector3<f64>,
}

impl EquiAffineTransform {
    pub fn new(a: Matrix3<f64>, b: Vector3<f64>) -> Result<Self, MeshError> {
        let det = a.determinant();
        // NaN entries fail this comparison too.
        if !((det - 1.0).abs() <= DET_TOLERANCE) || !b.iter().all(|x| x.is_finite()) {
            return Err(MeshError::DeterminantNotOne { det });
        }
        Ok(Self { a, b })
    }

    pub fn identity() -> Self {
        Self {
            a: Matrix3::identity(),
            b: Vector3::zeros(),
        }
    }

    pub fn linear(&self) -> &Matrix3<f64> {
        &self.a
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.b
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.a * p + self.b
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            a: self.a * other.a,
            b: self.a * other.b + self.b,
        }
    }

    /// 2-norm condition number of the linear part.
    pub fn condition_number(&self) -> f64 {
        let sv = self.a.singular_values();
        sv.max() / sv.min()
    }
}

pub fn apply_transform(mesh: &Mesh, t: &EquiAffineTransform) -> Mesh {
    let vertices = mesh.vertices.iter().map(|p| t.apply(p)).collect();
    Mesh {
        vertices,
        ..mesh.clone()
    }
}

/// Log of the condition number reached at strength 1 is `LOG_COND_PER_STRENGTH * w`
/// with `w` drawn uniformly from `STRETCH_SPREAD`.
const LOG_COND_PER_STRENGTH: f64 = 0.549_306_144_334_054_8; // ln(3) / 2
const STRETCH_SPREAD: (f64, f64) = (1.0, 1.25);

/// Deterministic random equi-affine transform.
///
/// The linear part is a symmetric stretch `R diag(e^λ) Rᵀ` with `Σλ = 0` along
/// random axes, so `cond(A) = exp(strength · ln3/2 · w)`, `w ∈ [1, 1.25]`, is
/// strictly increasing in `strength` for a fixed seed. Strength 2 gives a
/// condition number in `[3, 3.95]`.
pub fn random_equiaffine(seed: u64, strength: f64) -> EquiAffineTransform {
    assert!(strength >= 0.0 && strength.is_finite(), "strength must be >= 0");
    if strength == 0.0 {
        return EquiAffineTransform::identity();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = nalgebra::Vector4::<f64>::from_fn(|_, _| rng.sample(StandardNormal));
    let rot = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(q))
        .to_rotation_matrix()
        .into_inner();
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let e1 = Vector3::new(1.0, -1.0, 0.0) / 2f64.sqrt();
    let e2 = Vector3::new(1.0, 1.0, -2.0) / 6f64.sqrt();
    let dir = e1 * theta.cos() + e2 * theta.sin();
    let dir = dir / (dir.max() - dir.min());
    let w: f64 = rng.random_range(STRETCH_SPREAD.0..STRETCH_SPREAD.1);
    let log_cond = strength * LOG_COND_PER_STRENGTH * w;
    let l0 = dir[0] * log_cond;
    let l1 = dir[1] * log_cond;
    let l2 = -(l0 + l1);
    let stretch = Matrix3::from_diagonal(&Vector3::new(l0.exp(), l1.exp(), l2.exp()));
    let a = rot * stretch * rot.transpose();
    let b = Vector3::<f64>::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)) * 0.5 * strength;
    EquiAffineTransform { a, b }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::icosphere;

    fn single_triangle() -> Mesh {
        Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_topology() {
        let m = single_triangle();
        assert_eq!(m.face_count(), 1);
        assert_eq!(m.edge_count(), 3);
        assert!(m.edges().iter().all(Edge::is_boundary));
        let s = mesh_stats(&m);
        assert!((s.total_area - 0.5).abs() < 1e-15);
        assert!(s.enclosed_volume.is_none());
    }

    #[test]
    fn rejects_bad_input() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ];
        assert!(matches!(
            Mesh::new(v.clone(), vec![[0, 1, 7]]),
            Err(MeshError::IndexOutOfRange { face: 0, index: 7, .. })
        ));
        assert!(matches!(
            Mesh::new(v.clone(), vec![[0, 1, 3]]),
            Err(MeshError::DegenerateFace { face: 0, .. })
        ));
        let mut bad = v.clone();
        bad[2].x = f64::NAN;
        assert!(matches!(
            Mesh::new(bad, vec![[0, 1, 2]]),
            Err(MeshError::NonFiniteVertex { vertex: 2 })
        ));
    }

    #[test]
    fn non_manifold_edge_is_named() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.5, 1.0, 0.0),
            Point3::new(0.5, -1.0, 0.0),
            Point3::new(0.5, 0.0, 1.0),
        ];
        let err = Mesh::new(v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldEdge { a: 0, b: 1 }));
        assert!(err.to_string().contains("(0, 1)"));
    }

    #[test]
    fn identity_transform_keeps_vertices() {
        let m = icosphere(2, 1.0);
        let t = apply_transform(&m, &EquiAffineTransform::identity());
        assert_eq!(m.vertices(), t.vertices());
        assert_eq!(m.faces(), t.faces());
    }

    #[test]
    fn equiaffine_preserves_volume() {
        let m = icosphere(3, 1.0);
        let a = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 0.5));
        let t = EquiAffineTransform::new(a, Vector3::zeros()).unwrap();
        let v0 = m.enclosed_volume().unwrap();
        let v1 = apply_transform(&m, &t).enclosed_volume().unwrap();
        assert!(((v1 - v0) / v0).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_unit_determinant() {
        let a = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0));
        match EquiAffineTransform::new(a, Vector3::zeros()) {
            Err(MeshError::DeterminantNotOne { det }) => assert!((det - 2.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn random_transform_zero_strength_is_identity() {
        let t = random_equiaffine(42, 0.0);
        assert_eq!(t, EquiAffineTransform::identity());
    }

    #[test]
    fn random_transform_condition_grows_with_strength() {
        let mut larger = 0;
        for seed in 0..100 {
            let c1 = random_equiaffine(seed, 1.0).condition_number();
            let c3 = random_equiaffine(seed, 3.0).condition_number();
            if c3 > c1 {
                larger += 1;
            }
        }
        assert_eq!(larger, 100);
        for seed in 0..20 {
            let c = random_equiaffine(seed, 2.0).condition_number();
            assert!((3.0 - 1e-9..=3.95).contains(&c), "cond {c}");
        }
    }

    #[test]
    fn composition_matches_sequential_application() {
        let m = icosphere(1, 1.0);
        let t1 = random_equiaffine(1, 1.5);
        let t2 = random_equiaffine(2, 0.7);
        let seq = apply_transform(&apply_transform(&m, &t2), &t1);
        let once = apply_transform(&m, &t1.compose(&t2));
        for (p, q) in seq.vertices().iter().zip(once.vertices()) {
            assert!((p - q).norm() < 1e-9);
        }
    }

    proptest::proptest! {
        #[test]
        fn random_transform_has_unit_determinant(seed in 0u64..10_000, strength in 0.0f64..5.0) {
            let t = random_equiaffine(seed, strength);
            proptest::prop_assert!((t.linear().determinant() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn volume_invariant_under_random_transforms(seed in 0u64..1000, strength in 0.0f64..3.0) {
            let m = icosphere(2, 1.0);
            let t = random_equiaffine(seed, strength);
            let v0 = m.enclosed_volume().unwrap();
            let v1 = apply_transform(&m, &t).enclosed_volume().unwrap();
            proptest::prop_assert!(((v1 - v0) / v0).abs() <= 1e-6);
        }
    }
}
