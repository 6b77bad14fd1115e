//! Synthetic test shapes.

use std::collections::HashMap;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{Mesh, Point3};

/// Largest subdivision level accepted by [`icosphere`].
pub const MAX_SUBDIVISIONS: u32 = 7;

/// Subdivided icosahedron projected onto a sphere; `10·4^s + 2` vertices,
/// outward-oriented faces.
pub fn icosphere(subdivisions: u32, radius: f64) -> Mesh {
    assert!(subdivisions <= MAX_SUBDIVISIONS, "at most {MAX_SUBDIVISIONS} subdivisions");
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoints.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut verts {
        *v *= radius;
    }
    Mesh::new(verts, faces).expect("icosphere is a valid mesh")
}

/// Smooth radial bump on the unit sphere: centre direction, height (fraction
/// of the radius) and angular width.
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    pub center: Vector3<f64>,
    pub height: f64,
    pub width: f64,
}

impl Bump {
    pub fn new(center: Vector3<f64>, height: f64, width: f64) -> Self {
        Self {
            center: center.normalize(),
            height,
            width,
        }
    }

    fn profile(&self, dir: &Vector3<f64>) -> f64 {
        let d2 = (dir - self.center).norm_squared();
        self.height * (-d2 / (self.width * self.width)).exp()
    }
}

/// Icosphere pushed out radially by `bumps`, then scaled per axis.
pub fn bumped_ellipsoid(subdivisions: u32, radii: Vector3<f64>, bumps: &[Bump]) -> Mesh {
    bumped_egg(subdivisions, radii, Vector3::zeros(), bumps)
}

/// Like [`bumped_ellipsoid`], with the radius also scaled by `1 + egg · p`
/// so the shape widens towards `egg`.
pub fn bumped_egg(subdivisions: u32, radii: Vector3<f64>, egg: Vector3<f64>, bumps: &[Bump]) -> Mesh {
    shaped(subdivisions, &Rotation3::identity(), radii, egg, bumps)
}

/// The surface of [`bumped_egg`] with the icosphere turned by `turn` before
/// the directions are evaluated, so only the tessellation changes.
fn shaped(
    subdivisions: u32,
    turn: &Rotation3<f64>,
    radii: Vector3<f64>,
    egg: Vector3<f64>,
    bumps: &[Bump],
) -> Mesh {
    let sphere = icosphere(subdivisions, 1.0);
    let verts = sphere
        .vertices()
        .iter()
        .map(|p| {
            let p = turn * p;
            let r = 1.0 + egg.dot(&p) + bumps.iter().map(|b| b.profile(&p)).sum::<f64>();
            (p * r).component_mul(&radii)
        })
        .collect();
    sphere.with_vertices(verts).expect("bumps keep the mesh valid")
}

const SYMMETRIC_BUMPS: [(f64, f64, f64, f64, f64); 4] = [
    (0.7, 0.45, 0.5, 0.45, 0.4),
    (-0.7, 0.45, 0.5, 0.45, 0.4),
    (0.0, -0.75, 0.6, 0.35, 0.45),
    (0.0, 0.6, -0.8, 0.3, 0.6),
];

fn symmetric_surface(subdivisions: u32, turn: &Rotation3<f64>) -> Mesh {
    let bumps = SYMMETRIC_BUMPS.map(|(x, y, z, h, w)| Bump::new(Vector3::new(x, y, z), h, w));
    shaped(subdivisions, turn, Vector3::new(1.0, 1.4, 0.8), Vector3::new(0.0, 0.2, 0.15), &bumps)
}

/// Egg-shaped ellipsoid with a mirrored bump pair and two bumps on the mirror
/// plane. Its only non-trivial symmetry is the reflection `x -> -x`, which
/// also maps the vertex set onto itself.
pub fn mirror_symmetric_shape(subdivisions: u32) -> Mesh {
    symmetric_surface(subdivisions, &Rotation3::identity())
}

/// The surface of [`mirror_symmetric_shape`] tessellated without regard to
/// the mirror plane.
pub fn mirror_symmetric_shape_unaligned(subdivisions: u32) -> Mesh {
    symmetric_surface(subdivisions, &Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.3, 0.8, 0.5)), 0.7))
}

/// Ellipsoid with bumps at random positions, so no non-trivial symmetry
/// survives.
pub fn random_bumped_shape(subdivisions: u32, bump_count: usize, seed: u64) -> Mesh {
    bumped_ellipsoid(subdivisions, Vector3::new(1.2, 1.0, 0.85), &random_bumps(bump_count, seed))
}

/// Unit sphere with bumps at random positions.
pub fn random_bumped_sphere(subdivisions: u32, bump_count: usize, seed: u64) -> Mesh {
    bumped_ellipsoid(subdivisions, Vector3::new(1.0, 1.0, 1.0), &random_bumps(bump_count, seed))
}

fn random_bumps(count: usize, seed: u64) -> Vec<Bump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let dir = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            Bump::new(dir, rng.random_range(0.12..0.28), rng.random_range(0.25..0.4))
        })
        .collect()
}

/// For every vertex, the vertex at its mirror image under `x -> -x`, if the
/// vertex set is exactly mirror symmetric.
pub fn mirror_vertex_map(mesh: &Mesh) -> Option<Vec<usize>> {
    let key = |p: &Point3| {
        let q = |c: f64| (c * 1e9).round() as i64;
        (q(p.x), q(p.y), q(p.z))
    };
    let index: HashMap<_, usize> = mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, p)| (key(p), i))
        .collect();
    mesh.vertices()
        .iter()
        .map(|p| index.get(&key(&Point3::new(-p.x, p.y, p.z))).copied())
        .collect()
}

/// For every vertex, the vertex nearest to its mirror image under `x -> -x`.
pub fn nearest_mirror_map(mesh: &Mesh) -> Vec<usize> {
    let verts = mesh.vertices();
    verts
        .iter()
        .map(|p| {
            let q = Point3::new(-p.x, p.y, p.z);
            (0..verts.len())
                .min_by(|&a, &b| (verts[a] - q).norm_squared().total_cmp(&(verts[b] - q).norm_squared()))
                .expect("mesh has vertices")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_stats;

    #[test]
    fn icosphere_counts() {
        let m = icosphere(0, 1.0);
        assert_eq!((m.vertex_count(), m.face_count()), (12, 20));
        for s in 0..=4u32 {
            let m = icosphere(s, 1.0);
            assert_eq!(m.vertex_count(), 10 * 4usize.pow(s) + 2);
            assert_eq!(m.face_count(), 20 * 4usize.pow(s));
            assert!(m.is_closed());
        }
    }

    #[test]
    fn icosphere_vertices_on_sphere() {
        let m = icosphere(3, 2.0);
        for p in m.vertices() {
            assert!((p.norm() - 2.0).abs() < 1e-9);
        }
        assert!(m.enclosed_volume().unwrap() > 0.0, "faces are outward");
    }

    #[test]
    fn icosphere_area_approaches_sphere() {
        let s = mesh_stats(&icosphere(4, 1.0));
        let exact = 4.0 * std::f64::consts::PI;
        assert!((s.total_area - exact).abs() / exact < 0.01);
    }

    #[test]
    fn mirror_shape_is_exactly_symmetric() {
        let m = mirror_symmetric_shape(3);
        let map = mirror_vertex_map(&m).expect("symmetric vertex set");
        for (i, &j) in map.iter().enumerate() {
            assert_eq!(map[j], i);
        }
        assert!(map.iter().enumerate().any(|(i, &j)| i != j));
        assert!(mirror_vertex_map(&random_bumped_shape(3, 4, 1)).is_none());
    }

    #[test]
    fn unaligned_shape_keeps_the_surface_but_not_the_vertex_mirror() {
        let aligned = mirror_symmetric_shape(3);
        assert_eq!(Some(nearest_mirror_map(&aligned)), mirror_vertex_map(&aligned));
        let m = mirror_symmetric_shape_unaligned(3);
        assert!(mirror_vertex_map(&m).is_none());
        let longest = m
            .edges()
            .iter()
            .map(|e| (m.vertices()[e.vertices[0]] - m.vertices()[e.vertices[1]]).norm())
            .fold(0.0, f64::max);
        for (p, &j) in m.vertices().iter().zip(&nearest_mirror_map(&m)) {
            let q = Point3::new(-p.x, p.y, p.z);
            assert!((m.vertices()[j] - q).norm() <= longest);
        }
    }
}
