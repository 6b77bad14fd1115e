use equiaffine::geodesics::{distance_matrix, sample_distance_maps};
use equiaffine::invariance::{invariance_report, InvarianceConfig};
use equiaffine::matching::{detect_symmetry, detect_symmetry_with_samples, gh_match};
use equiaffine::mesh::{apply_transform, random_equiaffine, EquiAffineTransform};
use equiaffine::metric::{assemble_edge_lengths, MetricKind};
use equiaffine::shapes::{icosphere, mirror_symmetric_shape, random_bumped_shape, random_bumped_sphere};
use equiaffine::tessellation::{farthest_point_sample, voronoi};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn voronoi_labels_match_nearest_seed() {
    let mesh = random_bumped_shape(4, 5, 3);
    let lengths = assemble_edge_lengths(&mesh, MetricKind::EquiAffine);
    let seeds = farthest_point_sample(&mesh, &lengths, 15, 0).unwrap();
    let vd = voronoi(&mesh, &lengths, &seeds).unwrap();
    let maps = sample_distance_maps(&mesh, &lengths, &seeds).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let v = rng.random_range(0..mesh.vertex_count());
        let label = vd.labels[v].expect("closed mesh is fully reached");
        let best = maps.iter().map(|m| m.get(v)).fold(f64::INFINITY, f64::min);
        assert!(maps[label].get(v) <= best + 1e-9, "vertex {v}");
    }
}

#[test]
fn mirror_shape_has_a_symmetry_and_random_bumps_do_not() {
    let sym = {
        let mesh = mirror_symmetric_shape(4);
        let lengths = assemble_edge_lengths(&mesh, MetricKind::EquiAffine);
        detect_symmetry(&mesh, &lengths, 60, 0.2, 32, 0).unwrap()
    };
    assert!(sym.found);
    assert!(sym.vertex_distortion <= 0.05, "{}", sym.vertex_distortion);
    assert!(sym.mean_displacement >= 0.2);
    let other = {
        let mesh = random_bumped_sphere(4, 5, 2);
        let lengths = assemble_edge_lengths(&mesh, MetricKind::EquiAffine);
        detect_symmetry(&mesh, &lengths, 60, 0.2, 32, 0).unwrap()
    };
    assert!(
        other.vertex_distortion >= 2.0 * sym.vertex_distortion,
        "{} vs {}",
        other.vertex_distortion,
        sym.vertex_distortion
    );
}

#[test]
fn zero_displacement_still_excludes_the_identity() {
    let mesh = mirror_symmetric_shape(3);
    let lengths = assemble_edge_lengths(&mesh, MetricKind::Euclidean);
    let samples = farthest_point_sample(&mesh, &lengths, 30, 0).unwrap();
    let sym = detect_symmetry_with_samples(&mesh, &lengths, &samples, 0.0, 8, 1).unwrap();
    let c = sym.correspondence.expect("a map is found");
    assert!(c.pairs.iter().any(|&(x, y)| x != y));
    assert!(sym.images.iter().zip(&samples).any(|(a, b)| a != b));
}

#[test]
fn sphere_and_squashed_sphere_are_far_apart_euclidean() {
    let sphere = icosphere(3, 1.0);
    let squash = EquiAffineTransform::new(Matrix3::from_diagonal(&Vector3::new(2.0, 0.5, 1.0)), Vector3::zeros()).unwrap();
    let flat = apply_transform(&sphere, &squash);
    let dm = |m| {
        let l = assemble_edge_lengths(m, MetricKind::Euclidean);
        let s = farthest_point_sample(m, &l, 40, 0).unwrap();
        distance_matrix(m, &l, &s).unwrap().normalized()
    };
    let c = gh_match(&dm(&sphere), &dm(&flat), 16, 0).unwrap();
    assert!(c.distortion >= 0.1, "{}", c.distortion);
}

#[test]
fn invariance_example_on_icosphere() {
    let mesh = icosphere(4, 1.0);
    let config = InvarianceConfig {
        match_k: 0,
        seed: 7,
        ..Default::default()
    };
    let r = invariance_report(&mesh, &random_equiaffine(7, 2.0), &config).unwrap();
    assert!(r.equi_affine.histogram_l1 <= 0.05, "{}", r.equi_affine.histogram_l1);
    assert!(r.euclidean.histogram_l1 >= 3.0 * r.equi_affine.histogram_l1);
    assert!(r.equi_affine.voronoi_agreement >= 0.95);
    assert!(r.equi_affine.identity_distortion <= 0.05);
    assert!(r.euclidean.identity_distortion >= 3.0 * r.equi_affine.identity_distortion);
    assert!(r.equi_affine.matched_distortion.is_none());
}
