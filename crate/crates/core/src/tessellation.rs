//! Farthest-point sampling and vertex-labelled geodesic Voronoi cells.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::GeometryError;
use crate::geodesics::{check_distinct, FastMarching};
use crate::mesh::Mesh;
use crate::metric::{EdgeLengths, MetricKind};

/// Greedy farthest-point samples starting at `seed`, with the covering radius
/// at which each sample was picked (`0` for the seed).
#[derive(Debug, Clone, PartialEq)]
pub struct FpsSamples {
    pub samples: Vec<usize>,
    pub radii: Vec<f64>,
}

pub fn farthest_point_sample(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    k: usize,
    seed: usize,
) -> Result<Vec<usize>, GeometryError> {
    farthest_point_sample_with_radii(mesh, lengths, k, seed).map(|r| r.samples)
}

pub fn farthest_point_sample_with_radii(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    k: usize,
    seed: usize,
) -> Result<FpsSamples, GeometryError> {
    let n = mesh.vertex_count();
    if k == 0 || k > n {
        return Err(GeometryError::InvalidSampleCount { k, n });
    }
    if seed >= n {
        return Err(GeometryError::VertexOutOfRange { vertex: seed, count: n });
    }
    let solver = FastMarching::new(mesh, lengths)?;
    Ok(grow(&solver, n, vec![seed], k)?)
}

/// Continues farthest-point sampling from `seeds` until there are `k`
/// samples; the result starts with `seeds`.
pub fn extend_farthest_point_sample(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    seeds: &[usize],
    k: usize,
) -> Result<Vec<usize>, GeometryError> {
    let n = mesh.vertex_count();
    if seeds.is_empty() || k < seeds.len() || k > n {
        return Err(GeometryError::InvalidSampleCount { k, n });
    }
    if let Some(&v) = seeds.iter().find(|&&v| v >= n) {
        return Err(GeometryError::VertexOutOfRange { vertex: v, count: n });
    }
    check_distinct(seeds)?;
    let solver = FastMarching::new(mesh, lengths)?;
    Ok(grow(&solver, n, seeds.to_vec(), k)?.samples)
}

fn grow(solver: &FastMarching, n: usize, seeds: Vec<usize>, k: usize) -> Result<FpsSamples, GeometryError> {
    let mut nearest = vec![f64::INFINITY; n];
    let mut chosen = vec![false; n];
    let mut radii = vec![0.0; seeds.len()];
    for &s in &seeds[..seeds.len() - 1] {
        chosen[s] = true;
        let map = solver.solve(&[s])?;
        for (m, d) in nearest.iter_mut().zip(&map.distances) {
            *m = m.min(*d);
        }
    }
    chosen[*seeds.last().expect("non-empty")] = true;
    let mut samples = seeds;
    while samples.len() < k {
        let last = *samples.last().expect("non-empty");
        let map = solver.solve(&[last])?;
        for (m, d) in nearest.iter_mut().zip(&map.distances) {
            *m = m.min(*d);
        }
        // Ties go to the smallest vertex id.
        let (next, radius) = nearest
            .iter()
            .enumerate()
            .filter(|(v, _)| !chosen[*v])
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (v, &d)| {
                if d > best.1 {
                    (v, d)
                } else {
                    best
                }
            });
        chosen[next] = true;
        samples.push(next);
        radii.push(radius);
    }
    Ok(FpsSamples { samples, radii })
}

/// Voronoi cells as per-vertex labels (index into `seeds`).
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiDiagram {
    pub seeds: Vec<usize>,
    /// `None` for vertices no seed reaches.
    pub labels: Vec<Option<usize>>,
    /// Distance to the nearest seed.
    pub distances: Vec<f64>,
    pub metric: MetricKind,
}

impl VoronoiDiagram {
    pub fn cell_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.seeds.len()];
        for l in self.labels.iter().flatten() {
            sizes[*l] += 1;
        }
        sizes
    }

    /// Fraction of vertices carrying the same label in both diagrams.
    pub fn agreement(&self, other: &Self) -> f64 {
        assert_eq!(self.labels.len(), other.labels.len(), "diagrams on different meshes");
        let same = self
            .labels
            .iter()
            .zip(&other.labels)
            .filter(|(a, b)| a == b)
            .count();
        same as f64 / self.labels.len() as f64
    }

    /// `vertex,label` rows; unreachable vertices get `-1`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("vertex,label\n");
        for (v, l) in self.labels.iter().enumerate() {
            match l {
                Some(l) => writeln!(s, "{v},{l}").unwrap(),
                None => writeln!(s, "{v},-1").unwrap(),
            }
        }
        s
    }

    pub fn colors(&self) -> Vec<[u8; 3]> {
        self.labels
            .iter()
            .map(|l| l.map_or([128, 128, 128], cell_color))
            .collect()
    }
}

/// Deterministic, well-spread colour for cell `i` (golden-angle hue walk).
pub fn cell_color(i: usize) -> [u8; 3] {
    let hue = (i as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let sat = if i % 2 == 0 { 0.85 } else { 0.6 };
    let val = if (i / 2) % 2 == 0 { 0.95 } else { 0.75 };
    let c = val * sat;
    let x = c * (1.0 - ((hue % 2.0) - 1.0).abs());
    let (r, g, b) = match hue as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = val - c;
    [r, g, b].map(|v| ((v + m) * 255.0).round() as u8)
}

/// Labels every vertex with its geodesically nearest seed.
///
/// Each seed gets its own sweep (in parallel) and a vertex takes the seed with
/// the smallest distance, the lower seed index winning exact ties, so labels
/// agree with per-seed single-source distances by construction.
pub fn voronoi(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    seeds: &[usize],
) -> Result<VoronoiDiagram, GeometryError> {
    if seeds.is_empty() {
        return Err(GeometryError::NoSources);
    }
    check_distinct(seeds)?;
    let solver = FastMarching::new(mesh, lengths)?;
    let maps = seeds
        .par_iter()
        .map(|&s| solver.solve(&[s]))
        .collect::<Result<Vec<_>, _>>()?;
    let n = mesh.vertex_count();
    let mut labels = vec![None; n];
    let mut distances = vec![f64::INFINITY; n];
    for (i, map) in maps.iter().enumerate() {
        for v in 0..n {
            if map.distances[v] < distances[v] {
                distances[v] = map.distances[v];
                labels[v] = Some(i);
            }
        }
    }
    Ok(VoronoiDiagram {
        seeds: seeds.to_vec(),
        labels,
        distances,
        metric: lengths.metric(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesics::distance_matrix;
    use crate::metric::assemble_edge_lengths;
    use crate::shapes::icosphere;

    #[test]
    fn single_sample_is_seed() {
        let m = icosphere(2, 1.0);
        let l = assemble_edge_lengths(&m, MetricKind::Euclidean);
        assert_eq!(farthest_point_sample(&m, &l, 1, 17).unwrap(), vec![17]);
    }

    #[test]
    fn all_vertices_when_k_is_n() {
        let m = icosphere(1, 1.0);
        let l = assemble_edge_lengths(&m, MetricKind::Euclidean);
        let mut s = farthest_point_sample(&m, &l, m.vertex_count(), 0).unwrap();
        s.sort_unstable();
        assert_eq!(s, (0..m.vertex_count()).collect::<Vec<_>>());
        assert!(farthest_point_sample(&m, &l, m.vertex_count() + 1, 0).is_err());
    }

    #[test]
    fn fps_is_deterministic_and_radii_shrink() {
        let m = icosphere(3, 1.0);
        let l = assemble_edge_lengths(&m, MetricKind::EquiAffine);
        let a = farthest_point_sample_with_radii(&m, &l, 50, 3).unwrap();
        let b = farthest_point_sample_with_radii(&m, &l, 50, 3).unwrap();
        assert_eq!(a, b);
        for w in a.radii[1..].windows(2) {
            assert!(w[1] <= w[0]);
        }
        // Minimal pairwise distance among the first k samples never grows with k.
        let dm = distance_matrix(&m, &l, &a.samples).unwrap();
        let mut prev = f64::INFINITY;
        for k in 2..=50 {
            let min = (0..k)
                .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                .map(|(i, j)| dm.get(i, j))
                .fold(f64::INFINITY, f64::min);
            assert!(min <= prev + 1e-12);
            prev = min;
        }
    }

    #[test]
    fn one_seed_labels_everything_zero() {
        let m = icosphere(2, 1.0);
        let l = assemble_edge_lengths(&m, MetricKind::Euclidean);
        let vd = voronoi(&m, &l, &[4]).unwrap();
        assert!(vd.labels.iter().all(|l| *l == Some(0)));
        assert_eq!(vd.labels[4], Some(0));
    }

    #[test]
    fn antipodal_seeds_split_sphere_evenly() {
        let m = icosphere(4, 1.0);
        let l = assemble_edge_lengths(&m, MetricKind::Euclidean);
        // A generic vertex and its antipode (the icosphere is centrally symmetric).
        let a = 1000;
        let p = -m.vertices()[a];
        let b = (0..m.vertex_count())
            .min_by(|&i, &j| {
                (m.vertices()[i] - p).norm().total_cmp(&(m.vertices()[j] - p).norm())
            })
            .unwrap();
        assert!((m.vertices()[b] - p).norm() < 1e-12);
        let vd = voronoi(&m, &l, &[a, b]).unwrap();
        let sizes = vd.cell_sizes();
        let half = m.vertex_count() as f64 / 2.0;
        for s in sizes {
            assert!((s as f64 - half).abs() / half <= 0.02, "cell size {s}");
        }
        assert_eq!(vd.labels[a], Some(0));
        assert_eq!(vd.labels[b], Some(1));
    }

    #[test]
    fn colors_are_deterministic_and_distinct() {
        let c: Vec<_> = (0..20).map(cell_color).collect();
        assert_eq!(c, (0..20).map(cell_color).collect::<Vec<_>>());
        for i in 0..20 {
            for j in i + 1..20 {
                assert_ne!(c[i], c[j]);
            }
        }
    }

    #[test]
    fn extension_continues_farthest_point_sampling() {
        let m = icosphere(3, 1.0);
        let l = assemble_edge_lengths(&m, MetricKind::Euclidean);
        let short = farthest_point_sample(&m, &l, 5, 0).unwrap();
        let long = farthest_point_sample(&m, &l, 12, 0).unwrap();
        assert_eq!(extend_farthest_point_sample(&m, &l, &short, 12).unwrap(), long);
        assert_eq!(extend_farthest_point_sample(&m, &l, &short, 5).unwrap(), short);
        assert!(extend_farthest_point_sample(&m, &l, &short, 4).is_err());
        assert!(extend_farthest_point_sample(&m, &l, &[3, 3], 6).is_err());
        assert!(extend_farthest_point_sample(&m, &l, &[], 6).is_err());
    }
}
