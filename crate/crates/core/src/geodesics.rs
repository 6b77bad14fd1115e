//! Fast marching on triangle meshes with prescribed edge lengths, a Dijkstra
//! baseline and pairwise distance utilities.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::GeometryError;
use crate::mesh::Mesh;
use crate::metric::{EdgeLengths, MetricKind};

/// Per-sweep counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SweepStats {
    /// Triangles whose prescribed lengths break the triangle inequality;
    /// they only ever propagate along edges.
    pub edge_only_triangles: usize,
    pub two_point_updates: usize,
    pub rejected_two_point: usize,
}

/// Geodesic distance from a source set to every vertex (`+∞` if unreachable).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub distances: Vec<f64>,
    pub sources: Vec<usize>,
    pub metric: MetricKind,
    pub stats: SweepStats,
}

impl DistanceMap {
    pub fn get(&self, v: usize) -> f64 {
        self.distances[v]
    }

    pub fn max_finite(&self) -> f64 {
        self.distances
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist: f64,
    vertex: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Min-heap on distance, then on vertex id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

fn check_sources(mesh: &Mesh, sources: &[usize]) -> Result<(), GeometryError> {
    if sources.is_empty() {
        return Err(GeometryError::NoSources);
    }
    if let Some(&v) = sources.iter().find(|&&v| v >= mesh.vertex_count()) {
        return Err(GeometryError::VertexOutOfRange {
            vertex: v,
            count: mesh.vertex_count(),
        });
    }
    Ok(())
}

fn check_lengths(mesh: &Mesh, lengths: &EdgeLengths) -> Result<(), GeometryError> {
    if lengths.len() != mesh.edge_count() {
        return Err(GeometryError::LengthCountMismatch {
            expected: mesh.edge_count(),
            got: lengths.len(),
        });
    }
    Ok(())
}

/// Arrival time at `C` of a point-source wavefront through the triangle
/// `A B C`, given arrival times `ta`, `tb` and side lengths `ab`, `ac`, `bc`.
///
/// The triangle is laid out flat with `A` at the origin and `B` on the
/// positive x-axis; the virtual source sits below `AB` at distances `ta`, `tb`.
/// Returns `None` unless the ray from the virtual source to `C` crosses `AB`
/// and the result is causal (`>= max(ta, tb)`).
pub fn two_point_update(ta: f64, tb: f64, ab: f64, ac: f64, bc: f64) -> Option<f64> {
    let cx = (ab * ab + ac * ac - bc * bc) / (2.0 * ab);
    let cy2 = ac * ac - cx * cx;
    if !(cy2 > 0.0) {
        return None;
    }
    let cy = cy2.sqrt();
    let sx = (ta * ta - tb * tb + ab * ab) / (2.0 * ab);
    let sy2 = ta * ta - sx * sx;
    if sy2 < 0.0 {
        return None;
    }
    let sy = -sy2.sqrt();
    let t = ((cx - sx).powi(2) + (cy - sy).powi(2)).sqrt();
    let cross = sx + (cx - sx) * (-sy) / (cy - sy);
    let slack = 1e-12 * ab;
    if cross < -slack || cross > ab + slack || t < ta.max(tb) {
        return None;
    }
    Some(t)
}

/// Fast marching solver bound to a mesh and an edge-length assignment.
/// Build once and reuse for many sweeps.
pub struct FastMarching<'a> {
    mesh: &'a Mesh,
    lengths: &'a EdgeLengths,
    face_lengths: Vec<[f64; 3]>,
    face_valid: Vec<bool>,
}

fn local_edge(i: usize, j: usize) -> usize {
    if (i + 1) % 3 == j {
        i
    } else {
        j
    }
}

impl<'a> FastMarching<'a> {
    pub fn new(mesh: &'a Mesh, lengths: &'a EdgeLengths) -> Result<Self, GeometryError> {
        check_lengths(mesh, lengths)?;
        let face_lengths: Vec<[f64; 3]> = (0..mesh.face_count())
            .map(|f| mesh.face_edges(f).map(|e| lengths.get(e)))
            .collect();
        let face_valid = face_lengths
            .iter()
            .map(|&[a, b, c]| a < b + c && b < a + c && c < a + b)
            .collect();
        Ok(Self {
            mesh,
            lengths,
            face_lengths,
            face_valid,
        })
    }

    pub fn solve(&self, sources: &[usize]) -> Result<DistanceMap, GeometryError> {
        check_sources(self.mesh, sources)?;
        let n = self.mesh.vertex_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut alive = vec![false; n];
        let mut heap = BinaryHeap::new();
        let mut stats = SweepStats {
            edge_only_triangles: self.face_valid.iter().filter(|v| !**v).count(),
            ..Default::default()
        };
        for &s in sources {
            dist[s] = 0.0;
            heap.push(Candidate { dist: 0.0, vertex: s });
        }
        let faces = self.mesh.faces();
        while let Some(Candidate { dist: d, vertex: v }) = heap.pop() {
            if alive[v] || d > dist[v] {
                continue;
            }
            alive[v] = true;
            for &f in self.mesh.vertex_faces(v) {
                let face = faces[f];
                let lens = &self.face_lengths[f];
                let iv = face.iter().position(|&x| x == v).expect("vertex in face");
                for step in 1..3 {
                    let iw = (iv + step) % 3;
                    let w = face[iw];
                    if alive[w] {
                        continue;
                    }
                    let iu = 3 - iv - iw;
                    let u = face[iu];
                    let vw = lens[local_edge(iv, iw)];
                    let mut cand = d + vw;
                    if alive[u] && self.face_valid[f] {
                        let vu = lens[local_edge(iv, iu)];
                        let uw = lens[local_edge(iu, iw)];
                        match two_point_update(d, dist[u], vu, vw, uw) {
                            Some(t) => {
                                stats.two_point_updates += 1;
                                cand = cand.min(t);
                            }
                            None => stats.rejected_two_point += 1,
                        }
                    }
                    if cand < dist[w] {
                        dist[w] = cand;
                        heap.push(Candidate { dist: cand, vertex: w });
                    }
                }
            }
        }
        Ok(DistanceMap {
            distances: dist,
            sources: sources.to_vec(),
            metric: self.lengths.metric(),
            stats,
        })
    }
}

pub fn fmm_distance(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    sources: &[usize],
) -> Result<DistanceMap, GeometryError> {
    FastMarching::new(mesh, lengths)?.solve(sources)
}

/// Shortest paths restricted to mesh edges.
pub fn dijkstra_distance(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    sources: &[usize],
) -> Result<DistanceMap, GeometryError> {
    check_lengths(mesh, lengths)?;
    check_sources(mesh, sources)?;
    let mut dist = vec![f64::INFINITY; mesh.vertex_count()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Candidate { dist: 0.0, vertex: s });
    }
    while let Some(Candidate { dist: d, vertex: v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &e in mesh.vertex_edges(v) {
            let [a, b] = mesh.edges()[e].vertices;
            let w = if a == v { b } else { a };
            let cand = d + lengths.get(e);
            if cand < dist[w] {
                dist[w] = cand;
                heap.push(Candidate { dist: cand, vertex: w });
            }
        }
    }
    Ok(DistanceMap {
        distances: dist,
        sources: sources.to_vec(),
        metric: lengths.metric(),
        stats: SweepStats::default(),
    })
}

/// One full distance map per sample, swept in parallel.
pub fn sample_distance_maps(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    samples: &[usize],
) -> Result<Vec<DistanceMap>, GeometryError> {
    let solver = FastMarching::new(mesh, lengths)?;
    samples.par_iter().map(|&s| solver.solve(&[s])).collect()
}

/// Pairwise distances between sample vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    samples: Vec<usize>,
    values: Vec<f64>,
    metric: MetricKind,
    /// `max |D - Dᵀ| / max D` before symmetrisation.
    max_asymmetry: f64,
}

impl DistanceMatrix {
    /// Builds a matrix from row-major values, symmetrising as `(D + Dᵀ)/2`.
    pub fn from_rows(samples: Vec<usize>, values: Vec<f64>, metric: MetricKind) -> Self {
        let k = samples.len();
        assert_eq!(values.len(), k * k, "expected a {k}x{k} matrix");
        let max = values.iter().copied().fold(0.0, f64::max);
        let mut asym: f64 = 0.0;
        let mut sym = values.clone();
        for i in 0..k {
            sym[i * k + i] = 0.0;
            for j in i + 1..k {
                let (a, b) = (values[i * k + j], values[j * k + i]);
                asym = asym.max((a - b).abs());
                let m = 0.5 * (a + b);
                sym[i * k + j] = m;
                sym[j * k + i] = m;
            }
        }
        Self {
            samples,
            values: sym,
            metric,
            max_asymmetry: if max > 0.0 { asym / max } else { 0.0 },
        }
    }

    /// Reads each map at the sample vertices.
    pub fn from_maps(maps: &[DistanceMap], samples: &[usize]) -> Self {
        assert_eq!(maps.len(), samples.len(), "one map per sample");
        let metric = maps.first().map(|m| m.metric).unwrap_or(MetricKind::Euclidean);
        let values = maps
            .iter()
            .flat_map(|m| samples.iter().map(move |&s| m.get(s)))
            .collect();
        Self::from_rows(samples.to_vec(), values, metric)
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.max_asymmetry
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.k();
        &self.values[i * k..(i + 1) * k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Every entry divided by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v / s).collect(),
            ..self.clone()
        }
    }

    /// Divided by its largest entry (unchanged if all zero).
    pub fn normalized(&self) -> Self {
        let m = self.max();
        if m > 0.0 {
            self.scaled(m)
        } else {
            self.clone()
        }
    }

    /// Sub-matrix on the given sample positions.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let values = idx
            .iter()
            .flat_map(|&i| idx.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        Self {
            samples: idx.iter().map(|&i| self.samples[i]).collect(),
            values,
            metric: self.metric,
            max_asymmetry: self.max_asymmetry,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample");
        for v in &self.samples {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
        for i in 0..self.k() {
            write!(s, "{}", self.samples[i]).unwrap();
            for d in self.row(i) {
                write!(s, ",{d}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Pairwise geodesic distances between `samples` (one sweep per sample).
pub fn distance_matrix(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    samples: &[usize],
) -> Result<DistanceMatrix, GeometryError> {
    check_distinct(samples)?;
    let maps = sample_distance_maps(mesh, lengths, samples)?;
    Ok(DistanceMatrix::from_maps(&maps, samples))
}

pub(crate) fn check_distinct(samples: &[usize]) -> Result<(), GeometryError> {
    let mut seen = std::collections::HashSet::with_capacity(samples.len());
    for &s in samples {
        if !seen.insert(s) {
            return Err(GeometryError::DuplicateSample(s));
        }
    }
    Ok(())
}

/// Histogram on `[0, 1]` of the upper-triangle distances divided by the
/// matrix maximum; masses sum to one.
pub fn distance_histogram(dm: &DistanceMatrix, bins: usize) -> Result<Vec<f64>, GeometryError> {
    if bins < 2 {
        return Err(GeometryError::TooFewBins(bins));
    }
    let max = dm.max();
    if !(max > 0.0) {
        return Err(GeometryError::DegenerateMatrix);
    }
    let k = dm.k();
    let mut hist = vec![0.0; bins];
    let mut total = 0usize;
    for i in 0..k {
        for j in i + 1..k {
            let x = dm.get(i, j) / max;
            let b = ((x * bins as f64) as usize).min(bins - 1);
            hist[b] += 1.0;
            total += 1;
        }
    }
    for h in &mut hist {
        *h /= total as f64;
    }
    Ok(hist)
}

/// L1 distance between two histograms of equal length.
pub fn histogram_l1(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "histograms must share bins");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `vertex,distance` rows.
pub fn distance_map_csv(map: &DistanceMap) -> String {
    let mut s = String::from("vertex,distance\n");
    for (v, d) in map.distances.iter().enumerate() {
        writeln!(s, "{v},{d}").unwrap();
    }
    s
}

/// Blue-to-red colour ramp over `[0, max]`; non-finite values are grey.
pub fn colormap(values: &[f64]) -> Vec<[u8; 3]> {
    const STOPS: [[f64; 3]; 5] = [
        [0.0, 0.0, 255.0],
        [0.0, 255.0, 255.0],
        [0.0, 255.0, 0.0],
        [255.0, 255.0, 0.0],
        [255.0, 0.0, 0.0],
    ];
    let max = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    values
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                return [128, 128, 128];
            }
            let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
            let x = t * (STOPS.len() - 1) as f64;
            let i = (x as usize).min(STOPS.len() - 2);
            let f = x - i as f64;
            std::array::from_fn(|c| (STOPS[i][c] * (1.0 - f) + STOPS[i + 1][c] * f).round() as u8)
        })
        .collect()
}
