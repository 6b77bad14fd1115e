//! Metric-distortion correspondences between sampled shapes and intrinsic
//! symmetry detection.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{GeometryError, MatchError};
use crate::geodesics::{check_distinct, sample_distance_maps, DistanceMap, DistanceMatrix, FastMarching};
use crate::mesh::Mesh;
use crate::metric::EdgeLengths;
use crate::tessellation::{extend_farthest_point_sample, farthest_point_sample};

/// Largest sample count [`gh_match`] accepts.
pub const MAX_SAMPLES: usize = 100;
pub const DEFAULT_RESTARTS: usize = 32;
pub const DEFAULT_MIN_DISPLACEMENT: f64 = 0.2;

const REFINE_PASSES: usize = 20;
/// Distinct sample-level self-maps lifted to vertex maps per search.
const LIFTED_CANDIDATES: usize = 8;
const TRILATERATION_BRANCH: usize = 6;
const LIFT_PASSES: usize = 2;
/// Best lifted candidates carried on to a converged vertex-level descent.
const POLISHED_CANDIDATES: usize = 2;
const POLISH_PASSES: usize = 30;
/// Size of the image set relative to the sample set in symmetry detection.
const TARGET_DENSITY: usize = 3;

/// Pairs `(i, j)` of sample positions in X and Y.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
    /// `max |d_X − d_Y|` over pairs of pairs, divided by the larger matrix maximum.
    pub distortion: f64,
    /// Every sample of X appears in some pair.
    pub covers_x: bool,
    /// Every sample of Y appears in some pair.
    pub covers_y: bool,
    /// Half the distortion: an upper bound on the Gromov-Hausdorff distance
    /// between the sampled spaces.
    pub gh_estimate: f64,
}

impl Correspondence {
    /// Builds a correspondence and measures it against the two matrices.
    pub fn new(
        pairs: Vec<(usize, usize)>,
        dx: &DistanceMatrix,
        dy: &DistanceMatrix,
    ) -> Result<Self, MatchError> {
        let distortion = distortion_of_pairs(&pairs, dx, dy)?;
        let mut seen_x = vec![false; dx.k()];
        let mut seen_y = vec![false; dy.k()];
        for &(i, j) in &pairs {
            seen_x[i] = true;
            seen_y[j] = true;
        }
        Ok(Self {
            pairs,
            distortion,
            covers_x: seen_x.iter().all(|&s| s),
            covers_y: seen_y.iter().all(|&s| s),
            gh_estimate: distortion / 2.0,
        })
    }

    pub fn identity(k: usize, dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<Self, MatchError> {
        Self::new((0..k).map(|i| (i, i)).collect(), dx, dy)
    }

    pub fn inverse(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(|&(i, j)| (j, i)).collect(),
            covers_x: self.covers_y,
            covers_y: self.covers_x,
            ..self.clone()
        }
    }

    /// `x_sample,y_sample,x_vertex,y_vertex` rows.
    pub fn to_csv(&self, dx: &DistanceMatrix, dy: &DistanceMatrix) -> String {
        let mut s = String::from("x_sample,y_sample,x_vertex,y_vertex\n");
        for &(i, j) in &self.pairs {
            writeln!(s, "{i},{j},{},{}", dx.samples()[i], dy.samples()[j]).unwrap();
        }
        s
    }

    /// For each Y sample, the X sample it is paired with (first pair wins).
    pub fn partner_of_y(&self, ky: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; ky];
        for &(i, j) in &self.pairs {
            if out[j].is_none() {
                out[j] = Some(i);
            }
        }
        out
    }
}

/// Recomputes the normalized distortion of `c` from the matrices.
pub fn distortion(
    c: &Correspondence,
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
) -> Result<f64, MatchError> {
    distortion_of_pairs(&c.pairs, dx, dy)
}

fn distortion_of_pairs(
    pairs: &[(usize, usize)],
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
) -> Result<f64, MatchError> {
    if pairs.is_empty() {
        return Err(MatchError::EmptyCorrespondence);
    }
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= dx.k() || j >= dy.k()) {
        return Err(MatchError::InvalidPair(i, j));
    }
    let norm = dx.max().max(dy.max());
    let mut worst: f64 = 0.0;
    for (a, &(i, j)) in pairs.iter().enumerate() {
        for &(i2, j2) in &pairs[a + 1..] {
            worst = worst.max((dx.get(i, i2) - dy.get(j, j2)).abs());
        }
    }
    Ok(if norm > 0.0 { worst / norm } else { 0.0 })
}

/// Matrices divided by a common scale, with row signatures.
struct Problem<'a> {
    dx: &'a DistanceMatrix,
    dy: &'a DistanceMatrix,
    inv_norm: f64,
    /// Row-major `kx × ky` Wasserstein-1 distances between sorted rows.
    signature: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(dx: &'a DistanceMatrix, dy: &'a DistanceMatrix) -> Result<Self, MatchError> {
        if dx.k() == 0 || dy.k() == 0 {
            return Err(MatchError::EmptyCorrespondence);
        }
        let norm = dx.max().max(dy.max());
        let inv_norm = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        let n = dx.k().max(dy.k());
        let quantiles = |dm: &DistanceMatrix| -> Vec<Vec<f64>> {
            (0..dm.k())
                .map(|i| {
                    let mut row: Vec<f64> = dm.row(i).iter().map(|v| v * inv_norm).collect();
                    row.sort_by(f64::total_cmp);
                    (0..n).map(|q| row[q * row.len() / n]).collect()
                })
                .collect()
        };
        let qx = quantiles(dx);
        let qy = quantiles(dy);
        let signature = qx
            .iter()
            .flat_map(|a| {
                qy.iter().map(move |b| {
                    a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum::<f64>() / n as f64
                })
            })
            .collect();
        Ok(Self { dx, dy, inv_norm, signature })
    }

    fn kx(&self) -> usize {
        self.dx.k()
    }

    fn ky(&self) -> usize {
        self.dy.k()
    }

    fn sig(&self, x: usize, y: usize) -> f64 {
        self.signature[x * self.ky() + y]
    }

    fn gap(&self, x: usize, x2: usize, y: usize, y2: usize) -> f64 {
        (self.dx.get(x, x2) - self.dy.get(y, y2)).abs() * self.inv_norm
    }

    /// Candidate seed pairs ordered by signature, then index.
    fn ranked_pairs(&self, admissible: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = (0..self.kx())
            .flat_map(|x| (0..self.ky()).map(move |y| (x, y)))
            .filter(|&(x, y)| admissible(x, y))
            .collect();
        pairs.sort_by(|a, b| self.sig(a.0, a.1).total_cmp(&self.sig(b.0, b.1)).then(a.cmp(b)));
        pairs
    }

    /// Greedy extension from one seed pair. Returns `assignment[x] = y`.
    fn greedy(&self, seed: (usize, usize)) -> Vec<usize> {
        let (kx, ky) = (self.kx(), self.ky());
        let mut cost = self.signature.clone();
        let mut assignment = vec![usize::MAX; kx];
        let mut used_y = vec![0usize; ky];
        let absorb = |x: usize, y: usize, cost: &mut Vec<f64>| {
            for x2 in 0..kx {
                for y2 in 0..ky {
                    let c = &mut cost[x2 * ky + y2];
                    *c = c.max(self.gap(x2, x, y2, y));
                }
            }
        };
        let (mut x, mut y) = seed;
        for step in 0..kx {
            if step > 0 {
                // Y samples are reused only once every one of them is taken.
                let min_use = *used_y.iter().min().expect("ky > 0");
                let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
                for x2 in (0..kx).filter(|&x2| assignment[x2] == usize::MAX) {
                    for y2 in (0..ky).filter(|&y2| used_y[y2] == min_use) {
                        let c = cost[x2 * ky + y2];
                        if c < best.0 || best.1 == usize::MAX {
                            best = (c, x2, y2);
                        }
                    }
                }
                (x, y) = (best.1, best.2);
            }
            assignment[x] = y;
            used_y[y] += 1;
            absorb(x, y, &mut cost);
        }
        assignment
    }

    fn sq(&self, x: usize, x2: usize, y: usize, y2: usize) -> f64 {
        self.gap(x, x2, y, y2).powi(2)
    }

    /// Descent on the summed squared discrepancy: one image at a time moves
    /// to the best Y sample.
    fn refine_free(&self, assignment: &mut [usize]) {
        let (kx, ky) = (self.kx(), self.ky());
        for _ in 0..REFINE_PASSES {
            let mut improved = false;
            for a in 0..kx {
                let ra = self.dx.row(a);
                let cost = |y: usize| -> f64 {
                    let ry = self.dy.row(y);
                    (0..kx).filter(|&x| x != a).map(|x| (ra[x] - ry[assignment[x]]).powi(2)).sum()
                };
                let current = cost(assignment[a]);
                let (best_cost, best) = (0..ky)
                    .map(|y| (cost(y), y))
                    .fold((current, assignment[a]), |b, c| if c.0 < b.0 - 1e-15 { c } else { b });
                if best != assignment[a] && best_cost < current {
                    assignment[a] = best;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
    }

    /// Pairwise-swap and reassignment descent on the summed squared
    /// discrepancy, keeping the map injective.
    fn refine(&self, assignment: &mut [usize]) {
        let (kx, ky) = (self.kx(), self.ky());
        let mut used = vec![false; ky];
        for &y in assignment.iter() {
            used[y] = true;
        }
        for _ in 0..REFINE_PASSES {
            let mut improved = false;
            for a in 0..kx {
                for b in a + 1..kx {
                    let (ya, yb) = (assignment[a], assignment[b]);
                    let mut delta = 0.0;
                    for x in (0..kx).filter(|&x| x != a && x != b) {
                        let y = assignment[x];
                        delta += self.sq(a, x, yb, y) + self.sq(b, x, ya, y)
                            - self.sq(a, x, ya, y)
                            - self.sq(b, x, yb, y);
                    }
                    if delta < -1e-15 {
                        assignment.swap(a, b);
                        improved = true;
                    }
                }
                if kx < ky {
                    let ya = assignment[a];
                    let mut best = (0.0, usize::MAX);
                    for y in (0..ky).filter(|&y| !used[y]) {
                        let mut delta = 0.0;
                        for x in (0..kx).filter(|&x| x != a) {
                            let yx = assignment[x];
                            delta += self.sq(a, x, y, yx) - self.sq(a, x, ya, yx);
                        }
                        if delta < best.0 - 1e-15 {
                            best = (delta, y);
                        }
                    }
                    if best.1 != usize::MAX {
                        used[ya] = false;
                        used[best.1] = true;
                        assignment[a] = best.1;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }

    fn correspondence(&self, assignment: &[usize]) -> Correspondence {
        let pairs = assignment.iter().enumerate().map(|(x, &y)| (x, y)).collect();
        Correspondence::new(pairs, self.dx, self.dy).expect("assignment is valid")
    }

    /// Greedy, then refined; the refinement is kept only if it does not
    /// raise the distortion and still satisfies `accept`.
    fn run(
        &self,
        seed: (usize, usize),
        accept: &(dyn Fn(&Correspondence) -> bool + Sync),
    ) -> Option<Correspondence> {
        let mut assignment = self.greedy(seed);
        let greedy = self.correspondence(&assignment);
        self.refine(&mut assignment);
        let refined = self.correspondence(&assignment);
        [refined, greedy]
            .into_iter()
            .filter(|c| accept(c))
            .min_by(|a, b| a.distortion.total_cmp(&b.distortion))
    }

    /// Mean of the squared normalized gaps over all pairs of pairs.
    fn mean_square_gap(&self, assignment: &[usize]) -> f64 {
        let k = assignment.len();
        let mut sum = 0.0;
        for a in 0..k {
            for b in a + 1..k {
                sum += self.sq(a, b, assignment[a], assignment[b]);
            }
        }
        sum / (k * k.saturating_sub(1) / 2).max(1) as f64
    }

    /// X samples in farthest-point order from sample 0.
    fn spread_order(&self) -> Vec<usize> {
        let k = self.kx();
        let mut order = vec![0];
        let mut nearest: Vec<f64> = (0..k).map(|x| self.dx.get(0, x)).collect();
        let mut taken = vec![false; k];
        taken[0] = true;
        while order.len() < k {
            let next = (0..k)
                .filter(|&x| !taken[x])
                .fold(usize::MAX, |best, x| {
                    if best == usize::MAX || nearest[x] > nearest[best] {
                        x
                    } else {
                        best
                    }
                });
            taken[next] = true;
            order.push(next);
            for x in 0..k {
                nearest[x] = nearest[x].min(self.dx.get(next, x));
            }
        }
        order
    }

    /// Maps grown by trilateration: the first sample in spread order goes to
    /// each of `first_images`, the next two branch over their `branch`
    /// best-scoring images, and every later sample takes the image minimising
    /// its squared gaps to all anchors placed so far plus its squared
    /// signature distance. Images may repeat.
    fn trilaterate(&self, first_images: &[usize], branch: usize) -> Vec<Vec<usize>> {
        let k = self.kx();
        let order = self.spread_order();
        let scale = self.inv_norm * self.inv_norm;
        let scored = |x: usize, assignment: &[usize], placed: &[usize]| -> Vec<(f64, usize)> {
            let rx = self.dx.row(x);
            let anchors: Vec<(f64, usize)> = placed.iter().map(|&a| (rx[a], assignment[a])).collect();
            (0..self.ky())
                .map(|y| {
                    let ry = self.dy.row(y);
                    let r: f64 = anchors.iter().map(|&(d, ya)| (d - ry[ya]).powi(2)).sum();
                    (r * scale + self.sig(x, y).powi(2), y)
                })
                .collect()
        };
        let mut out = Vec::new();
        let mut stack: Vec<(Vec<usize>, usize)> = Vec::new();
        for &y0 in first_images.iter().rev() {
            let mut assignment = vec![usize::MAX; k];
            assignment[order[0]] = y0;
            stack.push((assignment, 1));
        }
        while let Some((mut assignment, depth)) = stack.pop() {
            if depth >= k {
                out.push(assignment);
                continue;
            }
            let x = order[depth];
            let mut options = scored(x, &assignment, &order[..depth]);
            if depth < 3 {
                options.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for &(_, y) in options.iter().take(branch).rev() {
                    let mut a = assignment.clone();
                    a[x] = y;
                    stack.push((a, depth + 1));
                }
            } else {
                // First minimum, so ties go to the smaller index.
                let best = options.iter().fold(options[0], |b, &c| if c.0 < b.0 { c } else { b });
                assignment[x] = best.1;
                stack.push((assignment, depth + 1));
            }
        }
        out
    }

    /// Accepted results of every restart, in restart order. Restart 0 starts
    /// from the best-ranked seed; the others draw a seed from the top of the
    /// ranking. Restarts run in parallel.
    fn search_all(
        &self,
        candidates: &[(usize, usize)],
        restarts: usize,
        seed: u64,
        accept: &(dyn Fn(&Correspondence) -> bool + Sync),
    ) -> Vec<Correspondence> {
        if candidates.is_empty() {
            return Vec::new();
        }
        let pool = candidates.len().min(2 * self.kx().max(self.ky()));
        let results: Vec<Option<Correspondence>> = (0..restarts.max(1))
            .into_par_iter()
            .map(|r| {
                let start = if r == 0 {
                    candidates[0]
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
                    candidates[rng.random_range(0..pool)]
                };
                self.run(start, accept)
            })
            .collect();
        results.into_iter().flatten().collect()
    }

    /// Lowest distortion over all restarts, the earliest restart on ties.
    fn search(
        &self,
        candidates: &[(usize, usize)],
        restarts: usize,
        seed: u64,
        accept: &(dyn Fn(&Correspondence) -> bool + Sync),
    ) -> Option<Correspondence> {
        self.search_all(candidates, restarts, seed, accept)
            .into_iter()
            .reduce(|best, c| if c.distortion < best.distortion { c } else { best })
    }
}

/// Greedy minimum-distortion correspondence covering every sample of X.
///
/// The map is injective while Y has unused samples. `restarts` randomized
/// runs are made and the best kept.
pub fn gh_match(
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    restarts: usize,
    seed: u64,
) -> Result<Correspondence, MatchError> {
    for k in [dx.k(), dy.k()] {
        if k > MAX_SAMPLES {
            return Err(MatchError::TooManySamples { max: MAX_SAMPLES, got: k });
        }
    }
    let problem = Problem::new(dx, dy)?;
    let candidates = problem.ranked_pairs(|_, _| true);
    Ok(problem
        .search(&candidates, restarts, seed, &|_| true)
        .expect("unconstrained search always succeeds"))
}

/// Outcome of a self-matching search.
#[derive(Debug, Clone, PartialEq)]
pub struct Symmetry {
    /// Sample vertices the matrix was built on.
    pub samples: Vec<usize>,
    /// Vertices the samples may be mapped to: `samples` followed by further
    /// farthest-point samples. Correspondence pairs index `samples`, then
    /// `targets`.
    pub targets: Vec<usize>,
    /// Best admissible self-correspondence, if any.
    pub correspondence: Option<Correspondence>,
    /// Mean of `d(x, c(x))` over the map, as a fraction of the diameter.
    pub mean_displacement: f64,
    /// For each sample, the mesh vertex that best reproduces its distances
    /// to the images of the other samples.
    pub images: Vec<usize>,
    /// Distortion of the vertex map `samples -> images`.
    pub vertex_distortion: f64,
    /// An admissible map with distortion below one exists.
    pub found: bool,
    /// Every admissible local minimum that was lifted, best first.
    pub candidates: Vec<SymmetryCandidate>,
}

/// One lifted local minimum of the self-map distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryCandidate {
    pub correspondence: Correspondence,
    pub mean_displacement: f64,
    pub images: Vec<usize>,
    pub vertex_distortion: f64,
}

impl Symmetry {
    /// Distortion of the sample-level map (`+∞` when none was admissible).
    pub fn distortion(&self) -> f64 {
        self.correspondence.as_ref().map_or(f64::INFINITY, |c| c.distortion)
    }
}

/// Intrinsic symmetry on `k` farthest-point samples (the first at vertex 0).
pub fn detect_symmetry(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    k: usize,
    min_displacement: f64,
    restarts: usize,
    seed: u64,
) -> Result<Symmetry, MatchError> {
    if k > MAX_SAMPLES {
        return Err(MatchError::TooManySamples { max: MAX_SAMPLES, got: k });
    }
    let samples = farthest_point_sample(mesh, lengths, k, 0)?;
    detect_symmetry_with_samples(mesh, lengths, &samples, min_displacement, restarts, seed)
}

/// [`detect_symmetry`] on a prescribed sample set.
///
/// Self-maps are searched among seeds that move a sample by more than
/// `min_displacement` of the diameter (never the sample itself), and are only
/// accepted when their mean displacement exceeds the same fraction. Accepted
/// maps are lifted to mesh vertices and ranked by vertex distortion.
pub fn detect_symmetry_with_samples(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    samples: &[usize],
    min_displacement: f64,
    restarts: usize,
    seed: u64,
) -> Result<Symmetry, MatchError> {
    let sm = SelfMatch::new(mesh, lengths, samples)?;
    let problem = Problem::new(&sm.dx, &sm.dy)?;
    let threshold = min_displacement * sm.diameter;
    let candidates = problem.ranked_pairs(|x, y| x != y && sm.moved(x, y) > threshold);
    let accept = |c: &Correspondence| {
        let d = sm.displacement(c);
        d > min_displacement && c.pairs.iter().any(|&(x, y)| x != y)
    };
    // Pool: greedy restarts plus trilateration from the first spread sample.
    let first = problem.spread_order()[0];
    let first_images: Vec<usize> = candidates
        .iter()
        .filter(|&&(x, _)| x == first)
        .map(|&(_, y)| y)
        .collect();
    let mut pool: Vec<(f64, Vec<usize>)> = problem
        .trilaterate(&first_images, TRILATERATION_BRANCH)
        .into_iter()
        .chain(problem.search_all(&candidates, restarts, seed, &accept).into_iter().map(|c| {
            c.pairs.iter().map(|&(_, y)| y).collect()
        }))
        .map(|a| (problem.mean_square_gap(&a), a))
        .collect();
    pool.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    pool.dedup_by(|a, b| a.1 == b.1);
    let mut found_maps: Vec<Correspondence> = Vec::new();
    for (_, mut assignment) in pool {
        if found_maps.len() == LIFTED_CANDIDATES {
            break;
        }
        problem.refine_free(&mut assignment);
        let c = problem.correspondence(&assignment);
        if accept(&c) && !found_maps.iter().any(|f| f.pairs == c.pairs) {
            found_maps.push(c);
        }
    }
    let mut candidates = found_maps
        .into_par_iter()
        .map(|c| sm.lift(c))
        .collect::<Result<Vec<_>, _>>()?;
    candidates.sort_by(|a, b| a.vertex_distortion.total_cmp(&b.vertex_distortion));
    for c in candidates.iter_mut().take(POLISHED_CANDIDATES) {
        let (images, distortion, _) = descend(&sm.solver, &sm.dx, std::mem::take(&mut c.images), POLISH_PASSES)?;
        c.images = images;
        c.vertex_distortion = distortion;
    }
    candidates.sort_by(|a, b| a.vertex_distortion.total_cmp(&b.vertex_distortion));
    let SelfMatch { samples, targets, .. } = sm;
    Ok(match candidates.first().cloned() {
        Some(best) => Symmetry {
            samples,
            targets,
            mean_displacement: best.mean_displacement,
            found: best.correspondence.distortion < 1.0,
            correspondence: Some(best.correspondence),
            images: best.images,
            vertex_distortion: best.vertex_distortion,
            candidates,
        },
        None => Symmetry {
            samples,
            targets,
            correspondence: None,
            mean_displacement: 0.0,
            images: Vec::new(),
            vertex_distortion: f64::INFINITY,
            found: false,
            candidates,
        },
    })
}

/// Vertex self-map reached from `initial` by descent on the distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedMap {
    /// Image vertex of each sample.
    pub images: Vec<usize>,
    /// Distortion of `samples -> images`, over the sample diameter.
    pub distortion: f64,
    /// Passes run before the map stopped changing (or the cap was reached).
    pub passes: usize,
}

/// The local minimum of the self-map distortion reached from `initial`, one
/// image vertex per sample. Each pass moves every image to the vertex whose
/// distances to the current images of the other samples best reproduce the
/// sample distances.
pub fn refine_symmetry(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    samples: &[usize],
    initial: &[usize],
    max_passes: usize,
) -> Result<RefinedMap, MatchError> {
    if initial.len() != samples.len() {
        return Err(MatchError::ImageCount { expected: samples.len(), got: initial.len() });
    }
    if samples.len() < 2 {
        return Err(GeometryError::InvalidSampleCount { k: samples.len(), n: mesh.vertex_count() }.into());
    }
    let n = mesh.vertex_count();
    if let Some(&v) = initial.iter().chain(samples).find(|&&v| v >= n) {
        return Err(GeometryError::VertexOutOfRange { vertex: v, count: n }.into());
    }
    check_distinct(samples)?;
    let solver = FastMarching::new(mesh, lengths)?;
    let dm = DistanceMatrix::from_maps(&sweep_all(&solver, samples)?, samples);
    let (images, distortion, passes) = descend(&solver, &dm, initial.to_vec(), max_passes)?;
    Ok(RefinedMap { images, distortion, passes })
}

/// Samples, the denser target set and their distance maps.
struct SelfMatch<'a> {
    solver: FastMarching<'a>,
    samples: Vec<usize>,
    targets: Vec<usize>,
    maps: Vec<DistanceMap>,
    dx: DistanceMatrix,
    dy: DistanceMatrix,
    diameter: f64,
}

impl<'a> SelfMatch<'a> {
    fn new(mesh: &'a Mesh, lengths: &'a EdgeLengths, samples: &[usize]) -> Result<Self, MatchError> {
        if samples.len() > MAX_SAMPLES {
            return Err(MatchError::TooManySamples { max: MAX_SAMPLES, got: samples.len() });
        }
        if samples.len() < 2 {
            return Err(GeometryError::InvalidSampleCount { k: samples.len(), n: mesh.vertex_count() }.into());
        }
        check_distinct(samples)?;
        let k = samples.len();
        let count = (TARGET_DENSITY * k).min(mesh.vertex_count());
        let targets = extend_farthest_point_sample(mesh, lengths, samples, count)?;
        let solver = FastMarching::new(mesh, lengths)?;
        let maps = sample_distance_maps(mesh, lengths, &targets)?;
        let dx = DistanceMatrix::from_maps(&maps[..k], samples);
        let dy = DistanceMatrix::from_maps(&maps, &targets);
        let diameter = dy.max();
        if !(diameter > 0.0) {
            return Err(GeometryError::DegenerateMatrix.into());
        }
        Ok(Self {
            solver,
            samples: samples.to_vec(),
            targets,
            maps,
            dx,
            dy,
            diameter,
        })
    }

    /// Distance from sample `x` to target `y`.
    fn moved(&self, x: usize, y: usize) -> f64 {
        self.maps[y].get(self.samples[x])
    }

    /// Mean of `d(x, c(x))` as a fraction of the diameter.
    fn displacement(&self, c: &Correspondence) -> f64 {
        c.pairs.iter().map(|&(x, y)| self.moved(x, y)).sum::<f64>() / (c.pairs.len() as f64 * self.diameter)
    }

    fn lift(&self, c: Correspondence) -> Result<SymmetryCandidate, MatchError> {
        let (images, vertex_distortion) = lift_to_vertices(&self.solver, &self.dx, &self.maps, &c)?;
        Ok(SymmetryCandidate {
            mean_displacement: self.displacement(&c),
            correspondence: c,
            images,
            vertex_distortion,
        })
    }
}
/// Lifts a sample-level self-map of `samples` to a vertex map; see
/// [`detect_symmetry_with_samples`]. Returns the image vertices and the
/// distortion of the vertex map.
pub fn lift_self_map(
    mesh: &Mesh,
    lengths: &EdgeLengths,
    samples: &[usize],
    c: &Correspondence,
) -> Result<(Vec<usize>, f64), MatchError> {
    check_distinct(samples)?;
    let solver = FastMarching::new(mesh, lengths)?;
    let maps = sweep_all(&solver, samples)?;
    let dm = DistanceMatrix::from_maps(&maps, samples);
    if c.pairs.len() != samples.len() {
        return Err(MatchError::EmptyCorrespondence);
    }
    Ok(lift_to_vertices(&solver, &dm, &maps, c)?)
}

/// Moves each sample's image from a sample to the mesh vertex `v` minimising
/// `Σ_{j≠i} (d(v, a_j) − d(s_i, s_j))²`, where the anchors `a_j` are first
/// the matched samples and then the images of the previous pass. Returns the
/// images and the distortion of the resulting vertex map.
fn lift_to_vertices(
    solver: &FastMarching,
    dm: &DistanceMatrix,
    maps: &[DistanceMap],
    c: &Correspondence,
) -> Result<(Vec<usize>, f64), GeometryError> {
    let k = dm.k();
    let mut image_of = vec![0; k];
    for &(x, y) in &c.pairs {
        image_of[x] = y;
    }
    let anchors: Vec<&[f64]> = image_of.iter().map(|&y| maps[y].distances.as_slice()).collect();
    let images = best_vertices(dm, &anchors);
    let (images, worst, _) = descend(solver, dm, images, LIFT_PASSES - 1)?;
    Ok((images, worst))
}

/// Repeats the anchor argmin from `images` while it lowers the summed
/// squared residual, for at most `max_passes` passes. Returns the images,
/// their distortion and the number of accepted passes.
fn descend(
    solver: &FastMarching,
    dm: &DistanceMatrix,
    mut images: Vec<usize>,
    max_passes: usize,
) -> Result<(Vec<usize>, f64, usize), GeometryError> {
    let k = dm.k();
    let residual = |images: &[usize], maps: &[DistanceMap]| -> (f64, f64) {
        let (mut sum, mut worst) = (0.0, 0.0f64);
        for i in 0..k {
            for j in i + 1..k {
                let r = (maps[i].get(images[j]) - dm.get(i, j)).abs();
                sum += r * r;
                worst = worst.max(r);
            }
        }
        (sum, worst)
    };
    let mut image_maps = sweep_all(solver, &images)?;
    let mut current = residual(&images, &image_maps);
    let mut passes = 0;
    while passes < max_passes {
        let anchors: Vec<&[f64]> = image_maps.iter().map(|m| m.distances.as_slice()).collect();
        let next = best_vertices(dm, &anchors);
        if next == images {
            break;
        }
        let next_maps = sweep_all(solver, &next)?;
        let score = residual(&next, &next_maps);
        if !(score.0 < current.0) {
            break;
        }
        (images, image_maps, current) = (next, next_maps, score);
        passes += 1;
    }
    Ok((images, current.1 / dm.max(), passes))
}

fn sweep_all(solver: &FastMarching, sources: &[usize]) -> Result<Vec<DistanceMap>, GeometryError> {
    sources.iter().map(|&s| solver.solve(&[s])).collect()
}

fn best_vertices(dm: &DistanceMatrix, anchors: &[&[f64]]) -> Vec<usize> {
    let k = dm.k();
    let n = anchors[0].len();
    (0..k)
        .map(|i| {
            let mut best = (f64::INFINITY, 0usize);
            for v in 0..n {
                let mut r = 0.0;
                for j in (0..k).filter(|&j| j != i) {
                    r += (anchors[j][v] - dm.get(i, j)).powi(2);
                }
                if r < best.0 {
                    best = (r, v);
                }
            }
            best.1
        })
        .collect()
}
