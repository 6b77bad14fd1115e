//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::Instant;

use equiaffine::canonical::{classical_mds, smacof, CanonicalForm};
use equiaffine::geodesics::{dijkstra_distance, distance_matrix, sample_distance_maps, DistanceMatrix, FastMarching};
use equiaffine::invariance::{invariance_report, InvarianceConfig, InvarianceReport};
use equiaffine::matching::refine_symmetry;
use equiaffine::mesh::{apply_transform, random_equiaffine, Mesh};
use equiaffine::metric::{absolute_eigen_floor, assemble_edge_lengths, equiaffine_triangle, triangle_metrics, MetricKind};
use equiaffine::shapes::{
    icosphere, mirror_symmetric_shape, mirror_symmetric_shape_unaligned, nearest_mirror_map, random_bumped_shape,
};
use equiaffine::tessellation::farthest_point_sample;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

const INVARIANCE_SEEDS: [u64; 3] = [1, 2, 3];
const STRENGTH: f64 = 2.0;

fn fmm_accuracy() -> Outcome {
    let mesh = icosphere(4, 1.0);
    let lengths = assemble_edge_lengths(&mesh, MetricKind::Euclidean);
    let solver = FastMarching::new(&mesh, &lengths).unwrap();
    let (mut sum, mut count, mut worst, mut slowest) = (0.0, 0usize, 0.0f64, 0.0f64);
    for source in [0, 777, 2000] {
        let t = Instant::now();
        let map = solver.solve(&[source]).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let p = mesh.vertices()[source];
        for (v, q) in mesh.vertices().iter().enumerate() {
            if v == source {
                continue;
            }
            let exact = p.dot(q).clamp(-1.0, 1.0).acos();
            let rel = (map.get(v) - exact).abs() / exact;
            sum += rel;
            count += 1;
            worst = worst.max(rel);
        }
    }
    let mean = sum / count as f64;
    outcome(
        mean <= 0.02 && worst <= 0.06 && slowest < 1.0,
        format!("mean rel err {mean:.4}, max {worst:.4}, slowest sweep {slowest:.3}s"),
    )
}

fn edge_invariance() -> Outcome {
    let mesh = icosphere(4, 1.0);
    let ea = assemble_edge_lengths(&mesh, MetricKind::EquiAffine);
    let eu = assemble_edge_lengths(&mesh, MetricKind::Euclidean);
    let (mut worst_median, mut worst_max, mut weakest_euclid) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut conds = Vec::new();
    for seed in 1..=10u64 {
        let t = random_equiaffine(seed, STRENGTH);
        let cond = t.condition_number();
        conds.push(cond);
        let moved = apply_transform(&mesh, &t);
        let ea2 = assemble_edge_lengths(&moved, MetricKind::EquiAffine);
        let eu2 = assemble_edge_lengths(&moved, MetricKind::Euclidean);
        let change = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| (y - x).abs() / x).collect()
        };
        let mut c = change(ea.values(), ea2.values());
        worst_max = worst_max.max(c.iter().copied().fold(0.0, f64::max));
        worst_median = worst_median.max(median(&mut c));
        if cond >= 3.0 {
            weakest_euclid = weakest_euclid.min(median(&mut change(eu.values(), eu2.values())));
        }
    }
    let cond_ok = conds.iter().all(|&c| c <= 5.0) && conds.iter().any(|&c| c >= 3.0);
    outcome(
        cond_ok && worst_median <= 0.02 && worst_max <= 0.10 && weakest_euclid >= 0.20,
        format!(
            "equi-affine median {worst_median:.4} max {worst_max:.4}; euclidean median >= {weakest_euclid:.3}; cond in [{:.2}, {:.2}]",
            conds.iter().copied().fold(f64::INFINITY, f64::min),
            conds.iter().copied().fold(0.0, f64::max)
        ),
    )
}

fn reports() -> Vec<InvarianceReport> {
    let mesh = icosphere(4, 1.0);
    let config = InvarianceConfig::default();
    INVARIANCE_SEEDS
        .iter()
        .map(|&seed| {
            let t = random_equiaffine(seed, STRENGTH);
            invariance_report(&mesh, &t, &InvarianceConfig { seed, ..config.clone() }).unwrap()
        })
        .collect()
}

fn contrast(
    reports: &[InvarianceReport],
    score: impl Fn(&equiaffine::invariance::MetricScores) -> f64,
    bound: f64,
    what: &str,
) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in reports {
        let (a, e) = (score(&r.equi_affine), score(&r.euclidean));
        pass &= r.transform.condition_number >= 3.0 && a <= bound && e >= 3.0 * a;
        parts.push(format!("cond {:.2}: {a:.4} vs {e:.4}", r.transform.condition_number));
    }
    outcome(pass, format!("{what} equi-affine vs euclidean; {}", parts.join("; ")))
}

fn voronoi_commutation(reports: &[InvarianceReport]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in reports {
        let (a, e) = (r.equi_affine.voronoi_agreement, r.euclidean.voronoi_agreement);
        pass &= a >= 0.95 && e < a;
        parts.push(format!("{a:.4} vs {e:.4}"));
    }
    outcome(pass, format!("label agreement equi-affine vs euclidean; {}", parts.join("; ")))
}

fn matching(reports: &[InvarianceReport]) -> Outcome {
    let ident = contrast(reports, |s| s.identity_distortion, 0.05, "identity distortion");
    let blind: Vec<f64> = reports.iter().map(|r| r.equi_affine.matched_distortion.unwrap()).collect();
    let blind_ok = blind.iter().all(|&d| d <= 0.05);
    outcome(
        ident.pass && blind_ok,
        format!("{}; blind match {:?}", ident.detail, blind.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>()),
    )
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Mismatch of the distortion minimum reached from the true mirror map, as
/// the mean reference geodesic distance from the true images over the
/// diameter, averaged over three transforms per strength.
fn symmetry_sweep() -> Outcome {
    let mesh = mirror_symmetric_shape_unaligned(4);
    let mirror = nearest_mirror_map(&mesh);
    let reference = assemble_edge_lengths(&mesh, MetricKind::Euclidean);
    let samples = farthest_point_sample(&mesh, &reference, 60, 0).unwrap();
    let truth: Vec<usize> = samples.iter().map(|&s| mirror[s]).collect();
    let truth_maps = sample_distance_maps(&mesh, &reference, &truth).unwrap();
    let diameter = truth_maps.iter().map(|m| m.max_finite()).fold(0.0, f64::max);
    let strengths = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    let seeds = [11u64, 12, 13];
    let mut curves = [Vec::new(), Vec::new()];
    for &s in &strengths {
        for (c, metric) in [MetricKind::EquiAffine, MetricKind::Euclidean].into_iter().enumerate() {
            let mut total = 0.0;
            for &seed in &seeds {
                let moved = apply_transform(&mesh, &random_equiaffine(seed, s));
                let lengths = assemble_edge_lengths(&moved, metric);
                let map = refine_symmetry(&moved, &lengths, &samples, &truth, 50).unwrap();
                total += map.images.iter().zip(&truth_maps).map(|(&img, m)| m.get(img)).sum::<f64>()
                    / (map.images.len() as f64 * diameter);
            }
            curves[c].push(total / seeds.len() as f64);
        }
    }
    let rho = spearman(&strengths, &curves[1]);
    let base = curves[0][0];
    let worst_ratio = curves[0].iter().map(|m| m / base).fold(0.0, f64::max);
    let fmt = |v: &[f64]| v.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(" ");
    outcome(
        rho >= 0.8 && worst_ratio <= 1.5,
        format!(
            "euclidean [{}] rho {rho:.3}; equi-affine [{}] max/strength-0 {worst_ratio:.3}",
            fmt(&curves[1]),
            fmt(&curves[0])
        ),
    )
}

fn solver_properties() -> Outcome {
    let meshes: Vec<Mesh> = vec![
        icosphere(3, 1.0),
        icosphere(4, 2.0),
        mirror_symmetric_shape(3),
        random_bumped_shape(3, 5, 4),
        apply_transform(&icosphere(3, 1.0), &random_equiaffine(3, 2.5)),
    ];
    let mut fmm_violations = 0usize;
    let mut pd_total = 0usize;
    let mut pd_ok = 0usize;
    for mesh in &meshes {
        for t in triangle_metrics(mesh) {
            if let Some(g) = t.tensor {
                pd_total += 1;
                pd_ok += (g.g11 > 0.0 && g.g11 * g.g22 - g.g12 * g.g12 > 0.0) as usize;
            }
        }
        for metric in [MetricKind::EquiAffine, MetricKind::Euclidean] {
            let lengths = assemble_edge_lengths(mesh, metric);
            let solver = FastMarching::new(mesh, &lengths).unwrap();
            let n = mesh.vertex_count();
            for source in [0, n / 3, n - 1] {
                let f = solver.solve(&[source]).unwrap();
                let d = dijkstra_distance(mesh, &lengths, &[source]).unwrap();
                fmm_violations += f
                    .distances
                    .iter()
                    .zip(&d.distances)
                    .filter(|(a, b)| !(**a <= **b + 1e-9))
                    .count();
            }
        }
    }
    let sphere = icosphere(3, 1.0);
    let lengths = assemble_edge_lengths(&sphere, MetricKind::EquiAffine);
    let samples = farthest_point_sample(&sphere, &lengths, 30, 0).unwrap();
    let dm = distance_matrix(&sphere, &lengths, &samples).unwrap().normalized();
    let mut smacof_bad = 0;
    for seed in 0..100u64 {
        let init = random_form(&dm, seed);
        let out = smacof(&dm, &init, 500, 1e-9).unwrap();
        if out.stress_history.windows(2).any(|w| w[1] > w[0]) {
            smacof_bad += 1;
        }
    }
    // A classical-scaling start is also tracked.
    let classical = smacof(&dm, &classical_mds(&dm, 3).unwrap(), 500, 1e-9).unwrap();
    smacof_bad += classical.stress_history.windows(2).any(|w| w[1] > w[0]) as usize;
    outcome(
        fmm_violations == 0 && smacof_bad == 0 && pd_ok == pd_total,
        format!(
            "fmm>dijkstra at {fmm_violations} vertices; non-monotone smacof runs {smacof_bad}/101; PD tensors {pd_ok}/{pd_total}"
        ),
    )
}

fn random_form(dm: &DistanceMatrix, seed: u64) -> CanonicalForm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = DMatrix::from_fn(dm.k(), 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    CanonicalForm {
        stress: equiaffine::canonical::stress(&coords, dm),
        coords,
        metric: dm.metric(),
        samples: dm.samples().to_vec(),
        negative_eigen_mass: 0.0,
        padded_dims: 0,
        stress_history: vec![],
    }
}

/// Each run times a batch of sweeps on both meshes back to back; the ratio is
/// averaged over the runs.
fn complexity() -> Outcome {
    let meshes = [icosphere(4, 1.0), icosphere(5, 1.0)];
    let lengths: Vec<_> = meshes.iter().map(|m| assemble_edge_lengths(m, MetricKind::EquiAffine)).collect();
    let solvers: Vec<_> = meshes.iter().zip(&lengths).map(|(m, l)| FastMarching::new(m, l).unwrap()).collect();
    let batch = 20;
    let time = |i: usize| -> f64 {
        let n = meshes[i].vertex_count();
        let t = Instant::now();
        for r in 0..batch {
            std::hint::black_box(solvers[i].solve(&[(r * 7919) % n]).unwrap());
        }
        t.elapsed().as_secs_f64() / batch as f64
    };
    time(0);
    time(1);
    let runs = 5;
    let (mut t4, mut t5, mut ratio) = (0.0, 0.0, 0.0);
    for _ in 0..runs {
        let (a, b) = (time(0), time(1));
        t4 += a / runs as f64;
        t5 += b / runs as f64;
        ratio += b / a / runs as f64;
    }
    let nlogn = |n: usize| n as f64 * (n as f64).ln();
    let predicted = nlogn(meshes[1].vertex_count()) / nlogn(meshes[0].vertex_count());
    let factor = (ratio / predicted).max(predicted / ratio);
    outcome(
        factor <= 1.5,
        format!("time ratio {ratio:.3} vs N log N {predicted:.3} (factor {factor:.3}); s4 {:.2}ms s5 {:.2}ms", t4 * 1e3, t5 * 1e3),
    )
}

fn relabel_invariance() -> Outcome {
    let mesh = icosphere(3, 1.0);
    let floor = absolute_eigen_floor(mesh.bbox_diagonal());
    let orders = [[1, 2, 0], [2, 0, 1], [1, 0, 2], [0, 2, 1], [2, 1, 0]];
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for f in 0..mesh.face_count() {
        let base = equiaffine_triangle(&mesh, f, [0, 1, 2], floor);
        let by_edge = |t: &equiaffine::metric::TriangleMetric, e: usize| {
            t.lengths[t.edges.iter().position(|&x| x == e).expect("same edges")]
        };
        let mut bad = false;
        for order in orders {
            let other = equiaffine_triangle(&mesh, f, order, floor);
            for &e in &base.edges {
                let (a, b) = (by_edge(&base, e), by_edge(&other, e));
                let rel = (a - b).abs() / a;
                worst = worst.max(rel);
                bad |= rel > 1e-6;
            }
        }
        failures += bad as usize;
    }
    outcome(
        failures == 0,
        format!("{failures}/{} triangles differ; worst relative difference {worst:.2e}", mesh.face_count()),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!(
            "{} {name} ({:.1}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        results.push((name, o));
    };
    run("1 fast-marching accuracy", &fmm_accuracy);
    run("2 edge-length invariance", &edge_invariance);
    let reports = reports();
    run("3 histogram invariance", &|| contrast(&reports, |s| s.histogram_l1, 0.05, "histogram L1"));
    run("4 voronoi commutation", &|| voronoi_commutation(&reports));
    run("5 canonical-form invariance", &|| contrast(&reports, |s| s.canonical_rmsd, 0.03, "procrustes rmsd"));
    run("6 matching", &|| matching(&reports));
    run("7 symmetry sweep", &symmetry_sweep);
    run("8 solver properties", &solver_properties);
    run("9 sweep complexity", &complexity);
    run("10 relabel invariance", &relabel_invariance);
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!(
        "{} of {} criteria passed in {:.1}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
