//! Command-line front end.
//!
//! Every subcommand writes its data files plus `manifest.json` into `--out`.
//! Exit status is 0 on success, 1 when an input or option fails validation
//! and 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{Matrix3, Vector3};
use serde_json::{json, Value};

use crate::canonical::{
    classical_mds, smacof, CanonicalForm, DEFAULT_DIMENSION, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE,
};
use crate::geodesics::{
    colormap, dijkstra_distance, distance_map_csv, distance_matrix, FastMarching,
};
use crate::invariance::{invariance_report, InvarianceConfig, SCHEMA_VERSION};
use crate::io::{load_mesh_auto, off_string, ply_points_string, ply_string};
use crate::matching::{
    detect_symmetry, gh_match, DEFAULT_MIN_DISPLACEMENT, DEFAULT_RESTARTS, MAX_SAMPLES,
};
use crate::mesh::{apply_transform, mesh_stats, random_equiaffine, EquiAffineTransform, Mesh};
use crate::metric::{
    assemble_edge_lengths, edge_lengths_csv, from_triangle_metrics, triangle_metrics,
    triangle_metrics_csv, EdgeLengths, MetricKind,
};
use crate::shapes::{icosphere, mirror_symmetric_shape, random_bumped_shape, MAX_SUBDIVISIONS};
use crate::tessellation::{cell_color, farthest_point_sample, voronoi};

pub const ENV_SMACOF_TOL: &str = "EQUIAFFINE_SMACOF_TOL";
pub const ENV_SMACOF_MAX_ITERS: &str = "EQUIAFFINE_SMACOF_MAX_ITERS";
pub const ENV_MIN_DISPLACEMENT: &str = "EQUIAFFINE_MIN_DISPLACEMENT";

#[derive(Debug, Parser)]
#[command(name = "equiaffine", version, about = "Equi-affine invariant geodesic tools for triangle meshes")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic test mesh.
    Shape(ShapeArgs),
    /// Apply a volume-preserving transform to a mesh.
    Transform(TransformArgs),
    /// Per-edge lengths and per-triangle tensors.
    Metric(MetricArgs),
    /// Geodesic distance from source vertices.
    Distance(DistanceArgs),
    /// Farthest-point seeds and their Voronoi cells.
    Voronoi(VoronoiArgs),
    /// Canonical form of farthest-point samples.
    Canonical(CanonicalArgs),
    /// Minimum-distortion correspondence between two meshes.
    Match(MatchArgs),
    /// Intrinsic symmetry of one mesh.
    Symmetry(SymmetryArgs),
    /// Before/after scores under a random transform, for both metrics.
    Invariance(InvarianceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    EquiAffine,
    Euclidean,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::EquiAffine => MetricKind::EquiAffine,
            MetricArg::Euclidean => MetricKind::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeKind {
    Icosphere,
    Symmetric,
    RandomBumps,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutFormat {
    Off,
    Ply,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Fmm,
    Dijkstra,
}

#[derive(Debug, Args)]
struct Common {
    /// Input mesh (OFF, PLY ascii or OBJ).
    #[arg(long)]
    mesh: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "equi-affine")]
    metric: MetricArg,
}

#[derive(Debug, Args)]
struct ShapeArgs {
    #[arg(long, value_enum, default_value = "icosphere")]
    kind: ShapeKind,
    #[arg(long, default_value_t = 4)]
    subdivisions: u32,
    /// Bump count for `random-bumps`.
    #[arg(long, default_value_t = 4)]
    bumps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "off")]
    format: OutFormat,
}

#[derive(Debug, Args)]
struct TransformArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Log-stretch strength of the random transform.
    #[arg(long, default_value_t = 2.0)]
    strength: f64,
    /// Explicit linear part, nine comma-separated row-major entries.
    #[arg(long, value_delimiter = ',', num_args = 9)]
    matrix: Option<Vec<f64>>,
    /// Explicit translation, three comma-separated entries.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    translate: Option<Vec<f64>>,
    /// Rescale the linear part to this determinant (only 1 is accepted).
    #[arg(long, default_value_t = 1.0)]
    det: f64,
    #[arg(long, value_enum, default_value = "off")]
    format: OutFormat,
}

#[derive(Debug, Args)]
struct MetricArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct DistanceArgs {
    #[command(flatten)]
    common: Common,
    /// Source vertex ids (repeat or comma-separate).
    #[arg(long, value_delimiter = ',', required = true)]
    source: Vec<usize>,
    #[arg(long, value_enum, default_value = "fmm")]
    method: Method,
}

#[derive(Debug, Args)]
struct VoronoiArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// First farthest-point sample.
    #[arg(long, default_value_t = 0)]
    start: usize,
}

#[derive(Debug, Args)]
struct CanonicalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 200)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_DIMENSION)]
    dim: usize,
    /// Classical scaling only.
    #[arg(long)]
    no_smacof: bool,
    #[arg(long, default_value_t = 0)]
    start: usize,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[command(flatten)]
    common: Common,
    /// Second mesh.
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SymmetryArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 60)]
    k: usize,
    /// Fraction of the diameter a symmetric map must move samples by.
    #[arg(long)]
    min_displacement: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct InvarianceArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    strength: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[arg(long, default_value_t = 20)]
    voronoi_k: usize,
    #[arg(long, default_value_t = 200)]
    canonical_k: usize,
    #[arg(long, default_value_t = 50)]
    match_k: usize,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
}

/// A validation failure tied to the option or input that caused it.
#[derive(Debug)]
pub struct CliError {
    pub field: String,
    pub message: String,
}

impl CliError {
    fn new(field: &str, message: impl ToString) -> Self {
        Self {
            field: field.to_string(),
            message: message.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid {}: {}", self.field, self.message)
    }
}

type CliResult<T> = Result<T, CliError>;

/// Runs the tool on `args` (program name first) and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: {}", CliError::new("threads", "must be at least 1"));
            return 1;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}", CliError::new("threads", e));
            return 1;
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Shape(a) => shape(a),
        Command::Transform(a) => transform(a),
        Command::Metric(a) => metric(a),
        Command::Distance(a) => distance(a),
        Command::Voronoi(a) => voronoi_cmd(a),
        Command::Canonical(a) => canonical(a),
        Command::Match(a) => match_cmd(a),
        Command::Symmetry(a) => symmetry(a),
        Command::Invariance(a) => invariance(a),
    }
}

/// Named wall-clock phases, in order.
struct Timer {
    start: Instant,
    phases: Vec<(String, f64)>,
}

impl Timer {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            phases: Vec::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        let ms = now.duration_since(self.start).as_secs_f64() * 1e3;
        self.phases.push((name.to_string(), ms));
        self.start = now;
    }

    fn json(&self) -> Value {
        Value::Object(self.phases.iter().map(|(k, v)| (k.clone(), json!(v))).collect())
    }
}

fn env_override<T: std::str::FromStr>(var: &str, default: T) -> CliResult<T> {
    match std::env::var(var) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::new(var, format!("cannot parse `{s}`"))),
        Err(_) => Ok(default),
    }
}

fn load(path: &Path) -> CliResult<Mesh> {
    load_mesh_auto(path).map_err(|e| CliError::new("mesh", e))
}

fn prepare_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::new("out", format!("{}: {e}", out.display())))
}

fn write(out: &Path, name: &str, contents: &str, written: &mut Vec<String>) -> CliResult<()> {
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| CliError::new("out", format!("{}: {e}", path.display())))?;
    written.push(name.to_string());
    Ok(())
}

fn write_manifest(
    out: &Path,
    command: &str,
    inputs: Value,
    config: Value,
    counts: Value,
    mut written: Vec<String>,
    timer: &Timer,
) -> CliResult<()> {
    written.push("manifest.json".into());
    let manifest = json!({
        "schema": SCHEMA_VERSION,
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "inputs": inputs,
        "config": config,
        "counts": counts,
        "outputs": written,
        "timings_ms": timer.json(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let path = out.join("manifest.json");
    fs::write(&path, text).map_err(|e| CliError::new("out", format!("{}: {e}", path.display())))
}

fn mesh_json(mesh: &Mesh) -> Value {
    serde_json::to_value(mesh_stats(mesh)).expect("stats serialize")
}

fn check_vertex(mesh: &Mesh, field: &str, v: usize) -> CliResult<()> {
    if v >= mesh.vertex_count() {
        return Err(CliError::new(
            field,
            format!("vertex {v} out of range ({} vertices)", mesh.vertex_count()),
        ));
    }
    Ok(())
}

fn check_k(mesh: &Mesh, field: &str, k: usize, max: usize) -> CliResult<()> {
    let max = max.min(mesh.vertex_count());
    if k == 0 || k > max {
        return Err(CliError::new(field, format!("{k} is not in 1..={max}")));
    }
    Ok(())
}

fn mesh_text(mesh: &Mesh, format: OutFormat) -> (&'static str, String) {
    match format {
        OutFormat::Off => ("mesh.off", off_string(mesh)),
        OutFormat::Ply => ("mesh.ply", ply_string(mesh, None)),
    }
}

fn lengths_for(mesh: &Mesh, metric: MetricKind) -> EdgeLengths {
    assemble_edge_lengths(mesh, metric)
}

fn shape(a: ShapeArgs) -> CliResult<()> {
    let mut timer = Timer::new();
    if a.subdivisions > MAX_SUBDIVISIONS {
        return Err(CliError::new("subdivisions", format!("at most {MAX_SUBDIVISIONS}")));
    }
    let mesh = match a.kind {
        ShapeKind::Icosphere => icosphere(a.subdivisions, 1.0),
        ShapeKind::Symmetric => mirror_symmetric_shape(a.subdivisions),
        ShapeKind::RandomBumps => random_bumped_shape(a.subdivisions, a.bumps, a.seed),
    };
    timer.lap("build");
    prepare_out(&a.out)?;
    let mut written = Vec::new();
    let (name, text) = mesh_text(&mesh, a.format);
    write(&a.out, name, &text, &mut written)?;
    timer.lap("write");
    write_manifest(
        &a.out,
        "shape",
        json!({}),
        json!({
            "kind": format!("{:?}", a.kind).to_lowercase(),
            "subdivisions": a.subdivisions,
            "bumps": a.bumps,
            "seed": a.seed,
        }),
        json!({ "mesh": mesh_json(&mesh) }),
        written,
        &timer,
    )
}

fn transform(a: TransformArgs) -> CliResult<()> {
    let mut timer = Timer::new();
    let mesh = load(&a.mesh)?;
    if !(a.strength >= 0.0 && a.strength.is_finite()) {
        return Err(CliError::new("strength", "must be a finite value >= 0"));
    }
    let base = random_equiaffine(a.seed, a.strength);
    let mut linear = match &a.matrix {
        Some(m) => Matrix3::from_row_slice(m),
        None => *base.linear(),
    };
    let translation = match &a.translate {
        Some(t) => Vector3::new(t[0], t[1], t[2]),
        None if a.matrix.is_some() => Vector3::zeros(),
        None => *base.translation(),
    };
    let field = if a.det != 1.0 {
        linear *= (a.det / linear.determinant()).cbrt();
        "det"
    } else if a.matrix.is_some() {
        "matrix"
    } else {
        "strength"
    };
    let t = EquiAffineTransform::new(linear, translation).map_err(|e| CliError::new(field, e))?;
    let moved = apply_transform(&mesh, &t);
    timer.lap("transform");
    prepare_out(&a.out)?;
    let mut written = Vec::new();
    let (name, text) = mesh_text(&moved, a.format);
    write(&a.out, name, &text, &mut written)?;
    timer.lap("write");
    write_manifest(
        &a.out,
        "transform",
        json!({ "mesh": a.mesh }),
        json!({
            "seed": a.seed,
            "strength": a.strength,
            "transform": crate::invariance::TransformSummary::new(&t),
        }),
        json!({ "mesh": mesh_json(&moved) }),
        written,
        &timer,
    )
}

fn metric(a: MetricArgs) -> CliResult<()> {
    let mut timer = Timer::new();
    let c = a.common;
    let mesh = load(&c.mesh)?;
    timer.lap("load");
    let metric: MetricKind = c.metric.into();
    prepare_out(&c.out)?;
    let mut written = Vec::new();
    let lengths = match metric {
        MetricKind::EquiAffine => {
            let tris = triangle_metrics(&mesh);
            write(&c.out, "triangle_metrics.csv", &triangle_metrics_csv(&tris), &mut written)?;
            from_triangle_metrics(&mesh, &tris)
        }
        MetricKind::Euclidean => lengths_for(&mesh, metric),
    };
    timer.lap("metric");
    write(&c.out, "edge_lengths.csv", &edge_lengths_csv(&mesh, &lengths), &mut written)?;
    timer.lap("write");
    write_manifest(
        &c.out,
        "metric",
        json!({ "mesh": c.mesh }),
        json!({ "metric": metric }),
        json!({ "mesh": mesh_json(&mesh), "metric": lengths.report() }),
        written,
        &timer,
    )
}

fn distance(a: DistanceArgs) -> CliResult<()> {
    let mut timer = Timer::new();
    let c = a.common;
    let mesh = load(&c.mesh)?;
    for &s in &a.source {
        check_vertex(&mesh, "source", s)?;
    }
    timer.lap("load");
    let metric: MetricKind = c.metric.into();
    let lengths = lengths_for(&mesh, metric);
    timer.lap("metric");
    let map = match a.method {
        Method::Fmm => FastMarching::new(&mesh, &lengths).and_then(|s| s.solve(&a.source)),
        Method::Dijkstra => dijkstra_distance(&mesh, &lengths, &a.source),
    }
    .map_err(|e| CliError::new("source", e))?;
    timer.lap("sweep");
    prepare_out(&c.out)?;
    let mut written = Vec::new();
    write(&c.out, "distances.csv", &distance_map_csv(&map), &mut written)?;
    let colors = colormap(&map.distances);
    write(&c.out, "distances.ply", &ply_string(&mesh, Some(&colors)), &mut written)?;
    timer.lap("write");
    let unreachable = map.distances.iter().filter(|d| !d.is_finite()).count();
    write_manifest(
        &c.out,
        "distance",
        json!({ "mesh": c.mesh }),
        json!({
            "metric": metric,
            "sources": a.source,
            "method": format!("{:?}", a.method).to_lowercase(),
        }),
        json!({
            "mesh": mesh_json(&mesh),
            "metric": lengths.report(),
            "sweep": map.stats,
            "max_distance": map.max_finite(),
            "unreachable": unreachable,
        }),
        written,
        &timer,
    )
}

fn voronoi_cmd(a: VoronoiArgs) -> CliResult<()> {
    let mut timer = Timer::new();
    let c = a.common;
    let mesh = load(&c.mesh)?;
    check_k(&mesh, "k", a.k, usize::MAX)?;
    check_vertex(&mesh, "start", a.start)?;
    timer.lap("load");
    let metric: MetricKind = c.metric.into();
    let lengths = lengths_for(&mesh, metric);
    timer.lap("metric");
    let seeds = farthest_point_sample(&mesh, &lengths, a.k, a.start).map_err(|e| CliError::new("k", e))?;
    timer.lap("sampling");
    let vd = voronoi(&mesh, &lengths, &seeds).map_err(|e| CliError::new("k", e))?;
    timer.lap("voronoi");
    prepare_out(&c.out)?;
    let mut written = Vec::new();
    write(&c.out, "labels.csv", &vd.to_csv(), &mut written)?;
    write(&c.out, "voronoi.ply", &ply_string(&mesh, Some(&vd.colors())), &mut written)?;
    timer.lap("write");
    write_manifest(
        &c.out,
        "voronoi",
        json!({ "mesh": c.mesh }),
        json!({ "metric": metric, "k": a.k, "start": a.start }),
        json!({
            "mesh": mesh_json(&mesh),
            "metric": lengths.report(),
            "seeds": seeds,
            "cell_sizes": vd.cell_sizes(),
        }),
        written,
        &timer,
    )
}

fn canonical(a: CanonicalArgs) -> CliResult<()> {
    let mut timer = Timer::new();
    let c = a.common;
    let tol = env_override(ENV_SMACOF_TOL, DEFAULT_TOLERANCE)?;
    let max_iters = env_override(ENV_SMACOF_MAX_ITERS, DEFAULT_MAX_ITERS)?;
    if !(tol >= 0.0) {
        return Err(CliError::new(ENV_SMACOF_TOL, "must be >= 0"));
    }
    if a.dim == 0 {
        return Err(CliError::new("dim", "must be at least 1"));
    }
    let mesh = load(&c.mesh)?;
    check_k(&mesh, "k", a.k, usize::MAX)?;
    check_vertex(&mesh, "start", a.start)?;
    timer.lap("load");
    let metric: MetricKind = c.metric.into();
    let lengths = lengths_for(&mesh, metric);
    timer.lap("metric");
    let samples = farthest_point_sample(&mesh, &lengths, a.k, a.start).map_err(|e| CliError::new("k", e))?;
    let dm = distance_matrix(&mesh, &lengths, &samples)
        .map_err(|e| CliError::new("k", e))?
        .normalized();
    timer.lap("distances");
    let init = classical_mds(&dm, a.dim).map_err(|e| CliError::new("dim", e))?;
    let form: CanonicalForm = if a.no_smacof {
        init
    } else {
        smacof(&dm, &init, max_iters, tol).map_err(|e| CliError::new("dim", e))?
    };
    if form.padded_dims > 0 {
        eprintln!(
            "warning: {} of {} dimensions have no positive eigenvalue and are zero",
            form.padded_dims, a.dim
        );
    }
    timer.lap("embedding");
    prepare_out(&c.out)?;
    let mut written = Vec::new();
    write(&c.out, "canonical.csv", &form.to_csv(), &mut written)?;
    write(&c.out, "canonical.ply", &ply_points_string(&form.points3(), None), &mut written)?;
    write(&c.out, "distance_matrix.csv", &dm.to_csv(), &mut written)?;
    timer.lap("write");
    write_manifest(
        &c.out,
        "canonical",
        json!({ "mesh": c.mesh }),
        json!({
            "metric": metric,
            "k": a.k,
            "dim": a.dim,
            "smacof": !a.no_smacof,
            "smacof_tol": tol,
            "smacof_max_iters": max_iters,
            "start": a.start,
        }),
        json!({
            "mesh": mesh_json(&mesh),
            "metric": lengths.report(),
            "stress": form.stress,
            "iterations": form.stress_history.len().saturating_sub(1),
            "negative_eigen_mass": form.negative_eigen_mass,
            "padded_dims": form.padded_dims,
            "max_asymmetry": dm.max_asymmetry(),
        }),
        written,
        &timer,
    )
}

fn match_cmd(a: MatchArgs) -> CliResult<()> {
    let mut timer = Timer::new();
    let c = a.common;
    let x = load(&c.mesh)?;
    let y = load_mesh_auto(&a.target).map_err(|e| CliError::new("target", e))?;
    check_k(&x, "k", a.k, MAX_SAMPLES)?;
    check_k(&y, "k", a.k, MAX_SAMPLES)?;
    if a.restarts == 0 {
        return Err(CliError::new("restarts", "must be at least 1"));
    }
    timer.lap("load");
    let metric: MetricKind = c.metric.into();
    let (lx, ly) = (lengths_for(&x, metric), lengths_for(&y, metric));
    timer.lap("metric");
    let sx = farthest_point_sample(&x, &lx, a.k, 0).map_err(|e| CliError::new("k", e))?;
    let sy = farthest_point_sample(&y, &ly, a.k, 0).map_err(|e| CliError::new("k", e))?;
    let dx = distance_matrix(&x, &lx, &sx).map_err(|e| CliError::new("k", e))?.normalized();
    let dy = distance_matrix(&y, &ly, &sy).map_err(|e| CliError::new("k", e))?.normalized();
    timer.lap("distances");
    let corr = gh_match(&dx, &dy, a.restarts, a.seed).map_err(|e| CliError::new("k", e))?;
    timer.lap("matching");
    // Cells of X samples keep their colour; Y cells take the colour of
    // their partner in X.
    let vx = voronoi(&x, &lx, &sx).map_err(|e| CliError::new("k", e))?;
    let vy = voronoi(&y, &ly, &sy).map_err(|e| CliError::new("k", e))?;
    let partner = corr.partner_of_y(sy.len());
    let colors_y: Vec<[u8; 3]> = vy
        .labels
        .iter()
        .map(|l| match l.and_then(|j| partner[j]) {
            Some(i) => cell_color(i),
            None => [128, 128, 128],
        })
        .collect();
    timer.lap("voronoi");
    prepare_out(&c.out)?;
    let mut written = Vec::new();
    write(&c.out, "correspondence.csv", &corr.to_csv(&dx, &dy), &mut written)?;
    write(&c.out, "match_x.ply", &ply_string(&x, Some(&vx.colors())), &mut written)?;
    write(&c.out, "match_y.ply", &ply_string(&y, Some(&colors_y)), &mut written)?;
    timer.lap("write");
    write_manifest(
        &c.out,
        "match",
        json!({ "mesh": c.mesh, "target": a.target }),
        json!({ "metric": metric, "k": a.k, "restarts": a.restarts, "seed": a.seed }),
        json!({
            "mesh": mesh_json(&x),
            "target": mesh_json(&y),
            "distortion": corr.distortion,
            "gh_estimate": corr.gh_estimate,
            "covers_x": corr.covers_x,
            "covers_y": corr.covers_y,
        }),
        written,
        &timer,
    )
}

fn symmetry(a: SymmetryArgs) -> CliResult<()> {
    let mut timer = Timer::new();
    let c = a.common;
    let min_disp = match a.min_displacement {
        Some(v) => v,
        None => env_override(ENV_MIN_DISPLACEMENT, DEFAULT_MIN_DISPLACEMENT)?,
    };
    if !(0.0..1.0).contains(&min_disp) {
        return Err(CliError::new("min-displacement", "must lie in [0, 1)"));
    }
    if a.restarts == 0 {
        return Err(CliError::new("restarts", "must be at least 1"));
    }
    let mesh = load(&c.mesh)?;
    check_k(&mesh, "k", a.k, MAX_SAMPLES)?;
    if a.k < 2 {
        return Err(CliError::new("k", "need at least 2 samples"));
    }
    timer.lap("load");
    let metric: MetricKind = c.metric.into();
    let lengths = lengths_for(&mesh, metric);
    timer.lap("metric");
    let sym = detect_symmetry(&mesh, &lengths, a.k, min_disp, a.restarts, a.seed)
        .map_err(|e| CliError::new("k", e))?;
    timer.lap("symmetry");
    prepare_out(&c.out)?;
    let mut written = Vec::new();
    let mut csv = String::from("sample,vertex,image_target,image_vertex,refined_vertex\n");
    if let Some(corr) = &sym.correspondence {
        for (&(i, j), img) in corr.pairs.iter().zip(&sym.images) {
            csv.push_str(&format!(
                "{i},{},{j},{},{img}\n",
                sym.samples[i], sym.targets[j]
            ));
        }
        // Each sample's cell coloured like the cell holding its image.
        let vd = voronoi(&mesh, &lengths, &sym.samples).map_err(|e| CliError::new("k", e))?;
        let colors: Vec<[u8; 3]> = vd
            .labels
            .iter()
            .map(|l| l.map_or([128, 128, 128], cell_color))
            .collect();
        let image_of: Vec<Option<usize>> = sym.images.iter().map(|&v| vd.labels[v]).collect();
        let mapped: Vec<[u8; 3]> = vd
            .labels
            .iter()
            .map(|l| l.and_then(|i| image_of[i]).map_or([128, 128, 128], cell_color))
            .collect();
        write(&c.out, "symmetry_cells.ply", &ply_string(&mesh, Some(&colors)), &mut written)?;
        write(&c.out, "symmetry_mapped.ply", &ply_string(&mesh, Some(&mapped)), &mut written)?;
    }
    write(&c.out, "symmetry.csv", &csv, &mut written)?;
    timer.lap("write");
    if !sym.found {
        eprintln!("no symmetry found");
    }
    write_manifest(
        &c.out,
        "symmetry",
        json!({ "mesh": c.mesh }),
        json!({
            "metric": metric,
            "k": a.k,
            "min_displacement": min_disp,
            "restarts": a.restarts,
            "seed": a.seed,
        }),
        json!({
            "mesh": mesh_json(&mesh),
            "metric": lengths.report(),
            "found": sym.found,
            "distortion": sym.correspondence.as_ref().map(|c| c.distortion),
            "mean_displacement": sym.mean_displacement,
        }),
        written,
        &timer,
    )
}

fn invariance(a: InvarianceArgs) -> CliResult<()> {
    let mut timer = Timer::new();
    if !(a.strength >= 0.0 && a.strength.is_finite()) {
        return Err(CliError::new("strength", "must be a finite value >= 0"));
    }
    if a.bins < 2 {
        return Err(CliError::new("bins", "need at least 2 bins"));
    }
    if a.restarts == 0 && a.match_k > 0 {
        return Err(CliError::new("restarts", "must be at least 1"));
    }
    let mesh = load(&a.mesh)?;
    check_k(&mesh, "k", a.k, usize::MAX)?;
    check_k(&mesh, "voronoi-k", a.voronoi_k, usize::MAX)?;
    check_k(&mesh, "canonical-k", a.canonical_k, usize::MAX)?;
    if a.match_k > 0 {
        check_k(&mesh, "match-k", a.match_k, MAX_SAMPLES)?;
    }
    timer.lap("load");
    let t = random_equiaffine(a.seed, a.strength);
    let config = InvarianceConfig {
        k: a.k,
        bins: a.bins,
        voronoi_k: a.voronoi_k,
        canonical_k: a.canonical_k,
        dimension: DEFAULT_DIMENSION,
        match_k: a.match_k,
        restarts: a.restarts,
        seed: a.seed,
    };
    let report = invariance_report(&mesh, &t, &config).map_err(|e| CliError::new("mesh", e))?;
    timer.lap("report");
    prepare_out(&a.out)?;
    let mut written = Vec::new();
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write(&a.out, "invariance.json", &text, &mut written)?;
    timer.lap("write");
    write_manifest(
        &a.out,
        "invariance",
        json!({ "mesh": a.mesh }),
        json!({ "strength": a.strength, "seed": a.seed, "report": config }),
        json!({ "mesh": mesh_json(&mesh) }),
        written,
        &timer,
    )
}
