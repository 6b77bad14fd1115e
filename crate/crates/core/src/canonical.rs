//! Euclidean embeddings of distance matrices (classical scaling and SMACOF)
//! and rigid alignment of the resulting point sets.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::EmbeddingError;
use crate::geodesics::DistanceMatrix;
use crate::mesh::Point3;
use crate::metric::MetricKind;

pub const DEFAULT_DIMENSION: usize = 3;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Eigenvalues below this fraction of the largest magnitude count as zero.
const SPECTRAL_RANK_TOL: f64 = 1e-12;

/// Sample points embedded in `R^m`, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalForm {
    pub coords: DMatrix<f64>,
    /// `Σ_{i<j} (‖z_i − z_j‖ − d_ij)²` against the matrix it was fitted to.
    pub stress: f64,
    pub metric: MetricKind,
    pub samples: Vec<usize>,
    /// Magnitude of the discarded negative spectrum over the total spectrum.
    pub negative_eigen_mass: f64,
    /// Requested dimensions with no positive eigenvalue, filled with zeros.
    pub padded_dims: usize,
    /// Stress after every accepted SMACOF iteration, starting with the input.
    pub stress_history: Vec<f64>,
}

impl CanonicalForm {
    pub fn k(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.coords.ncols()
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.coords.row(i).transpose()
    }

    /// `sample,x0,x1,...` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample");
        for c in 0..self.dimension() {
            write!(s, ",x{c}").unwrap();
        }
        s.push('\n');
        for i in 0..self.k() {
            write!(s, "{}", self.samples[i]).unwrap();
            for c in 0..self.dimension() {
                write!(s, ",{}", self.coords[(i, c)]).unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// First three coordinates of every point, zero-padded.
    pub fn points3(&self) -> Vec<Point3> {
        (0..self.k())
            .map(|i| {
                let c = |j: usize| if j < self.dimension() { self.coords[(i, j)] } else { 0.0 };
                Point3::new(c(0), c(1), c(2))
            })
            .collect()
    }
}

pub fn stress(coords: &DMatrix<f64>, dm: &DistanceMatrix) -> f64 {
    let k = dm.k();
    let mut s = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let d = (coords.row(i) - coords.row(j)).norm();
            s += (d - dm.get(i, j)).powi(2);
        }
    }
    s
}

/// Classical scaling: the top `m` eigenpairs of `−½ J D² J`.
///
/// Negative eigenvalues are dropped and their share of the spectrum reported;
/// dimensions beyond the positive rank are zero.
pub fn classical_mds(dm: &DistanceMatrix, m: usize) -> Result<CanonicalForm, EmbeddingError> {
    if m == 0 {
        return Err(EmbeddingError::ZeroDimension);
    }
    let k = dm.k();
    if k == 0 {
        return Err(EmbeddingError::ShapeMismatch("empty distance matrix".into()));
    }
    let d2 = DMatrix::from_fn(k, k, |i, j| dm.get(i, j).powi(2));
    let row_means: DVector<f64> = d2.column_mean();
    let total_mean = row_means.mean();
    let b = DMatrix::from_fn(k, k, |i, j| {
        -0.5 * (d2[(i, j)] - row_means[i] - row_means[j] + total_mean)
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let largest = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.abs()).sum();
    let negative: f64 = eig.eigenvalues.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();

    let mut coords = DMatrix::zeros(k, m);
    let mut padded = 0;
    for (c, &idx) in order.iter().take(m).enumerate() {
        let lambda = eig.eigenvalues[idx];
        if !(lambda > SPECTRAL_RANK_TOL * largest) {
            padded += 1;
            continue;
        }
        let mut v = eig.eigenvectors.column(idx).into_owned();
        // Deterministic sign: largest-magnitude entry (first on ties) positive.
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1 { (i, x.abs()) } else { best })
            .0;
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        coords.set_column(c, &(v * lambda.sqrt()));
    }
    padded += m.saturating_sub(k);
    let s = stress(&coords, dm);
    Ok(CanonicalForm {
        coords,
        stress: s,
        metric: dm.metric(),
        samples: dm.samples().to_vec(),
        negative_eigen_mass: if total > 0.0 { negative / total } else { 0.0 },
        padded_dims: padded,
        stress_history: vec![s],
    })
}

/// Stress majorization from `init`.
///
/// Stops when the relative stress decrease drops below `tol` or after
/// `max_iters` Guttman transforms. An iterate that would raise the stress
/// (only possible through rounding) ends the run without being accepted.
pub fn smacof(
    dm: &DistanceMatrix,
    init: &CanonicalForm,
    max_iters: usize,
    tol: f64,
) -> Result<CanonicalForm, EmbeddingError> {
    let k = dm.k();
    if init.k() != k {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "initial form has {} points, matrix has {k}",
            init.k()
        )));
    }
    let scale: f64 = dm.values().iter().map(|d| d * d).sum::<f64>() / 2.0;
    let mut x = init.coords.clone();
    let mut s = stress(&x, dm);
    let mut history = vec![s];
    for _ in 0..max_iters {
        if s <= 1e-30 * scale {
            break;
        }
        let next = guttman(&x, dm);
        let s_next = stress(&next, dm);
        if s_next > s {
            break;
        }
        let rel = (s - s_next) / s;
        x = next;
        s = s_next;
        history.push(s);
        if rel < tol {
            break;
        }
    }
    Ok(CanonicalForm {
        coords: x,
        stress: s,
        metric: dm.metric(),
        samples: dm.samples().to_vec(),
        negative_eigen_mass: init.negative_eigen_mass,
        padded_dims: init.padded_dims,
        stress_history: history,
    })
}

fn guttman(x: &DMatrix<f64>, dm: &DistanceMatrix) -> DMatrix<f64> {
    let k = x.nrows();
    let mut b = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i + 1..k {
            let d = (x.row(i) - x.row(j)).norm();
            if d > 0.0 {
                let v = -dm.get(i, j) / d;
                b[(i, j)] = v;
                b[(j, i)] = v;
            }
        }
    }
    for i in 0..k {
        let row_sum: f64 = b.row(i).iter().sum();
        b[(i, i)] = -row_sum;
    }
    (b * x) / k as f64
}

/// Classical scaling of the max-normalized matrix followed by SMACOF.
pub fn canonical_form(
    dm: &DistanceMatrix,
    m: usize,
    max_iters: usize,
    tol: f64,
) -> Result<CanonicalForm, EmbeddingError> {
    let dm = dm.normalized();
    let init = classical_mds(&dm, m)?;
    smacof(&dm, &init, max_iters, tol)
}

/// Rigid motion `b ≈ R·a + t` and the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
    /// Root-mean-square residual divided by the diameter of `b`.
    pub rmsd: f64,
}

pub fn procrustes_align(
    a: &CanonicalForm,
    b: &CanonicalForm,
    allow_reflection: bool,
) -> Result<Alignment, EmbeddingError> {
    procrustes_points(&a.coords, &b.coords, allow_reflection)
}

/// Procrustes on raw point sets (rows are points, matched by index).
pub fn procrustes_points(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    allow_reflection: bool,
) -> Result<Alignment, EmbeddingError> {
    if a.shape() != b.shape() {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let (k, m) = a.shape();
    if k == 0 || m == 0 {
        return Err(EmbeddingError::DegeneratePointSet);
    }
    let ca = a.row_mean();
    let cb = b.row_mean();
    let a0 = DMatrix::from_fn(k, m, |i, j| a[(i, j)] - ca[j]);
    let b0 = DMatrix::from_fn(k, m, |i, j| b[(i, j)] - cb[j]);
    let diameter = diameter(b);
    if !(diameter > 0.0) || a0.norm() == 0.0 {
        return Err(EmbeddingError::DegeneratePointSet);
    }
    let h = a0.transpose() * &b0;
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V").transpose();
    let mut r = &v * u.transpose();
    if !allow_reflection && r.determinant() < 0.0 {
        // Flip the axis of the smallest singular value.
        let smallest = (0..m)
            .min_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]))
            .expect("m > 0");
        let mut v = v.clone();
        v.column_mut(smallest).neg_mut();
        r = &v * u.transpose();
    }
    let t = cb.transpose() - &r * ca.transpose();
    let mut sq = 0.0;
    for i in 0..k {
        let p = &r * a.row(i).transpose() + &t;
        sq += (p - b.row(i).transpose()).norm_squared();
    }
    Ok(Alignment {
        rotation: r,
        translation: t,
        rmsd: (sq / k as f64).sqrt() / diameter,
    })
}

fn diameter(x: &DMatrix<f64>) -> f64 {
    let k = x.nrows();
    let mut d: f64 = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            d = d.max((x.row(i) - x.row(j)).norm());
        }
    }
    d
}
