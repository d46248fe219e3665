//! Spectral clustering on a similarity matrix.
//!
//! Two procedures live here: the median split of the Fiedler vector of the
//! normalized Laplacian, and the multi-cluster variant that rotates the
//! leading eigenvectors so every row has one dominant entry. The rotation is
//! a product of Givens rotations whose angles are fitted by gradient descent
//! on `J = sum_i sum_j (Z_ij / M_i)^2`, `Z = V R(theta)`, `M_i = max_j |Z_ij|`.
//! The number of clusters is chosen by maximizing `q = 1 - (J / n - 1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{eigen_symmetric, Mat};
use crate::panel::SeriesPanel;
use crate::partition::{ClusterTimeline, Partition};
use crate::similarity::{similarity_sequence, SimilarityConfig, SimilarityMatrix};

/// `L = I - D^{-1/2} S D^{-1/2}` with `D_ii = sum_j S_ij`.
pub fn laplacian(s: &SimilarityMatrix) -> Result<Mat> {
    let n = s.n();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let d: f64 = (0..n).map(|j| s.get(i, j)).sum();
        if d <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "series {} has zero total similarity",
                i + 1
            )));
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            l[(i, j)] = id - inv_sqrt[i] * s.get(i, j) * inv_sqrt[j];
        }
    }
    // Exact symmetry for the eigensolver's check.
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (l[(i, j)] + l[(j, i)]);
            l[(i, j)] = avg;
            l[(j, i)] = avg;
        }
    }
    Ok(l)
}

/// Splits on the median of `v`: strictly greater goes to one block. When no
/// component exceeds the median, the first half of the indices forms a block.
pub fn median_split(v: &[f64]) -> Partition {
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let mut labels: Vec<usize> = v.iter().map(|&x| usize::from(x > median)).collect();
    if labels.iter().all(|&l| l == 0) {
        labels = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    }
    Partition::from_labels(&labels)
}

/// Bipartition by the median of the eigenvector of the second-smallest
/// Laplacian eigenvalue.
pub fn shi_malik(s: &SimilarityMatrix) -> Result<Partition> {
    if s.n() < 2 {
        return Err(Error::contract("bipartition needs at least 2 items"));
    }
    let e = eigen_symmetric(&laplacian(s)?)?;
    Ok(median_split(&e.vectors.column(1)))
}

/// Givens angles parameterizing a `c x c` rotation, one per pair `(a, b)`,
/// `a < b`, in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationAngles {
    c: usize,
    theta: Vec<f64>,
}

impl RotationAngles {
    pub fn zeros(c: usize) -> Self {
        RotationAngles {
            c,
            theta: vec![0.0; c * c.saturating_sub(1) / 2],
        }
    }

    pub fn new(c: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != c * c.saturating_sub(1) / 2 {
            return Err(Error::contract(format!(
                "{c} clusters need {} angles, got {}",
                c * c.saturating_sub(1) / 2,
                theta.len()
            )));
        }
        Ok(RotationAngles { c, theta })
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn angles(&self) -> &[f64] {
        &self.theta
    }

    fn planes(&self) -> impl Iterator<Item = (usize, usize)> {
        let c = self.c;
        (0..c).flat_map(move |a| (a + 1..c).map(move |b| (a, b)))
    }

    /// The product `G_1 G_2 ... G_k`.
    pub fn rotation(&self) -> Mat {
        let mut r = Mat::identity(self.c);
        for ((a, b), &t) in self.planes().zip(&self.theta) {
            right_multiply_givens(&mut r, a, b, t);
        }
        r
    }

    /// `dR / d theta_k` for every `k`.
    pub fn rotation_derivatives(&self) -> Vec<Mat> {
        let k = self.theta.len();
        let planes: Vec<(usize, usize)> = self.planes().collect();
        // prefix[m] = G_1 .. G_m
        let mut prefix = Vec::with_capacity(k + 1);
        prefix.push(Mat::identity(self.c));
        for m in 0..k {
            let mut next = prefix[m].clone();
            right_multiply_givens(&mut next, planes[m].0, planes[m].1, self.theta[m]);
            prefix.push(next);
        }
        // suffix[m] = G_{m+1} .. G_k (0-based: planes m..k)
        let mut suffix = vec![Mat::identity(self.c); k + 1];
        for m in (0..k).rev() {
            let g = givens(self.c, planes[m].0, planes[m].1, self.theta[m]);
            suffix[m] = g.matmul(&suffix[m + 1]);
        }
        (0..k)
            .map(|m| {
                let (a, b) = planes[m];
                let d = givens_derivative(self.c, a, b, self.theta[m]);
                prefix[m].matmul(&d).matmul(&suffix[m + 1])
            })
            .collect()
    }
}

fn givens(c: usize, a: usize, b: usize, t: f64) -> Mat {
    let mut g = Mat::identity(c);
    let (sin, cos) = t.sin_cos();
    g[(a, a)] = cos;
    g[(a, b)] = -sin;
    g[(b, a)] = sin;
    g[(b, b)] = cos;
    g
}

fn givens_derivative(c: usize, a: usize, b: usize, t: f64) -> Mat {
    let mut g = Mat::zeros(c, c);
    let (sin, cos) = t.sin_cos();
    g[(a, a)] = -sin;
    g[(a, b)] = -cos;
    g[(b, a)] = cos;
    g[(b, b)] = -sin;
    g
}

fn right_multiply_givens(r: &mut Mat, a: usize, b: usize, t: f64) {
    let (sin, cos) = t.sin_cos();
    for i in 0..r.rows() {
        let ra = r[(i, a)];
        let rb = r[(i, b)];
        r[(i, a)] = ra * cos + rb * sin;
        r[(i, b)] = -ra * sin + rb * cos;
    }
}

/// Row maxima `M_i = max_j |Z_ij|`.
pub fn row_max_abs(z: &Mat) -> Vec<f64> {
    (0..z.rows())
        .map(|i| z.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect()
}

/// `J` with the supplied row scales. A zero row contributes 1.
pub fn alignment_cost(z: &Mat, m: &[f64]) -> f64 {
    (0..z.rows())
        .map(|i| {
            if m[i] == 0.0 {
                1.0
            } else {
                z.row(i).iter().map(|v| (v / m[i]).powi(2)).sum::<f64>()
            }
        })
        .sum()
}

/// Gradient of `J(theta)`.
///
/// Each row's maximising column is held fixed, so `M_i = |Z_{i,m_i}|` is
/// differentiated through that single entry. Holding the value `M_i` itself
/// constant would give a zero gradient, since rotations preserve row norms.
pub fn alignment_gradient(v: &Mat, angles: &RotationAngles) -> Vec<f64> {
    let z = v.matmul(&angles.rotation());
    let mut dz = Mat::zeros(z.rows(), z.cols());
    for i in 0..z.rows() {
        let row = z.row(i);
        let m = argmax_abs(row);
        let mi = row[m].abs();
        if mi == 0.0 {
            continue;
        }
        let inv2 = 1.0 / (mi * mi);
        let norm2: f64 = row.iter().map(|x| x * x).sum();
        for j in 0..z.cols() {
            dz[(i, j)] = 2.0 * row[j] * inv2;
        }
        dz[(i, m)] -= 2.0 * norm2 * inv2 / mi * row[m].signum();
    }
    let w = v.transpose().matmul(&dz);
    angles
        .rotation_derivatives()
        .iter()
        .map(|d| w.as_slice().iter().zip(d.as_slice()).map(|(a, b)| a * b).sum())
        .collect()
}

/// Descent settings for the rotation fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    pub step: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub max_halvings: usize,
    /// Random starts in addition to `theta = 0`.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            step: 0.5,
            max_iters: 200,
            tol: 1e-10,
            max_halvings: 20,
            restarts: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub z: Mat,
    pub j: f64,
    pub q: f64,
    pub angles: RotationAngles,
    pub assignments: Partition,
    /// `J` after every accepted iteration, starting with the initial value.
    pub history: Vec<f64>,
}

fn true_cost(v: &Mat, angles: &RotationAngles) -> (Mat, f64) {
    let z = v.matmul(&angles.rotation());
    let j = alignment_cost(&z, &row_max_abs(&z));
    (z, j)
}

/// Index of the largest `|Z_ij|` in row `i`, lowest index on ties.
fn argmax_abs(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if v.abs() > row[best].abs() {
            best = j;
        }
    }
    best
}

/// Fits the rotation angles by gradient descent with backtracking.
///
/// A step is accepted only if `J` does not increase; otherwise it is halved
/// up to `max_halvings` times.
pub fn align_rotation(v: &Mat, init: &RotationAngles, step: f64, iters: usize) -> Result<AlignmentResult> {
    let cfg = DescentConfig {
        step,
        max_iters: iters,
        ..DescentConfig::default()
    };
    align_rotation_with(v, init, &cfg)
}

pub fn align_rotation_with(v: &Mat, init: &RotationAngles, cfg: &DescentConfig) -> Result<AlignmentResult> {
    let c = v.cols();
    if c < 2 {
        return Err(Error::contract("rotation alignment needs at least 2 columns"));
    }
    if init.c() != c {
        return Err(Error::contract("angle count does not match column count"));
    }
    if cfg.step.is_nan() || cfg.step <= 0.0 {
        return Err(Error::contract("descent step must be positive"));
    }
    let mut angles = init.clone();
    let (mut z, mut j) = true_cost(v, &angles);
    let mut history = vec![j];

    for _ in 0..cfg.max_iters {
        let g = alignment_gradient(v, &angles);
        if g.iter().all(|x| *x == 0.0) {
            break;
        }
        let mut s = cfg.step;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let cand: Vec<f64> = angles.angles().iter().zip(&g).map(|(t, d)| t - s * d).collect();
            let cand = RotationAngles { c, theta: cand };
            let (cz, cj) = true_cost(v, &cand);
            if cj <= j {
                accepted = Some((cand, cz, cj));
                break;
            }
            s *= 0.5;
        }
        let Some((na, nz, nj)) = accepted else {
            break;
        };
        let delta = j - nj;
        angles = na;
        z = nz;
        j = nj;
        history.push(j);
        if delta < cfg.tol {
            break;
        }
    }

    let labels: Vec<usize> = (0..z.rows()).map(|i| argmax_abs(z.row(i))).collect();
    let n = v.rows() as f64;
    Ok(AlignmentResult {
        q: 1.0 - (j / n - 1.0),
        j,
        angles,
        assignments: Partition::from_labels(&labels),
        z,
        history,
    })
}

/// Outcome of choosing the cluster count.
#[derive(Debug, Clone)]
pub struct SpectralChoice {
    pub partition: Partition,
    pub best_c: usize,
    /// `(c, q)` for every candidate count.
    pub scores: Vec<(usize, f64)>,
}

/// Two `q` values closer than this count as tied; the smaller `c` wins.
///
/// With `c = n` the eigenvector block is square and orthogonal, so `q = 1`
/// for any input. A strict comparison would then always pick `c = n`.
pub const Q_TIE_TOLERANCE: f64 = 1e-3;

/// Multi-cluster spectral clustering with the cluster count chosen by `q`.
///
/// For each `c` the eigenvectors of the `c` smallest Laplacian eigenvalues
/// are aligned from `theta = 0` and from `restarts` uniform starts in
/// `[-pi/4, pi/4]^k`; the lowest `J` is kept.
pub fn dynamic_spectral(
    s: &SimilarityMatrix,
    c_min: usize,
    c_max: usize,
    gd: &DescentConfig,
) -> Result<SpectralChoice> {
    let n = s.n();
    if !(2 <= c_min && c_min <= c_max && c_max <= n) {
        return Err(Error::contract(format!(
            "cluster range must satisfy 2 <= c_min <= c_max <= n (got {c_min}..{c_max}, n = {n})"
        )));
    }
    let eig = eigen_symmetric(&laplacian(s)?)?;
    let mut scores = Vec::new();
    let mut best: Option<(usize, f64, Partition)> = None;
    for c in c_min..=c_max {
        let v = eig.vectors.leading_columns(c);
        let fit = best_alignment(&v, c, gd)?;
        scores.push((c, fit.q));
        let better = match &best {
            None => true,
            Some((_, q, _)) => fit.q > q + Q_TIE_TOLERANCE,
        };
        if better {
            best = Some((c, fit.q, fit.assignments));
        }
    }
    let (best_c, _, partition) = best.expect("non-empty cluster range");
    Ok(SpectralChoice {
        partition,
        best_c,
        scores,
    })
}

fn best_alignment(v: &Mat, c: usize, gd: &DescentConfig) -> Result<AlignmentResult> {
    let k = c * (c - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(gd.seed);
    rng.set_stream(c as u64);
    let quarter = std::f64::consts::FRAC_PI_4;
    let mut starts = vec![RotationAngles::zeros(c)];
    for _ in 0..gd.restarts {
        let theta = (0..k).map(|_| rng.gen_range(-quarter..=quarter)).collect();
        starts.push(RotationAngles { c, theta });
    }
    let mut best: Option<AlignmentResult> = None;
    for start in &starts {
        let fit = align_rotation_with(v, start, gd)?;
        if best.as_ref().is_none_or(|b| fit.j < b.j) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Runs [`dynamic_spectral`] on the similarity matrix at every `k = w..=m`.
pub fn spectral_timeline(
    panel: &SeriesPanel,
    cfg: &SimilarityConfig,
    c_min: usize,
    c_max: usize,
    gd: &DescentConfig,
) -> Result<ClusterTimeline> {
    let seq = similarity_sequence(panel, cfg)?;
    let steps = seq
        .par_iter()
        .map(|(k, s)| dynamic_spectral(s, c_min, c_max, gd).map(|r| (*k, r.partition)))
        .collect::<Result<Vec<_>>>()?;
    ClusterTimeline::new(steps)
}

/// Runs [`shi_malik`] on the similarity matrix at every `k = w..=m`.
pub fn shi_malik_timeline(panel: &SeriesPanel, cfg: &SimilarityConfig) -> Result<ClusterTimeline> {
    let seq = similarity_sequence(panel, cfg)?;
    let steps = seq
        .par_iter()
        .map(|(k, s)| shi_malik(s).map(|p| (*k, p)))
        .collect::<Result<Vec<_>>>()?;
    ClusterTimeline::new(steps)
}
