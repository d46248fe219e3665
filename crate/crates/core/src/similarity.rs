//! Windowed distances and similarities between series.
//!
//! At time `k` each series contributes its trailing window of `w`
//! observations. Windows are normalized to unit length under the chosen norm
//! and compared under the same norm; the distance is then mapped into `[0, 1]`
//! by `exp(-c * d)`, with values below a threshold set to zero.

use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::SeriesPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Norm {
    L1,
    #[default]
    L2,
}

impl Norm {
    fn of(self, x: impl Iterator<Item = f64>) -> f64 {
        match self {
            Norm::L1 => x.map(f64::abs).sum(),
            Norm::L2 => x.map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            other => Err(Error::Parse(format!("unknown norm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityConfig {
    pub norm: Norm,
    /// Scale `c` in `exp(-c * d)`.
    pub scale: f64,
    /// Similarities below this are set to zero.
    pub threshold: f64,
    pub window: usize,
    /// Geometric decay per step of age; 1 disables decay.
    pub decay: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            norm: Norm::L2,
            scale: 1.0,
            threshold: 0.0,
            window: 20,
            decay: 1.0,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::contract("window must be at least 2"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::contract("scale must be positive"));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::contract("threshold must lie in [0, 1)"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::contract("decay must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Distance between two windows after decay weighting and normalization.
///
/// Errors with [`Error::DegenerateInput`] when either window is all zeros.
pub fn window_distance(x1: &[f64], x2: &[f64], cfg: &SimilarityConfig) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::contract(format!(
            "window lengths differ ({} vs {})",
            x1.len(),
            x2.len()
        )));
    }
    let w = x1.len();
    let weight = |idx: usize| {
        if cfg.decay == 1.0 {
            1.0
        } else {
            cfg.decay.powi((w - 1 - idx) as i32)
        }
    };
    let u1: Vec<f64> = x1.iter().enumerate().map(|(i, v)| v * weight(i)).collect();
    let u2: Vec<f64> = x2.iter().enumerate().map(|(i, v)| v * weight(i)).collect();
    let n1 = cfg.norm.of(u1.iter().copied());
    let n2 = cfg.norm.of(u2.iter().copied());
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::DegenerateInput("all-zero window".into()));
    }
    Ok(cfg.norm.of(u1.iter().zip(&u2).map(|(a, b)| a / n1 - b / n2)))
}

/// `exp(-c * d)`, zeroed below the threshold.
pub fn similarize(d: f64, cfg: &SimilarityConfig) -> f64 {
    debug_assert!(d >= 0.0);
    let s = (-cfg.scale * d).exp();
    if s < cfg.threshold {
        0.0
    } else {
        s
    }
}

/// Symmetric non-negative distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `None` marks a pair whose distance is undefined (an all-zero window).
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.values[i * self.n + j];
        (!v.is_nan()).then_some(v)
    }
}

/// Symmetric similarities in `[0, 1]` with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Validates symmetry, range and unit diagonal of a row-major `n x n` matrix.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::contract("similarity matrix must be n x n"));
        }
        for i in 0..n {
            if (values[i * n + i] - 1.0).abs() > 1e-12 {
                return Err(Error::contract("similarity diagonal must be 1"));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::contract(format!(
                        "similarity ({}, {}) = {v} outside [0, 1]",
                        i + 1,
                        j + 1
                    )));
                }
                if (v - values[j * n + i]).abs() > 1e-12 {
                    return Err(Error::contract("similarity matrix must be symmetric"));
                }
            }
        }
        Ok(SimilarityMatrix { n, values })
    }

    /// Builds from off-diagonal entries in pair order (see [`crate::partition::pair_index`]).
    pub fn from_pairs(n: usize, pair_values: &[f64]) -> Result<Self> {
        if pair_values.len() != crate::partition::n_pairs(n) {
            return Err(Error::contract("wrong number of pair similarities"));
        }
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        for ((i, j), &v) in crate::partition::pairs(n).zip(pair_values) {
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
        Self::new(n, values)
    }

    pub fn ones(n: usize) -> Self {
        SimilarityMatrix {
            n,
            values: vec![1.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        SimilarityMatrix { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Applies a permutation: entry `(perm[i], perm[j])` of the result is `(i, j)` here.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[perm[i] * n + perm[j]] = self.values[i * n + j];
            }
        }
        SimilarityMatrix { n, values }
    }

    /// CSV with a header row of 1-based series ids.
    pub fn to_csv(&self, fmt_value: impl Fn(f64) -> String) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.n).map(|i| format!("s{i}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", fmt_value(self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Distances between the trailing windows ending at `k`. Pairs involving an
/// all-zero window are left undefined.
pub fn distance_at(panel: &SeriesPanel, k: usize, cfg: &SimilarityConfig) -> Result<DistanceMatrix> {
    cfg.validate()?;
    let w = cfg.window;
    if k < w || k > panel.n_steps() {
        return Err(Error::InsufficientHistory {
            needed: w,
            available: k.min(panel.n_steps()),
        });
    }
    let n = panel.n_series();
    let windows: Vec<Vec<f64>> = (0..n).map(|i| panel.window(i, k, w)).collect::<Result<_>>()?;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = match window_distance(&windows[i], &windows[j], cfg) {
                Ok(d) => d,
                Err(Error::DegenerateInput(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, values })
}

/// Similarity matrix at 1-based time `k`.
///
/// A pair with an all-zero window gets similarity 0; the diagonal is 1.
pub fn similarity_at(panel: &SeriesPanel, k: usize, cfg: &SimilarityConfig) -> Result<SimilarityMatrix> {
    let d = distance_at(panel, k, cfg)?;
    let n = d.n();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let s = match d.get(i, j) {
                Some(dist) => similarize(dist, cfg),
                None => {
                    warn!(
                        "all-zero window for pair ({}, {}) at step {k}; similarity set to 0",
                        i + 1,
                        j + 1
                    );
                    0.0
                }
            };
            values[i * n + j] = s;
            values[j * n + i] = s;
        }
    }
    Ok(SimilarityMatrix { n, values })
}

/// One similarity matrix for every `k` in `w..=m`.
pub fn similarity_sequence(
    panel: &SeriesPanel,
    cfg: &SimilarityConfig,
) -> Result<Vec<(usize, SimilarityMatrix)>> {
    cfg.validate()?;
    if panel.n_steps() < cfg.window {
        return Err(Error::InsufficientHistory {
            needed: cfg.window,
            available: panel.n_steps(),
        });
    }
    (cfg.window..=panel.n_steps())
        .into_par_iter()
        .map(|k| similarity_at(panel, k, cfg).map(|s| (k, s)))
        .collect()
}
