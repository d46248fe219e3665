use crate::error::{Error, Result};

/// `n_series` time series of common length `n_steps`, stored row-major with
/// one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPanel {
    n_series: usize,
    n_steps: usize,
    values: Vec<f64>,
}

impl SeriesPanel {
    /// `values` is row-major: `values[t * n_series + i]` is series `i` at step `t`.
    pub fn new(n_series: usize, n_steps: usize, values: Vec<f64>) -> Result<Self> {
        if n_series < 2 {
            return Err(Error::contract("a panel needs at least 2 series"));
        }
        if n_steps < 1 {
            return Err(Error::contract("a panel needs at least 1 time step"));
        }
        if values.len() != n_series * n_steps {
            return Err(Error::contract(format!(
                "expected {} values, got {}",
                n_series * n_steps,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!(
                "non-finite value at step {}, series {}",
                pos / n_series + 1,
                pos % n_series + 1
            )));
        }
        Ok(SeriesPanel {
            n_series,
            n_steps,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_series = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_series) {
            return Err(Error::contract("ragged panel rows"));
        }
        Self::new(n_series, rows.len(), rows.concat())
    }

    pub fn n_series(&self) -> usize {
        self.n_series
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Value of series `i` at 1-based step `t`.
    pub fn value(&self, t: usize, i: usize) -> f64 {
        self.values[(t - 1) * self.n_series + i]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let start = (t - 1) * self.n_series;
        &self.values[start..start + self.n_series]
    }

    /// The `w` observations of series `i` ending at 1-based step `k`, oldest first.
    pub fn window(&self, i: usize, k: usize, w: usize) -> Result<Vec<f64>> {
        if w == 0 || k < w || k > self.n_steps {
            return Err(Error::InsufficientHistory {
                needed: w,
                available: k.min(self.n_steps),
            });
        }
        Ok((k + 1 - w..=k).map(|t| self.value(t, i)).collect())
    }

    /// Keeps steps `lo..=hi` (1-based, inclusive).
    pub fn slice_steps(&self, lo: usize, hi: usize) -> Result<Self> {
        if lo == 0 || hi < lo || hi > self.n_steps {
            return Err(Error::contract(format!(
                "step range {lo}..={hi} outside 1..={}",
                self.n_steps
            )));
        }
        let start = (lo - 1) * self.n_series;
        let end = hi * self.n_series;
        Self::new(self.n_series, hi - lo + 1, self.values[start..end].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(SeriesPanel::new(1, 3, vec![0.0; 3]).is_err());
        assert!(SeriesPanel::new(2, 0, vec![]).is_err());
        assert!(SeriesPanel::new(2, 2, vec![0.0; 3]).is_err());
        assert!(matches!(
            SeriesPanel::new(2, 1, vec![0.0, f64::NAN]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn windows_are_trailing() {
        let p = SeriesPanel::from_rows(&[vec![1.0, 10.0], vec![2.0, 20.0], vec![3.0, 30.0]]).unwrap();
        assert_eq!(p.window(1, 3, 2).unwrap(), vec![20.0, 30.0]);
        assert!(p.window(0, 1, 2).is_err());
        assert_eq!(p.slice_steps(2, 3).unwrap().row(1), &[2.0, 20.0]);
    }
}
