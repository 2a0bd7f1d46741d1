use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TinderError};
use crate::scalar::Scalar;

/// N×D observations with optional ground-truth labels.
///
/// Rows are weighted uniformly (1/N) wherever an empirical distribution over
/// data points is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DataMatrix<T> {
    values: Array2<T>,
    labels: Option<Vec<usize>>,
    ids: Vec<usize>,
}

impl<T: Scalar> DataMatrix<T> {
    /// Validates shape and finiteness. Row ids default to `0..N`.
    pub fn new(values: Array2<T>, labels: Option<Vec<usize>>) -> Result<Self> {
        let n = values.nrows();
        Self::with_ids(values, labels, (0..n).collect())
    }

    pub fn with_ids(values: Array2<T>, labels: Option<Vec<usize>>, ids: Vec<usize>) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(TinderError::InvalidData(format!(
                "data matrix must be non-empty, got {n}x{d}"
            )));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(TinderError::InvalidData(format!(
                "non-finite value at row {}, column {}",
                idx / d,
                idx % d
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(TinderError::InvalidData(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
        }
        if ids.len() != n {
            return Err(TinderError::InvalidData(format!("{} ids for {n} rows", ids.len())));
        }
        Ok(Self { values, labels, ids })
    }

    /// Builds a matrix from row vectors; all rows must share one length.
    pub fn from_rows(rows: &[Vec<T>], labels: Option<Vec<usize>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(TinderError::Format(format!(
                "row {bad} has {} values, expected {d}",
                rows[bad].len()
            )));
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| TinderError::Format(e.to_string()))?;
        Self::new(values, labels)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.values.row(i)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Per-dimension (population) variance of the observations.
    pub fn column_variances(&self) -> Vec<T> {
        let n = T::from_count(self.n());
        self.values
            .columns()
            .into_iter()
            .map(|col| {
                let mean = col.iter().copied().sum::<T>() / n;
                col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n
            })
            .collect()
    }

    /// Returns a copy with every row repeated `times` times (ids renumbered).
    pub fn repeated(&self, times: usize) -> Self {
        let (n, d) = self.values.dim();
        let mut flat = Vec::with_capacity(n * d * times);
        for _ in 0..times {
            flat.extend(self.values.iter().copied());
        }
        let values = Array2::from_shape_vec((n * times, d), flat).expect("shape");
        let labels = self.labels.as_ref().map(|l| l.repeat(times));
        Self::new(values, labels).expect("repeating valid data stays valid")
    }
}
