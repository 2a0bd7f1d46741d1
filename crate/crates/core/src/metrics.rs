//! External clustering comparison metrics: Adjusted Rand Score, Normalized
//! Mutual Information (arithmetic-mean normalization, nats) and purity.
//!
//! Larger ARS / NMI means the two partitions are more alike; diversity is
//! reported as low similarity.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TinderError};
use crate::mixture::SoftAssignment;
use crate::scalar::Scalar;

/// Hard cluster labels in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardClustering {
    labels: Vec<usize>,
    k: usize,
}

impl HardClustering {
    /// `k` is inferred as `max(label) + 1`.
    pub fn new(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |&m| m + 1);
        Self { labels, k }
    }

    pub fn with_k(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TinderError::Contract(format!("label {bad} out of range for k={k}")));
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Cluster sizes indexed by label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Row-wise argmax; ties go to the lowest index.
pub fn harden<T: Scalar>(s: &SoftAssignment<T>) -> HardClustering {
    let labels = s
        .resp()
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    HardClustering { labels, k: s.k() }
}

/// Counts of co-occurring labels between two hard clusterings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Array2<usize>,
    row_totals: Vec<usize>,
    col_totals: Vec<usize>,
    n: usize,
}

impl ContingencyTable {
    pub fn new(a: &HardClustering, b: &HardClustering) -> Result<Self> {
        if a.len() != b.len() {
            return Err(TinderError::Contract(format!(
                "clusterings cover {} and {} points",
                a.len(),
                b.len()
            )));
        }
        let mut counts = Array2::zeros((a.k, b.k));
        for (&la, &lb) in a.labels.iter().zip(&b.labels) {
            counts[[la, lb]] += 1;
        }
        let row_totals = counts.rows().into_iter().map(|r| r.sum()).collect();
        let col_totals = counts.columns().into_iter().map(|c| c.sum()).collect();
        Ok(Self { counts, row_totals, col_totals, n: a.len() })
    }

    pub fn counts(&self) -> &Array2<usize> {
        &self.counts
    }

    pub fn row_totals(&self) -> &[usize] {
        &self.row_totals
    }

    pub fn col_totals(&self) -> &[usize] {
        &self.col_totals
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// True when both sides describe the same partition up to relabelling.
    pub fn is_same_partition(&self) -> bool {
        let rows_ok = self
            .counts
            .rows()
            .into_iter()
            .all(|r| r.iter().filter(|&&c| c > 0).count() <= 1);
        let cols_ok = self
            .counts
            .columns()
            .into_iter()
            .all(|c| c.iter().filter(|&&v| v > 0).count() <= 1);
        rows_ok && cols_ok
    }
}

fn pairs(count: usize) -> f64 {
    let c = count as f64;
    c * (c - 1.0) / 2.0
}

/// Adjusted Rand Score. When the chance-corrected denominator vanishes the
/// result is 1 for equal partitions and 0 otherwise.
pub fn adjusted_rand(a: &HardClustering, b: &HardClustering) -> Result<f64> {
    let table = ContingencyTable::new(a, b)?;
    Ok(adjusted_rand_from_table(&table))
}

pub fn adjusted_rand_from_table(table: &ContingencyTable) -> f64 {
    let index: f64 = table.counts.iter().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = table.row_totals.iter().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = table.col_totals.iter().map(|&c| pairs(c)).sum();
    let total = pairs(table.n);
    let degenerate = if table.is_same_partition() { 1.0 } else { 0.0 };
    if total == 0.0 {
        return degenerate;
    }
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom == 0.0 {
        return degenerate;
    }
    (index - expected) / denom
}

fn entropy_of_counts(counts: &[usize], n: f64) -> f64 {
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// `I(A;B) / ((H(A) + H(B)) / 2)` in nats. If both entropies vanish the
/// result is 1 for equal partitions and 0 otherwise.
pub fn nmi(a: &HardClustering, b: &HardClustering) -> Result<f64> {
    let table = ContingencyTable::new(a, b)?;
    Ok(nmi_from_table(&table))
}

pub fn nmi_from_table(table: &ContingencyTable) -> f64 {
    let n = table.n as f64;
    let h_a = entropy_of_counts(&table.row_totals, n);
    let h_b = entropy_of_counts(&table.col_totals, n);
    let denom = 0.5 * (h_a + h_b);
    if denom <= 0.0 {
        return if table.is_same_partition() { 1.0 } else { 0.0 };
    }
    let mut mi = 0.0;
    for ((r, c), &count) in table.counts.indexed_iter() {
        if count > 0 {
            let nij = count as f64;
            mi += nij / n * (nij * n / (table.row_totals[r] as f64 * table.col_totals[c] as f64)).ln();
        }
    }
    (mi / denom).clamp(0.0, 1.0)
}

/// Fraction of points that belong to the majority class of their cluster.
pub fn purity(pred: &HardClustering, truth: &HardClustering) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.n == 0 {
        return Err(TinderError::Contract("purity of an empty clustering".into()));
    }
    let majority: usize = table
        .counts
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / table.n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn hc(labels: &[usize]) -> HardClustering {
        HardClustering::new(labels.to_vec())
    }

    #[test]
    fn ars_examples() {
        assert_eq!(adjusted_rand(&hc(&[0, 0, 1, 2]), &hc(&[0, 0, 1, 2])).unwrap(), 1.0);
        let v = adjusted_rand(&hc(&[0, 0, 1, 1]), &hc(&[0, 1, 0, 1])).unwrap();
        assert!((v + 0.5).abs() < 1e-12);
        assert_eq!(
            adjusted_rand(&hc(&[0, 0, 1, 1]), &hc(&[1, 1, 0, 0])).unwrap(),
            1.0
        );
    }

    #[test]
    fn ars_degenerate_conventions() {
        // all singletons against itself, and all-one-cluster against itself
        assert_eq!(adjusted_rand(&hc(&[0, 1, 2]), &hc(&[2, 0, 1])).unwrap(), 1.0);
        assert_eq!(adjusted_rand(&hc(&[0, 0, 0]), &hc(&[1, 1, 1])).unwrap(), 1.0);
        assert_eq!(adjusted_rand(&hc(&[0, 0, 0]), &hc(&[0, 1, 2])).unwrap(), 0.0);
        assert_eq!(adjusted_rand(&hc(&[0]), &hc(&[3])).unwrap(), 1.0);
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&hc(&[0, 0, 1, 1]), &hc(&[0, 0, 1, 1])).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmi(&hc(&[0, 0, 1, 1]), &hc(&[0, 1, 0, 1])).unwrap().abs() < 1e-12);
        assert_eq!(nmi(&hc(&[0, 0, 0]), &hc(&[1, 1, 1])).unwrap(), 1.0);
        assert_eq!(nmi(&hc(&[0, 0, 0]), &hc(&[0, 1, 1])).unwrap(), 0.0);
    }

    #[test]
    fn nmi_against_contingency_oracle() {
        let mi = 0.5 * (4.0_f64 / 3.0).ln() + 0.25 * (2.0_f64 / 3.0).ln() + 0.25 * 2f64.ln();
        let h_a = 2f64.ln();
        let h_b = -(0.75 * 0.75_f64.ln() + 0.25 * 0.25_f64.ln());
        assert!((h_b - 0.56234).abs() < 1e-5);
        let oracle = mi / ((h_a + h_b) / 2.0);
        let v = nmi(&hc(&[0, 0, 1, 1]), &hc(&[0, 0, 0, 1])).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.3438).abs() < 1e-3);
    }

    #[test]
    fn purity_examples() {
        assert_eq!(purity(&hc(&[0, 1, 1]), &hc(&[2, 0, 0])).unwrap(), 1.0);
        assert_eq!(purity(&hc(&[0, 0, 0, 0]), &hc(&[0, 0, 1, 1])).unwrap(), 0.5);
        assert_eq!(purity(&hc(&[0, 0, 1, 1, 1]), &hc(&[0, 1, 1, 1, 0])).unwrap(), 0.6);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(adjusted_rand(&hc(&[0, 1]), &hc(&[0])).is_err());
        assert!(nmi(&hc(&[0, 1]), &hc(&[0])).is_err());
        assert!(purity(&hc(&[0, 1]), &hc(&[0])).is_err());
    }

    #[test]
    fn harden_breaks_ties_low() {
        let s = SoftAssignment::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(harden(&s).labels(), &[0, 1]);
        let s = SoftAssignment::new(array![[0.5, 0.5]]).unwrap();
        assert_eq!(harden(&s).labels(), &[0]);
        let s = SoftAssignment::new(array![[0.2, 0.8], [0.6, 0.4]]).unwrap();
        assert_eq!(harden(&s).labels(), &[1, 0]);
    }

    #[test]
    fn contingency_totals() {
        let t = ContingencyTable::new(&hc(&[0, 0, 1, 1]), &hc(&[0, 0, 0, 1])).unwrap();
        assert_eq!(t.counts(), &array![[2, 0], [1, 1]]);
        assert_eq!(t.row_totals(), &[2, 2]);
        assert_eq!(t.col_totals(), &[3, 1]);
        assert_eq!(t.n(), 4);
    }
}
