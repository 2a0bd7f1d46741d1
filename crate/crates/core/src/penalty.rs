//! Co-clustering joint distributions, the mutual-information similarity
//! between two soft clusterings, and the accumulated diversity penalty with
//! its gradient.
//!
//! Values are in nats. The joint of two clusterings `a`, `b` on the same N
//! rows is `J[h][h'] = (1/N) Σ_j a[j][h] · b[j][h']`; its mutual information
//! is unchanged by relabelling either side.

use ndarray::Array2;

use crate::data::DataMatrix;
use crate::error::{Result, TinderError};
use crate::mixture::{
    backprop_log_joint, responsibilities, MixtureParams, ParamGradient, SoftAssignment,
};
use crate::scalar::{clamped_ln, Scalar};

/// K×K' joint distribution over the labels of two clusterings.
#[derive(Debug, Clone, PartialEq)]
pub struct CoclusterJoint<T> {
    joint: Array2<T>,
    row_marginal: Vec<T>,
    col_marginal: Vec<T>,
}

impl<T: Scalar> CoclusterJoint<T> {
    /// Wraps an explicit joint table; marginals are its row and column sums.
    pub fn from_joint(joint: Array2<T>) -> Result<Self> {
        if joint.iter().any(|&p| !(p >= T::zero())) {
            return Err(TinderError::Contract("joint entries must be non-negative".into()));
        }
        let total: T = joint.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(16.0)) {
            return Err(TinderError::Contract(format!("joint sums to {total}")));
        }
        let row_marginal = joint.rows().into_iter().map(|r| r.iter().copied().sum()).collect();
        let col_marginal = joint.columns().into_iter().map(|c| c.iter().copied().sum()).collect();
        Ok(Self { joint, row_marginal, col_marginal })
    }

    pub fn joint(&self) -> &Array2<T> {
        &self.joint
    }

    pub fn row_marginal(&self) -> &[T] {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &[T] {
        &self.col_marginal
    }
}

/// Averages the outer products of matching responsibility rows.
pub fn cocluster_joint<T: Scalar>(
    a: &SoftAssignment<T>,
    b: &SoftAssignment<T>,
) -> Result<CoclusterJoint<T>> {
    if a.n() != b.n() {
        return Err(TinderError::Contract(format!(
            "assignments cover {} and {} points",
            a.n(),
            b.n()
        )));
    }
    let n = T::from_count(a.n());
    let mut joint = a.resp().t().dot(b.resp());
    joint.mapv_inplace(|v| v / n);
    let row_marginal = joint.rows().into_iter().map(|r| r.iter().copied().sum()).collect();
    let col_marginal = joint.columns().into_iter().map(|c| c.iter().copied().sum()).collect();
    Ok(CoclusterJoint { joint, row_marginal, col_marginal })
}

/// `Σ J log(J / (p q))`, with `0 · log 0 = 0`.
pub fn mutual_information<T: Scalar>(j: &CoclusterJoint<T>) -> T {
    let log_rows: Vec<T> = j.row_marginal.iter().map(|&p| clamped_ln(p)).collect();
    let log_cols: Vec<T> = j.col_marginal.iter().map(|&q| clamped_ln(q)).collect();
    let mut mi = T::zero();
    for ((h, hp), &p) in j.joint.indexed_iter() {
        if p > T::zero() {
            mi += p * (clamped_ln(p) - log_rows[h] - log_cols[hp]);
        }
    }
    mi.max(T::zero())
}

/// Shannon entropy in nats.
pub fn entropy<T: Scalar>(p: &[T]) -> T {
    -p.iter()
        .filter(|&&v| v > T::zero())
        .map(|&v| v * clamped_ln(v))
        .sum::<T>()
}

/// Mutual information between two soft clusterings of the same rows.
pub fn assignment_similarity<T: Scalar>(a: &SoftAssignment<T>, b: &SoftAssignment<T>) -> Result<T> {
    Ok(mutual_information(&cocluster_joint(a, b)?))
}

fn check_targets<T: Scalar>(n: usize, targets: &[&SoftAssignment<T>]) -> Result<()> {
    for (s, target) in targets.iter().enumerate() {
        if target.n() != n {
            return Err(TinderError::Contract(format!(
                "history entry {s} covers {} points, data has {n}",
                target.n()
            )));
        }
    }
    Ok(())
}

/// Sum of mutual informations between the clustering induced by `theta` and
/// every frozen assignment in `targets`. Zero for an empty history.
pub fn penalty<T: Scalar>(
    theta: &MixtureParams<T>,
    targets: &[&SoftAssignment<T>],
    data: &DataMatrix<T>,
) -> Result<T> {
    check_targets(data.n(), targets)?;
    if targets.is_empty() {
        return Ok(T::zero());
    }
    let resp = responsibilities(data, theta)?;
    penalty_for_assignment(&resp, targets)
}

pub(crate) fn penalty_for_assignment<T: Scalar>(
    resp: &SoftAssignment<T>,
    targets: &[&SoftAssignment<T>],
) -> Result<T> {
    let mut total = T::zero();
    for target in targets {
        total += assignment_similarity(resp, target)?;
    }
    Ok(total)
}

/// `∂(Σ_s f_s)/∂resp[j][h]`, up to a per-row constant (which the softmax
/// Jacobian annihilates).
pub(crate) fn penalty_resp_gradient<T: Scalar>(
    resp: &SoftAssignment<T>,
    targets: &[&SoftAssignment<T>],
) -> Result<Array2<T>> {
    let n = T::from_count(resp.n());
    let mut grad = Array2::zeros(resp.resp().dim());
    for target in targets {
        let joint = cocluster_joint(resp, target)?;
        let log_rows: Vec<T> = joint.row_marginal.iter().map(|&p| clamped_ln(p)).collect();
        let log_cols: Vec<T> = joint.col_marginal.iter().map(|&q| clamped_ln(q)).collect();
        let pmi = Array2::from_shape_fn(joint.joint.dim(), |(h, hp)| {
            (clamped_ln(joint.joint[[h, hp]]) - log_rows[h] - log_cols[hp]) / n
        });
        // (N×K') · (K'×K)
        grad += &target.resp().dot(&pmi.t());
    }
    Ok(grad)
}

/// Pulls a gradient with respect to responsibilities back through the
/// row-wise softmax onto the log-joint `z`.
pub(crate) fn softmax_backprop<T: Scalar>(resp: &SoftAssignment<T>, grad: &Array2<T>) -> Array2<T> {
    let r = resp.resp();
    let mut out = Array2::zeros(r.dim());
    for (i, (r_row, g_row)) in r.rows().into_iter().zip(grad.rows()).enumerate() {
        let mean: T = r_row.iter().zip(g_row.iter()).map(|(&a, &b)| a * b).sum();
        for c in 0..r_row.len() {
            out[[i, c]] = r_row[c] * (g_row[c] - mean);
        }
    }
    out
}

/// Analytic gradient of [`penalty`]; history assignments are constants.
pub fn penalty_gradient<T: Scalar>(
    theta: &MixtureParams<T>,
    targets: &[&SoftAssignment<T>],
    data: &DataMatrix<T>,
) -> Result<ParamGradient<T>> {
    check_targets(data.n(), targets)?;
    if targets.is_empty() {
        // still validate dimensions
        responsibilities(data, theta)?;
        return Ok(ParamGradient::zeros_like(theta));
    }
    let resp = responsibilities(data, theta)?;
    let g = penalty_resp_gradient(&resp, targets)?;
    let upstream = softmax_backprop(&resp, &g);
    Ok(backprop_log_joint(data, theta, &upstream))
}
