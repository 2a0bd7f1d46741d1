//! Gaussian mixture densities, responsibilities and the log-likelihood with
//! its analytic gradient.
//!
//! Parameters are kept unconstrained: weights are the softmax of
//! `weight_logits` and each effective variance is `exp(log_variance) +
//! VARIANCE_FLOOR`. All density arithmetic happens in the log domain.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, TinderError};
use crate::scalar::{log_sum_exp, Scalar};

/// Added to `exp(log_variance)` to obtain the effective variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    /// One variance per component and dimension.
    #[default]
    Diagonal,
    /// One variance per component shared by all dimensions.
    Spherical,
}

impl std::str::FromStr for CovarianceMode {
    type Err = TinderError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Self::Diagonal),
            "spherical" => Ok(Self::Spherical),
            other => Err(TinderError::InvalidConfig(format!("unknown covariance mode {other:?}"))),
        }
    }
}

/// Unconstrained mixture parameters θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MixtureParams<T> {
    weight_logits: Array1<T>,
    means: Array2<T>,
    /// K×D in diagonal mode, K×1 in spherical mode.
    log_variances: Array2<T>,
    covariance_mode: CovarianceMode,
}

impl<T: Scalar> MixtureParams<T> {
    pub fn new(
        weight_logits: Array1<T>,
        means: Array2<T>,
        log_variances: Array2<T>,
        covariance_mode: CovarianceMode,
    ) -> Result<Self> {
        let (k, d) = means.dim();
        if k == 0 || d == 0 {
            return Err(TinderError::InvalidParams(format!("empty means matrix {k}x{d}")));
        }
        if weight_logits.len() != k {
            return Err(TinderError::InvalidParams(format!(
                "{} weight logits for {k} components",
                weight_logits.len()
            )));
        }
        let var_cols = match covariance_mode {
            CovarianceMode::Diagonal => d,
            CovarianceMode::Spherical => 1,
        };
        if log_variances.dim() != (k, var_cols) {
            return Err(TinderError::InvalidParams(format!(
                "log-variance block is {:?}, expected ({k}, {var_cols})",
                log_variances.dim()
            )));
        }
        let params = Self { weight_logits, means, log_variances, covariance_mode };
        params.check_finite()?;
        Ok(params)
    }

    /// Builds parameters from (non-log) weights and effective variances.
    pub fn from_natural(
        weights: &[T],
        means: Array2<T>,
        variances: Array2<T>,
        covariance_mode: CovarianceMode,
    ) -> Result<Self> {
        let floor = T::lit(VARIANCE_FLOOR);
        if let Some(v) = variances.iter().find(|&&v| !(v > floor)) {
            return Err(TinderError::InvalidParams(format!(
                "variance {v} not above the floor {VARIANCE_FLOOR}"
            )));
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(TinderError::InvalidParams("weights must be positive".into()));
        }
        let logits = weights.iter().map(|w| w.ln()).collect();
        let log_variances = variances.mapv(|v| (v - floor).ln());
        Self::new(logits, means, log_variances, covariance_mode)
    }

    pub fn check_finite(&self) -> Result<()> {
        let all = self
            .weight_logits
            .iter()
            .chain(self.means.iter())
            .chain(self.log_variances.iter());
        for v in all {
            if !v.is_finite() {
                return Err(TinderError::InvalidParams(format!("non-finite parameter {v}")));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.means.nrows()
    }

    pub fn d(&self) -> usize {
        self.means.ncols()
    }

    pub fn covariance_mode(&self) -> CovarianceMode {
        self.covariance_mode
    }

    pub fn weight_logits(&self) -> &Array1<T> {
        &self.weight_logits
    }

    pub fn means(&self) -> &Array2<T> {
        &self.means
    }

    pub fn log_variances(&self) -> &Array2<T> {
        &self.log_variances
    }

    /// Mixture weights, `softmax(weight_logits)`.
    pub fn weights(&self) -> Vec<T> {
        let lse = log_sum_exp(self.weight_logits.as_slice().expect("contiguous"));
        self.weight_logits.iter().map(|&a| (a - lse).exp()).collect()
    }

    /// Effective variances expanded to K×D regardless of mode.
    pub fn variances(&self) -> Array2<T> {
        let floor = T::lit(VARIANCE_FLOOR);
        let (k, d) = self.means.dim();
        Array2::from_shape_fn((k, d), |(c, j)| {
            let col = if self.covariance_mode == CovarianceMode::Spherical { 0 } else { j };
            self.log_variances[[c, col]].exp() + floor
        })
    }

    /// Number of free scalars in the unconstrained parameterization.
    pub fn num_params(&self) -> usize {
        self.weight_logits.len() + self.means.len() + self.log_variances.len()
    }

    /// Flattens as `[weight_logits, means (row-major), log_variances (row-major)]`.
    pub fn to_flat(&self) -> Vec<T> {
        self.weight_logits
            .iter()
            .chain(self.means.iter())
            .chain(self.log_variances.iter())
            .copied()
            .collect()
    }

    /// Parameters with the same shape and mode, filled from a flat vector.
    pub fn with_flat(&self, flat: &[T]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(TinderError::Contract(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                self.num_params()
            )));
        }
        let k = self.k();
        let (m, rest) = flat[k..].split_at(self.means.len());
        let params = Self {
            weight_logits: Array1::from(flat[..k].to_vec()),
            means: Array2::from_shape_vec(self.means.dim(), m.to_vec()).expect("shape"),
            log_variances: Array2::from_shape_vec(self.log_variances.dim(), rest.to_vec())
                .expect("shape"),
            covariance_mode: self.covariance_mode,
        };
        params.check_finite()?;
        Ok(params)
    }

    /// Reorders components: component `c` of the result is component `perm[c]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            weight_logits: self.weight_logits.select(Axis(0), perm),
            means: self.means.select(Axis(0), perm),
            log_variances: self.log_variances.select(Axis(0), perm),
            covariance_mode: self.covariance_mode,
        }
    }
}

/// Row-stochastic N×K matrix of responsibilities p(h | x_i, θ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SoftAssignment<T> {
    resp: Array2<T>,
}

impl<T: Scalar> SoftAssignment<T> {
    /// Validates that entries lie in [0, 1] and rows sum to one within 1e-6
    /// (1e-9 is the guarantee of [`responsibilities`] in `f64`).
    pub fn new(resp: Array2<T>) -> Result<Self> {
        let (n, k) = resp.dim();
        if n == 0 || k == 0 {
            return Err(TinderError::Contract(format!("empty assignment {n}x{k}")));
        }
        let tol = T::lit(1e-6);
        for (i, row) in resp.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
                return Err(TinderError::Contract(format!("row {i} has entries outside [0, 1]")));
            }
            let total: T = row.iter().copied().sum();
            if (total - T::one()).abs() > tol {
                return Err(TinderError::Contract(format!("row {i} sums to {total}")));
            }
        }
        Ok(Self { resp })
    }

    /// One-hot assignment for hard labels in `[0, k)`.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TinderError::Contract(format!("label {bad} out of range for k={k}")));
        }
        let mut resp = Array2::zeros((labels.len(), k));
        for (i, &l) in labels.iter().enumerate() {
            resp[[i, l]] = T::one();
        }
        Self::new(resp)
    }

    /// Every row equal to `1/k`.
    pub fn uniform(n: usize, k: usize) -> Self {
        Self { resp: Array2::from_elem((n, k), T::one() / T::from_count(k)) }
    }

    pub fn n(&self) -> usize {
        self.resp.nrows()
    }

    pub fn k(&self) -> usize {
        self.resp.ncols()
    }

    pub fn resp(&self) -> &Array2<T> {
        &self.resp
    }

    /// Column `c` of the result is column `perm[c]` of `self`.
    pub fn permuted_columns(&self, perm: &[usize]) -> Self {
        Self { resp: self.resp.select(Axis(1), perm) }
    }
}

/// Gradient with respect to the unconstrained parameterization, laid out
/// like [`MixtureParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient<T> {
    pub weight_logits: Array1<T>,
    pub means: Array2<T>,
    pub log_variances: Array2<T>,
}

impl<T: Scalar> ParamGradient<T> {
    pub fn zeros_like(params: &MixtureParams<T>) -> Self {
        Self {
            weight_logits: Array1::zeros(params.weight_logits.len()),
            means: Array2::zeros(params.means.dim()),
            log_variances: Array2::zeros(params.log_variances.dim()),
        }
    }

    /// Same layout as [`MixtureParams::to_flat`].
    pub fn to_flat(&self) -> Vec<T> {
        self.weight_logits
            .iter()
            .chain(self.means.iter())
            .chain(self.log_variances.iter())
            .copied()
            .collect()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: T, other: &Self) {
        self.weight_logits.scaled_add(scale, &other.weight_logits);
        self.means.scaled_add(scale, &other.means);
        self.log_variances.scaled_add(scale, &other.log_variances);
    }

    pub fn max_abs(&self) -> T {
        self.to_flat().into_iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

fn check_compatible<T: Scalar>(data: &DataMatrix<T>, params: &MixtureParams<T>) -> Result<()> {
    if data.d() != params.d() {
        return Err(TinderError::Contract(format!(
            "data has {} dimensions, parameters have {}",
            data.d(),
            params.d()
        )));
    }
    params.check_finite()
}

/// N×K matrix of `log N(x_i; μ_k, Σ_k)` (no mixture weight).
pub fn component_log_densities<T: Scalar>(
    data: &DataMatrix<T>,
    params: &MixtureParams<T>,
) -> Result<Array2<T>> {
    check_compatible(data, params)?;
    let variances = params.variances();
    let half = T::lit(0.5);
    let log_two_pi = T::lit(std::f64::consts::TAU.ln());
    let consts: Vec<T> = variances
        .rows()
        .into_iter()
        .map(|v| -half * (T::from_count(v.len()) * log_two_pi + v.iter().map(|s| s.ln()).sum::<T>()))
        .collect();
    let x = data.values();
    let mut out = Array2::zeros((data.n(), params.k()));
    for (i, xi) in x.rows().into_iter().enumerate() {
        for c in 0..params.k() {
            let mu = params.means.row(c);
            let var = variances.row(c);
            let mut quad = T::zero();
            for j in 0..xi.len() {
                let diff = xi[j] - mu[j];
                quad += diff * diff / var[j];
            }
            out[[i, c]] = consts[c] - half * quad;
        }
    }
    Ok(out)
}

/// N×K matrix of `log w_k + log N(x_i; μ_k, Σ_k)`.
pub fn weighted_log_densities<T: Scalar>(
    data: &DataMatrix<T>,
    params: &MixtureParams<T>,
) -> Result<Array2<T>> {
    let mut z = component_log_densities(data, params)?;
    let lse = log_sum_exp(params.weight_logits.as_slice().expect("contiguous"));
    for (c, mut col) in z.columns_mut().into_iter().enumerate() {
        let log_w = params.weight_logits[c] - lse;
        col.mapv_inplace(|v| v + log_w);
    }
    Ok(z)
}

/// Soft cluster assignments p(h | x_i, θ), normalized per row in the log domain.
pub fn responsibilities<T: Scalar>(
    data: &DataMatrix<T>,
    params: &MixtureParams<T>,
) -> Result<SoftAssignment<T>> {
    let mut z = weighted_log_densities(data, params)?;
    for mut row in z.rows_mut() {
        let lse = log_sum_exp(row.as_slice().expect("contiguous"));
        row.mapv_inplace(|v| (v - lse).exp());
    }
    Ok(SoftAssignment { resp: z })
}

/// `Σ_i ln Σ_k w_k N(x_i; μ_k, Σ_k)`.
pub fn log_likelihood<T: Scalar>(data: &DataMatrix<T>, params: &MixtureParams<T>) -> Result<T> {
    let z = weighted_log_densities(data, params)?;
    Ok(z.rows()
        .into_iter()
        .map(|row| log_sum_exp(row.as_slice().expect("contiguous")))
        .sum())
}

/// Log-likelihood together with the responsibilities, sharing one density pass.
pub fn log_likelihood_and_responsibilities<T: Scalar>(
    data: &DataMatrix<T>,
    params: &MixtureParams<T>,
) -> Result<(T, SoftAssignment<T>)> {
    let mut z = weighted_log_densities(data, params)?;
    let mut ll = T::zero();
    for mut row in z.rows_mut() {
        let lse = log_sum_exp(row.as_slice().expect("contiguous"));
        ll += lse;
        row.mapv_inplace(|v| (v - lse).exp());
    }
    Ok((ll, SoftAssignment { resp: z }))
}

/// Analytic gradient of [`log_likelihood`].
pub fn ll_gradient<T: Scalar>(
    data: &DataMatrix<T>,
    params: &MixtureParams<T>,
) -> Result<ParamGradient<T>> {
    let resp = responsibilities(data, params)?;
    Ok(backprop_log_joint(data, params, resp.resp()))
}

/// Chain rule from `upstream[i][k] = ∂F/∂z_ik`, where
/// `z_ik = log w_k + log N(x_i; μ_k, Σ_k)`, down to the unconstrained
/// parameters. For the log-likelihood the upstream is the responsibility
/// matrix itself.
pub(crate) fn backprop_log_joint<T: Scalar>(
    data: &DataMatrix<T>,
    params: &MixtureParams<T>,
    upstream: &Array2<T>,
) -> ParamGradient<T> {
    let (k, d) = params.means.dim();
    let weights = params.weights();
    let variances = params.variances();
    let floor = T::lit(VARIANCE_FLOOR);
    let half = T::lit(0.5);
    let spherical = params.covariance_mode == CovarianceMode::Spherical;
    let mut grad = ParamGradient::zeros_like(params);

    let col_totals: Vec<T> = upstream.columns().into_iter().map(|c| c.iter().copied().sum()).collect();
    let total: T = col_totals.iter().copied().sum();
    for c in 0..k {
        grad.weight_logits[c] = col_totals[c] - weights[c] * total;
    }

    // d z / d sigma^2 = (1/(2 sigma^2)) ((x-mu)^2/sigma^2 - 1)
    let x = data.values();
    for c in 0..k {
        let mu = params.means.row(c);
        let var = variances.row(c);
        for (i, xi) in x.rows().into_iter().enumerate() {
            let e = upstream[[i, c]];
            if e == T::zero() {
                continue;
            }
            for j in 0..d {
                let diff = xi[j] - mu[j];
                let scaled = diff / var[j];
                grad.means[[c, j]] += e * scaled;
                let dvar = half * (scaled * diff - T::one()) / var[j];
                let col = if spherical { 0 } else { j };
                grad.log_variances[[c, col]] += e * dvar;
            }
        }
        // d sigma^2 / d log_variance = sigma^2 - floor
        for col in 0..grad.log_variances.ncols() {
            let v = if spherical { var[0] } else { var[col] };
            grad.log_variances[[c, col]] *= v - floor;
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one_d(x: &[f64]) -> DataMatrix<f64> {
        DataMatrix::new(Array2::from_shape_vec((x.len(), 1), x.to_vec()).unwrap(), None).unwrap()
    }

    fn two_unit_gaussians(m0: f64, m1: f64) -> MixtureParams<f64> {
        MixtureParams::from_natural(
            &[0.5, 0.5],
            array![[m0], [m1]],
            array![[1.0], [1.0]],
            CovarianceMode::Diagonal,
        )
        .unwrap()
    }

    #[test]
    fn single_component_takes_everything() {
        let data = one_d(&[-3.0, 0.0, 12.5]);
        let params = MixtureParams::new(
            array![0.7],
            array![[1.0]],
            array![[0.3]],
            CovarianceMode::Diagonal,
        )
        .unwrap();
        let r = responsibilities(&data, &params).unwrap();
        assert!(r.resp().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let r = responsibilities(&one_d(&[0.0]), &two_unit_gaussians(-1.0, 1.0)).unwrap();
        assert!((r.resp()[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((r.resp()[[0, 1]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn responsibilities_match_hand_evaluation() {
        // log-density gap between N(0;0,1) and N(0;2,1) is exactly 2.
        let r = responsibilities(&one_d(&[0.0]), &two_unit_gaussians(0.0, 2.0)).unwrap();
        let e = (-2.0_f64).exp();
        assert!((r.resp()[[0, 0]] - 1.0 / (1.0 + e)).abs() < 1e-6);
        assert!((r.resp()[[0, 1]] - e / (1.0 + e)).abs() < 1e-6);
        assert!((r.resp()[[0, 0]] - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn standard_normal_at_mean() {
        let params = MixtureParams::from_natural(
            &[1.0],
            array![[0.0]],
            array![[1.0]],
            CovarianceMode::Diagonal,
        )
        .unwrap();
        let ll = log_likelihood(&one_d(&[0.0]), &params).unwrap();
        let expected = -0.5 * std::f64::consts::TAU.ln();
        assert!((ll - expected).abs() < 1e-12);
        assert!((ll + 0.9189).abs() < 1e-4);
    }

    #[test]
    fn two_component_log_likelihood_matches_direct_density() {
        let phi = |x: f64| (-0.5 * x * x).exp() / std::f64::consts::TAU.sqrt();
        let expected = (0.5 * phi(0.0) + 0.5 * phi(2.0)).ln();
        let ll = log_likelihood(&one_d(&[0.0]), &two_unit_gaussians(0.0, 2.0)).unwrap();
        assert!((ll - expected).abs() < 1e-6);
        assert!((ll + 1.48516).abs() < 1e-5);
    }

    #[test]
    fn duplicated_rows_double_the_log_likelihood() {
        let data = one_d(&[0.3, -1.2, 4.0, 2.2]);
        let params = two_unit_gaussians(0.0, 2.0);
        let once = log_likelihood(&data, &params).unwrap();
        let twice = log_likelihood(&data.repeated(2), &params).unwrap();
        assert!((twice - 2.0 * once).abs() < 1e-10);
    }

    #[test]
    fn extreme_inputs_do_not_overflow() {
        let data = one_d(&[1e6, -1e6, 0.0]);
        let params = two_unit_gaussians(-1.0, 1.0);
        let r = responsibilities(&data, &params).unwrap();
        for row in r.resp().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        assert!(log_likelihood(&data, &params).unwrap().is_finite());
    }

    #[test]
    fn dimension_mismatch_is_contract_violation() {
        let data = DataMatrix::new(array![[0.0, 1.0]], None).unwrap();
        let err = responsibilities(&data, &two_unit_gaussians(0.0, 1.0)).unwrap_err();
        assert!(matches!(err, TinderError::Contract(_)));
    }

    #[test]
    fn non_finite_params_rejected() {
        let err = MixtureParams::new(
            array![f64::NAN, 0.0],
            array![[0.0], [1.0]],
            array![[0.0], [0.0]],
            CovarianceMode::Diagonal,
        )
        .unwrap_err();
        assert!(matches!(err, TinderError::InvalidParams(_)));
    }

    #[test]
    fn spherical_shape_enforced() {
        let ok = MixtureParams::new(
            array![0.0, 0.0],
            array![[0.0, 0.0], [1.0, 1.0]],
            array![[0.0], [0.0]],
            CovarianceMode::Spherical,
        );
        assert!(ok.is_ok());
        let bad = MixtureParams::new(
            array![0.0, 0.0],
            array![[0.0, 0.0], [1.0, 1.0]],
            array![[0.0, 0.0], [0.0, 0.0]],
            CovarianceMode::Spherical,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn mle_of_single_component_has_zero_mean_gradient() {
        let x = [0.5, -1.5, 2.0, 3.25, -0.75];
        let mean = x.iter().sum::<f64>() / 5.0;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 5.0;
        let params = MixtureParams::from_natural(
            &[1.0],
            array![[mean]],
            array![[var]],
            CovarianceMode::Diagonal,
        )
        .unwrap();
        let g = ll_gradient(&one_d(&x), &params).unwrap();
        assert!(g.means[[0, 0]].abs() < 1e-8);
        assert!(g.log_variances[[0, 0]].abs() < 1e-8);
        assert_eq!(g.weight_logits[0], 0.0);
    }

    #[test]
    fn mirrored_setup_gives_opposite_logit_gradients() {
        let data = one_d(&[-2.0, -0.5, 0.5, 2.0]);
        let params = MixtureParams::from_natural(
            &[0.3, 0.7],
            array![[-1.0], [1.0]],
            array![[0.8], [0.8]],
            CovarianceMode::Diagonal,
        )
        .unwrap();
        let mirrored = MixtureParams::from_natural(
            &[0.7, 0.3],
            array![[-1.0], [1.0]],
            array![[0.8], [0.8]],
            CovarianceMode::Diagonal,
        )
        .unwrap();
        let g = ll_gradient(&data, &params).unwrap();
        assert!((g.weight_logits[0] + g.weight_logits[1]).abs() < 1e-12);
        let gm = ll_gradient(&data, &mirrored).unwrap();
        assert!((g.weight_logits[0] - gm.weight_logits[1]).abs() < 1e-12);
    }

    #[test]
    fn flat_round_trip_preserves_params() {
        let params = two_unit_gaussians(-0.25, 3.0);
        let back = params.with_flat(&params.to_flat()).unwrap();
        assert_eq!(params, back);
        assert!(params.with_flat(&[0.0]).is_err());
    }
}
