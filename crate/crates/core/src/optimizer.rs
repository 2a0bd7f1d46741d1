//! Penalized MAP fitting by multi-restart first-order ascent.
//!
//! Each restart is seeded k-means++ style and climbs
//! `L(θ) = log_likelihood − β · Σ_s f(θ, θ_s)` along a diagonally scaled
//! gradient with Armijo backtracking, so every accepted step increases `L`.
//! The prior π₀ is flat and contributes nothing.

use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, TinderError};
use crate::mixture::{
    backprop_log_joint, log_likelihood, log_likelihood_and_responsibilities, CovarianceMode,
    MixtureParams, SoftAssignment, VARIANCE_FLOOR,
};
use crate::penalty::{penalty, penalty_for_assignment, penalty_resp_gradient, softmax_backprop};
use crate::scalar::Scalar;

/// Weight of the diversity penalty: a fixed number or derived from the
/// iteration-0 log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaPolicy {
    Fixed(f64),
    Auto,
}

impl BetaPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Fixed(b) if !(b.is_finite() && b >= 0.0) => Err(TinderError::InvalidConfig(
                format!("beta must be a non-negative finite number, got {b}"),
            )),
            _ => Ok(()),
        }
    }
}

impl FromStr for BetaPolicy {
    type Err = TinderError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        let value: f64 = s
            .parse()
            .map_err(|_| TinderError::InvalidConfig(format!("beta must be a number or \"auto\", got {s:?}")))?;
        let policy = Self::Fixed(value);
        policy.validate()?;
        Ok(policy)
    }
}

impl std::fmt::Display for BetaPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Fixed(b) => write!(f, "{b}"),
            Self::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub beta: BetaPolicy,
    pub restarts: usize,
    pub max_steps: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub covariance_mode: CovarianceMode,
}

impl FitConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            beta: BetaPolicy::Fixed(1.0),
            restarts: 8,
            max_steps: 500,
            rel_tol: 1e-7,
            seed: 0,
            covariance_mode: CovarianceMode::Diagonal,
        }
    }

    pub fn with_beta(mut self, beta: BetaPolicy) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_covariance_mode(mut self, mode: CovarianceMode) -> Self {
        self.covariance_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(TinderError::InvalidConfig("k must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(TinderError::InvalidConfig("restarts must be at least 1".into()));
        }
        if !(self.rel_tol.is_finite() && self.rel_tol >= 0.0) {
            return Err(TinderError::InvalidConfig(format!("bad rel_tol {}", self.rel_tol)));
        }
        self.beta.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitResult<T> {
    pub params: MixtureParams<T>,
    pub assignment: SoftAssignment<T>,
    /// `log_likelihood − beta · penalty_value` (flat prior).
    pub objective: T,
    pub log_likelihood: T,
    /// Penalty included in the objective; zero when `beta` is zero because
    /// the history is then ignored altogether.
    pub penalty_value: T,
    pub beta: T,
    /// Objective after initialization and after every accepted step.
    pub trace: Vec<T>,
    pub restart_index: usize,
    pub converged: bool,
}

/// `log_likelihood(θ) − β · penalty(θ)`.
pub fn objective<T: Scalar>(
    theta: &MixtureParams<T>,
    data: &DataMatrix<T>,
    history: &[&SoftAssignment<T>],
    beta: T,
) -> Result<T> {
    if !(beta >= T::zero()) {
        return Err(TinderError::Contract(format!("beta must be non-negative, got {beta}")));
    }
    let ll = log_likelihood(data, theta)?;
    if history.is_empty() || beta == T::zero() {
        return Ok(ll);
    }
    Ok(ll - beta * penalty(theta, history, data)?)
}

/// Deterministic per-index seed derivation (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maximizes the penalized objective. `config.beta` must be a fixed value;
/// `auto` is resolved by the feedback session.
pub fn fit<T: Scalar>(
    data: &DataMatrix<T>,
    history: &[&SoftAssignment<T>],
    config: &FitConfig,
) -> Result<FitResult<T>> {
    config.validate()?;
    let beta = match config.beta {
        BetaPolicy::Fixed(b) => T::lit(b),
        BetaPolicy::Auto => {
            return Err(TinderError::InvalidConfig(
                "auto beta must be resolved against a session history before fitting".into(),
            ))
        }
    };
    if config.k > data.n() {
        return Err(TinderError::InvalidConfig(format!(
            "k = {} exceeds the number of points {}",
            config.k,
            data.n()
        )));
    }
    for (s, target) in history.iter().enumerate() {
        if target.n() != data.n() {
            return Err(TinderError::Contract(format!(
                "history entry {s} covers {} points, data has {}",
                target.n(),
                data.n()
            )));
        }
    }
    let targets: &[&SoftAssignment<T>] = if beta == T::zero() { &[] } else { history };

    let results: Vec<Result<FitResult<T>>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let init = initialize(data, config.k, config.covariance_mode, &mut rng)?;
            ascend(data, targets, beta, init, config, r)
        })
        .collect();

    let mut best: Option<FitResult<T>> = None;
    for result in results {
        let result = result?;
        // strict comparison keeps the lowest restart index on ties
        if best.as_ref().is_none_or(|b| result.objective > b.objective) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// `count` independent unpenalized fits with seeds `derive_seed(config.seed, i)`.
pub fn baseline_restarts<T: Scalar>(
    data: &DataMatrix<T>,
    config: &FitConfig,
    count: usize,
) -> Result<Vec<FitResult<T>>> {
    if count < 2 {
        return Err(TinderError::InvalidConfig(format!(
            "baseline needs at least 2 restarts, got {count}"
        )));
    }
    let seeds: Vec<u64> = (0..count as u64).map(|i| derive_seed(config.seed, i)).collect();
    baseline_with_seeds(data, config, &seeds)
}

/// Unpenalized fits, one per explicit seed.
pub fn baseline_with_seeds<T: Scalar>(
    data: &DataMatrix<T>,
    config: &FitConfig,
    seeds: &[u64],
) -> Result<Vec<FitResult<T>>> {
    seeds
        .iter()
        .map(|&seed| {
            let cfg = FitConfig { beta: BetaPolicy::Fixed(0.0), seed, ..config.clone() };
            fit(data, &[], &cfg)
        })
        .collect()
}

/// k-means++ means, uniform weights, per-dimension data variances.
fn initialize<T: Scalar>(
    data: &DataMatrix<T>,
    k: usize,
    mode: CovarianceMode,
    rng: &mut ChaCha8Rng,
) -> Result<MixtureParams<T>> {
    let n = data.n();
    let d = data.d();
    let x = data.values();
    let mut centers: Vec<usize> = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(x, i, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(pick);
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(sq_dist(x, i, pick));
        }
    }

    let means = Array2::from_shape_fn((k, d), |(c, j)| x[[centers[c], j]]);
    let floor = T::lit(VARIANCE_FLOOR);
    let col_var: Vec<T> = data
        .column_variances()
        .into_iter()
        .map(|v| if v > floor * T::lit(2.0) { v } else { T::one() })
        .collect();
    let log_var = |v: T| (v - floor).ln();
    let log_variances = match mode {
        CovarianceMode::Diagonal => Array2::from_shape_fn((k, d), |(_, j)| log_var(col_var[j])),
        CovarianceMode::Spherical => {
            let mean_var = col_var.iter().copied().sum::<T>() / T::from_count(d);
            Array2::from_elem((k, 1), log_var(mean_var))
        }
    };
    MixtureParams::new(Array1::zeros(k), means, log_variances, mode)
}

fn sq_dist<T: Scalar>(x: &Array2<T>, a: usize, b: usize) -> f64 {
    x.row(a)
        .iter()
        .zip(x.row(b).iter())
        .map(|(&p, &q)| {
            let diff = (p - q).as_f64();
            diff * diff
        })
        .sum()
}

struct Evaluated<T> {
    params: MixtureParams<T>,
    resp: SoftAssignment<T>,
    ll: T,
    penalty: T,
    objective: T,
}

fn evaluate<T: Scalar>(
    data: &DataMatrix<T>,
    targets: &[&SoftAssignment<T>],
    beta: T,
    params: MixtureParams<T>,
) -> Result<Evaluated<T>> {
    let (ll, resp) = log_likelihood_and_responsibilities(data, &params)?;
    let penalty = if targets.is_empty() {
        T::zero()
    } else {
        penalty_for_assignment(&resp, targets)?
    };
    let objective = ll - beta * penalty;
    Ok(Evaluated { params, resp, ll, penalty, objective })
}

/// Gradient of the penalized objective at an evaluated point, flattened.
fn objective_gradient<T: Scalar>(
    data: &DataMatrix<T>,
    targets: &[&SoftAssignment<T>],
    beta: T,
    at: &Evaluated<T>,
) -> Result<Vec<T>> {
    let mut upstream = at.resp.resp().clone();
    if !targets.is_empty() {
        let g = penalty_resp_gradient(&at.resp, targets)?;
        upstream.scaled_add(-beta, &softmax_backprop(&at.resp, &g));
    }
    Ok(backprop_log_joint(data, &at.params, &upstream).to_flat())
}

/// Positive diagonal scaling: inverse soft counts for logits and variances,
/// variance over soft count for means.
fn preconditioner<T: Scalar>(data: &DataMatrix<T>, at: &Evaluated<T>) -> Vec<T> {
    let params = &at.params;
    let (k, d) = params.means().dim();
    let counts: Vec<T> = at
        .resp
        .resp()
        .columns()
        .into_iter()
        .map(|c| c.iter().copied().sum())
        .collect();
    let weights = params.weights();
    let variances = params.variances();
    let n = T::from_count(data.n());
    let two = T::lit(2.0);
    let mut scale = Vec::with_capacity(params.num_params());
    for &w in weights.iter().take(k) {
        scale.push(T::one() / (n * w + T::one()));
    }
    for c in 0..k {
        for j in 0..d {
            scale.push(variances[[c, j]] / (counts[c] + T::one()));
        }
    }
    match params.covariance_mode() {
        CovarianceMode::Diagonal => {
            for &count in counts.iter().take(k) {
                for _ in 0..d {
                    scale.push(two / (count + T::one()));
                }
            }
        }
        CovarianceMode::Spherical => {
            for &count in counts.iter().take(k) {
                scale.push(two / (T::from_count(d) * count + T::one()));
            }
        }
    }
    scale
}

const ARMIJO_C: f64 = 1e-4;
const MAX_STEP: f64 = 4.0;
const MIN_STEP: f64 = 1e-12;

fn ascend<T: Scalar>(
    data: &DataMatrix<T>,
    targets: &[&SoftAssignment<T>],
    beta: T,
    init: MixtureParams<T>,
    config: &FitConfig,
    restart_index: usize,
) -> Result<FitResult<T>> {
    let mut current = evaluate(data, targets, beta, init)?;
    if !current.objective.is_finite() {
        return Err(TinderError::InvalidData("objective not finite at initialization".into()));
    }
    let mut trace = vec![current.objective];
    let mut step = T::one();
    let mut converged = false;
    let rel_tol = T::lit(config.rel_tol);

    for _ in 0..config.max_steps {
        let grad = objective_gradient(data, targets, beta, &current)?;
        let scale = preconditioner(data, &current);
        let direction: Vec<T> = grad.iter().zip(&scale).map(|(&g, &s)| g * s).collect();
        let slope: T = grad.iter().zip(&direction).map(|(&g, &p)| g * p).sum();
        if !(slope > T::zero()) {
            converged = true;
            break;
        }
        let base = current.params.to_flat();
        step = (step * T::lit(2.0)).min(T::lit(MAX_STEP));
        let mut accepted = None;
        while step >= T::lit(MIN_STEP) {
            let candidate: Vec<T> = base.iter().zip(&direction).map(|(&b, &p)| b + step * p).collect();
            if let Ok(params) = current.params.with_flat(&candidate) {
                if let Ok(next) = evaluate(data, targets, beta, params) {
                    let required = current.objective + T::lit(ARMIJO_C) * step * slope;
                    if next.objective.is_finite() && next.objective >= required {
                        accepted = Some(next);
                        break;
                    }
                }
            }
            step *= T::lit(0.5);
        }
        let Some(next) = accepted else {
            converged = true;
            break;
        };
        let change = (next.objective - current.objective).abs();
        let scale_ref = current.objective.abs().max(T::one());
        current = next;
        trace.push(current.objective);
        if change / scale_ref < rel_tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        params: current.params,
        assignment: current.resp,
        objective: current.objective,
        log_likelihood: current.ll,
        penalty_value: current.penalty,
        beta,
        trace,
        restart_index,
        converged,
    })
}
