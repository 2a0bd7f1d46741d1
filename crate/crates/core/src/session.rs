//! The accept/reject feedback loop.
//!
//! A session starts with an unpenalized fit (iteration 0). Every rejection
//! fits again with a mutual-information penalty against the frozen soft
//! assignments of all iterations shown so far and appends the result.
//! Accepting freezes the session.

use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, TinderError};
use crate::metrics::{adjusted_rand, harden, nmi, purity, HardClustering};
use crate::mixture::{responsibilities, MixtureParams, SoftAssignment};
use crate::optimizer::{derive_seed, fit, BetaPolicy, FitConfig};
use crate::penalty::penalty_for_assignment;
use crate::scalar::Scalar;

/// Pairwise ARS above which a new clustering is flagged as not novel.
pub const DEFAULT_NOVELTY_CEILING: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Accepted,
}

/// Which CSV column holds ground-truth labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

/// Where a session's data came from, with enough detail to reload it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: Option<String>,
    /// Hex SHA-256 of the raw file bytes.
    pub sha256: String,
    pub has_header: bool,
    pub label_column: Option<LabelColumn>,
}

/// One shown clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HistoryEntry<T> {
    pub iteration: usize,
    pub params: MixtureParams<T>,
    /// Frozen at fit time; later iterations penalize against exactly this.
    pub assignment: SoftAssignment<T>,
    pub objective: T,
    pub log_likelihood: T,
    /// Σ of mutual informations against all earlier entries.
    pub penalty_value: T,
    pub beta: f64,
    pub seed: u64,
    pub restart_index: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
}

impl<T: Scalar> HistoryEntry<T> {
    pub fn hard(&self) -> HardClustering {
        harden(&self.assignment)
    }
}

/// Append-only list of shown clusterings, indexed 0, 1, 2, ...
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeedbackHistory<T> {
    entries: Vec<HistoryEntry<T>>,
}

impl<T: Scalar> FeedbackHistory<T> {
    pub fn entries(&self) -> &[HistoryEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, iteration: usize) -> Option<&HistoryEntry<T>> {
        self.entries.get(iteration)
    }

    pub fn last(&self) -> Option<&HistoryEntry<T>> {
        self.entries.last()
    }

    /// Frozen assignments of every entry, in order.
    pub fn assignments(&self) -> Vec<&SoftAssignment<T>> {
        self.entries.iter().map(|e| &e.assignment).collect()
    }

    fn push(&mut self, entry: HistoryEntry<T>) -> Result<()> {
        if entry.iteration != self.entries.len() {
            return Err(TinderError::IllegalState(format!(
                "entry {} appended at position {}",
                entry.iteration,
                self.entries.len()
            )));
        }
        self.entries.push(entry);
        Ok(())
    }
}

/// Pairwise similarity of every shown clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub ars: Vec<Vec<f64>>,
    pub nmi: Vec<Vec<f64>>,
    /// Per entry, the largest ARS to any other entry (None with one entry).
    pub closest_ars: Vec<Option<f64>>,
    /// Per entry, ARS to the entry immediately before it.
    pub ars_to_previous: Vec<Option<f64>>,
    /// Per-entry purity against ground truth, when labels are known.
    pub purity: Option<Vec<f64>>,
}

impl DiversityReport {
    pub fn from_clusterings(clusterings: &[HardClustering], truth: Option<&HardClustering>) -> Result<Self> {
        let t = clusterings.len();
        let mut ars = vec![vec![1.0; t]; t];
        let mut nmi_m = vec![vec![1.0; t]; t];
        for a in 0..t {
            for b in (a + 1)..t {
                let v = adjusted_rand(&clusterings[a], &clusterings[b])?;
                ars[a][b] = v;
                ars[b][a] = v;
                let w = nmi(&clusterings[a], &clusterings[b])?;
                nmi_m[a][b] = w;
                nmi_m[b][a] = w;
            }
        }
        let closest_ars = (0..t)
            .map(|a| {
                (0..t)
                    .filter(|&b| b != a)
                    .map(|b| ars[a][b])
                    .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
            })
            .collect();
        let ars_to_previous = (0..t).map(|a| (a > 0).then(|| ars[a][a - 1])).collect();
        let purity = truth
            .map(|truth| clusterings.iter().map(|c| purity(c, truth)).collect::<Result<Vec<_>>>())
            .transpose()?;
        Ok(Self { ars, nmi: nmi_m, closest_ars, ars_to_previous, purity })
    }

    /// Largest off-diagonal ARS (0 for a single entry).
    pub fn max_pairwise_ars(&self) -> f64 {
        self.closest_ars.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Mean off-diagonal ARS (0 for a single entry).
    pub fn mean_pairwise_ars(&self) -> f64 {
        let t = self.ars.len();
        if t < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for a in 0..t {
            for b in (a + 1)..t {
                total += self.ars[a][b];
            }
        }
        total / (t * (t - 1) / 2) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState<T: Scalar> {
    session_id: String,
    data: Arc<DataMatrix<T>>,
    dataset: DatasetRef,
    config: FitConfig,
    history: FeedbackHistory<T>,
    status: SessionStatus,
    novelty_ceiling: f64,
}

/// Rejects configurations the session could never serve.
pub fn validate_session_config(config: &FitConfig) -> Result<()> {
    config.validate()?;
    if config.k == 1 && config.beta == BetaPolicy::Auto {
        return Err(TinderError::InvalidConfig(
            "auto beta needs k >= 2 (log k would be zero)".into(),
        ));
    }
    Ok(())
}

impl<T: Scalar> SessionState<T> {
    /// Fits feedback iteration 0 (no penalty).
    pub fn start(
        session_id: impl Into<String>,
        data: Arc<DataMatrix<T>>,
        dataset: DatasetRef,
        config: FitConfig,
    ) -> Result<Self> {
        validate_session_config(&config)?;
        let mut state = Self {
            session_id: session_id.into(),
            data,
            dataset,
            config,
            history: FeedbackHistory::default(),
            status: SessionStatus::Active,
            novelty_ceiling: DEFAULT_NOVELTY_CEILING,
        };
        state.fit_next(0.0)?;
        Ok(state)
    }

    pub fn with_novelty_ceiling(mut self, ceiling: f64) -> Self {
        self.novelty_ceiling = ceiling;
        self
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn data(&self) -> &Arc<DataMatrix<T>> {
        &self.data
    }

    pub fn dataset(&self) -> &DatasetRef {
        &self.dataset
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn history(&self) -> &FeedbackHistory<T> {
        &self.history
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn novelty_ceiling(&self) -> f64 {
        self.novelty_ceiling
    }

    pub fn current(&self) -> &HistoryEntry<T> {
        self.history.last().expect("session history is never empty")
    }

    /// The fixed β, or `|LL(θ₀)| / (t · ln K)` for the auto policy where `t`
    /// is the current history length.
    pub fn resolve_beta(&self) -> Result<f64> {
        let first = self
            .history
            .get(0)
            .ok_or_else(|| TinderError::IllegalState("session has no iteration 0".into()))?;
        match self.config.beta {
            BetaPolicy::Fixed(b) => Ok(b),
            BetaPolicy::Auto => auto_beta(first.log_likelihood.as_f64(), self.config.k, self.history.len()),
        }
    }

    /// Produces the next clustering, penalized against every shown one.
    pub fn reject(&mut self) -> Result<&HistoryEntry<T>> {
        self.ensure_active("reject")?;
        let beta = self.resolve_beta()?;
        self.fit_next(beta)?;
        Ok(self.current())
    }

    pub fn accept(&mut self) -> Result<()> {
        self.ensure_active("accept")?;
        self.status = SessionStatus::Accepted;
        Ok(())
    }

    /// Whether the latest entry's ARS to every earlier entry is at most the
    /// novelty ceiling. Reported, never enforced.
    pub fn latest_is_novel(&self) -> Result<bool> {
        let latest = self.current().hard();
        for entry in &self.history.entries()[..self.history.len() - 1] {
            if adjusted_rand(&latest, &entry.hard())? > self.novelty_ceiling {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn diversity_report(&self) -> Result<DiversityReport> {
        let hard: Vec<HardClustering> = self.history.entries().iter().map(HistoryEntry::hard).collect();
        let truth = self.data.labels().map(|l| HardClustering::new(l.to_vec()));
        DiversityReport::from_clusterings(&hard, truth.as_ref())
    }

    fn ensure_active(&self, action: &str) -> Result<()> {
        match self.status {
            SessionStatus::Active => Ok(()),
            SessionStatus::Accepted => Err(TinderError::IllegalState(format!(
                "cannot {action}: session {} is already accepted",
                self.session_id
            ))),
        }
    }

    fn fit_next(&mut self, beta: f64) -> Result<()> {
        let iteration = self.history.len();
        let seed = derive_seed(self.config.seed, iteration as u64);
        let config = FitConfig { beta: BetaPolicy::Fixed(beta), seed, ..self.config.clone() };
        let targets = self.history.assignments();
        let started = Instant::now();
        let result = fit(self.data.as_ref(), &targets, &config)?;
        let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        let penalty_value = penalty_for_assignment(&result.assignment, &targets)?;
        let objective = result.log_likelihood - T::lit(beta) * penalty_value;
        self.history.push(HistoryEntry {
            iteration,
            params: result.params,
            assignment: result.assignment,
            objective,
            log_likelihood: result.log_likelihood,
            penalty_value,
            beta,
            seed,
            restart_index: result.restart_index,
            converged: result.converged,
            wall_time_ms,
        })
    }
}

/// `|LL₀| / (t · ln K)`.
pub fn auto_beta(ll0: f64, k: usize, t: usize) -> Result<f64> {
    if k < 2 {
        return Err(TinderError::InvalidConfig("auto beta needs k >= 2".into()));
    }
    if t == 0 {
        return Err(TinderError::IllegalState("auto beta needs a non-empty history".into()));
    }
    Ok(ll0.abs() / (t as f64 * (k as f64).ln()))
}

/// On-disk form of a session: one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SessionFile<T> {
    pub format_version: u32,
    pub session_id: String,
    pub dataset: DatasetRef,
    pub config: FitConfig,
    pub status: SessionStatus,
    pub novelty_ceiling: f64,
    /// Whether full responsibilities are stored; otherwise they are
    /// recomputed from the stored parameters on load.
    pub store_soft: bool,
    pub entries: Vec<StoredEntry<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StoredEntry<T> {
    pub iteration: usize,
    pub params: MixtureParams<T>,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responsibilities: Option<Array2<T>>,
    pub objective: T,
    pub log_likelihood: T,
    pub penalty_value: T,
    pub beta: f64,
    pub seed: u64,
    pub restart_index: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
}

pub const SESSION_FORMAT_VERSION: u32 = 1;

impl<T: Scalar> SessionState<T> {
    pub fn to_file(&self, store_soft: bool) -> SessionFile<T> {
        let entries = self
            .history
            .entries()
            .iter()
            .map(|e| StoredEntry {
                iteration: e.iteration,
                params: e.params.clone(),
                labels: e.hard().labels().to_vec(),
                responsibilities: store_soft.then(|| e.assignment.resp().clone()),
                objective: e.objective,
                log_likelihood: e.log_likelihood,
                penalty_value: e.penalty_value,
                beta: e.beta,
                seed: e.seed,
                restart_index: e.restart_index,
                converged: e.converged,
                wall_time_ms: e.wall_time_ms,
            })
            .collect();
        SessionFile {
            format_version: SESSION_FORMAT_VERSION,
            session_id: self.session_id.clone(),
            dataset: self.dataset.clone(),
            config: self.config.clone(),
            status: self.status,
            novelty_ceiling: self.novelty_ceiling,
            store_soft,
            entries,
        }
    }

    /// Rebuilds a session from its file and the dataset it references.
    /// Assignments not stored in the file are recomputed from the stored
    /// parameters and checked against the stored hard labels.
    pub fn from_file(file: SessionFile<T>, data: Arc<DataMatrix<T>>) -> Result<Self> {
        if file.format_version != SESSION_FORMAT_VERSION {
            return Err(TinderError::Format(format!(
                "unsupported session format version {}",
                file.format_version
            )));
        }
        let mut history = FeedbackHistory::default();
        for stored in file.entries {
            let assignment = match stored.responsibilities {
                Some(resp) => SoftAssignment::new(resp)?,
                None => responsibilities(data.as_ref(), &stored.params)?,
            };
            if harden(&assignment).labels() != stored.labels.as_slice() {
                return Err(TinderError::Format(format!(
                    "entry {} labels do not match its parameters on this dataset",
                    stored.iteration
                )));
            }
            history.push(HistoryEntry {
                iteration: stored.iteration,
                params: stored.params,
                assignment,
                objective: stored.objective,
                log_likelihood: stored.log_likelihood,
                penalty_value: stored.penalty_value,
                beta: stored.beta,
                seed: stored.seed,
                restart_index: stored.restart_index,
                converged: stored.converged,
                wall_time_ms: stored.wall_time_ms,
            })?;
        }
        if history.is_empty() {
            return Err(TinderError::Format("session file has no iteration 0".into()));
        }
        Ok(Self {
            session_id: file.session_id,
            data,
            dataset: file.dataset,
            config: file.config,
            history,
            status: file.status,
            novelty_ceiling: file.novelty_ceiling,
        })
    }
}
