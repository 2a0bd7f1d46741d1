//! JSON shapes returned by the service.

use serde::{Deserialize, Serialize};
use tinder_core::mixture::component_log_densities;
use tinder_core::session::DiversityReport;
use tinder_core::{Data, Entry, Result, Session, SessionStatus};

/// Default number of representative members per cluster.
pub const TOP_MEMBERS: usize = 6;

/// How representative members of a cluster are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemberOrder {
    /// Posterior p(h | x, θ).
    #[default]
    Responsibility,
    /// Component density p(x | h, θ).
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub index: usize,
    pub size: usize,
    pub weight: f64,
    pub top_members: Vec<usize>,
    pub centroid: Vec<f64>,
}

pub fn cluster_summaries(entry: &Entry, data: &Data, top: usize, order: MemberOrder) -> Result<Vec<ClusterSummary>> {
    let hard = entry.hard();
    let sizes = hard.sizes();
    let weights = entry.params.weights();
    let scores = match order {
        MemberOrder::Responsibility => entry.assignment.resp().clone(),
        MemberOrder::Density => component_log_densities(data, &entry.params)?,
    };
    let ids = data.ids();
    Ok((0..entry.params.k())
        .map(|c| {
            let mut rows: Vec<usize> = (0..data.n()).collect();
            rows.sort_by(|&a, &b| scores[[b, c]].total_cmp(&scores[[a, c]]).then(ids[a].cmp(&ids[b])));
            ClusterSummary {
                index: c,
                size: sizes.get(c).copied().unwrap_or(0),
                weight: weights[c],
                top_members: rows.into_iter().take(top).map(|r| ids[r]).collect(),
                centroid: entry.params.means().row(c).to_vec(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub dataset_id: String,
    pub n: usize,
    pub d: usize,
    pub has_labels: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub dataset_id: String,
    pub k: usize,
    pub beta: String,
    pub seed: u64,
    pub status: SessionStatus,
    pub iteration: usize,
}

impl SessionInfo {
    pub fn of(session: &Session) -> Self {
        let config = session.config();
        Self {
            session_id: session.session_id().to_string(),
            dataset_id: session.dataset().sha256.clone(),
            k: config.k,
            beta: config.beta.to_string(),
            seed: config.seed,
            status: session.status(),
            iteration: session.current().iteration,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Started {
    pub session_id: String,
    pub iteration: usize,
    pub clusters: Vec<ClusterSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diversity {
    pub ars_to_previous: f64,
    pub ars_max_pairwise: f64,
    /// Whether the new clustering is below the novelty ceiling against
    /// every earlier one.
    pub novel: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rejected {
    pub iteration: usize,
    pub clusters: Vec<ClusterSummary>,
    pub diversity: Diversity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Accepted {
    pub status: SessionStatus,
    pub iteration: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub objective: f64,
    pub penalty_value: f64,
    pub beta: f64,
    pub converged: bool,
    pub wall_time_ms: f64,
}

impl From<&Entry> for IterationMetrics {
    fn from(e: &Entry) -> Self {
        Self {
            iteration: e.iteration,
            log_likelihood: e.log_likelihood,
            objective: e.objective,
            penalty_value: e.penalty_value,
            beta: e.beta,
            converged: e.converged,
            wall_time_ms: e.wall_time_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct History {
    pub session: SessionInfo,
    pub report: DiversityReport,
    pub iterations: Vec<IterationMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Clustering {
    pub iteration: usize,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responsibilities: Option<Vec<Vec<f64>>>,
    pub clusters: Vec<ClusterSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: usize,
    pub coords: Vec<f64>,
    pub label: usize,
}

pub fn points(entry: &Entry, data: &Data) -> Vec<Point> {
    let hard = entry.hard();
    let dims = data.d().min(2);
    (0..data.n())
        .map(|i| Point {
            id: data.ids()[i],
            coords: data.row(i).iter().take(dims).copied().collect(),
            label: hard.labels()[i],
        })
        .collect()
}
