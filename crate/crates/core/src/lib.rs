//! Interactive clustering with a reject option.
//!
//! Gaussian mixtures are fitted by penalized MAP estimation. Every time the
//! analyst rejects a clustering, the next fit is penalized by the mutual
//! information between its soft assignment and that of every clustering
//! shown so far, which yields a sequence of different clusterings that
//! still explain the data well.
//!
//! The numerical core is generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix it to `f64`, which is what the CLI and service use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mixture;
pub mod optimizer;
pub mod penalty;
pub mod scalar;
pub mod session;

pub use data::DataMatrix;
pub use error::{Result, TinderError};
pub use metrics::{adjusted_rand, harden, nmi, purity, ContingencyTable, HardClustering};
pub use mixture::{
    ll_gradient, log_likelihood, responsibilities, CovarianceMode, MixtureParams, ParamGradient,
    SoftAssignment, VARIANCE_FLOOR,
};
pub use optimizer::{baseline_restarts, fit, objective, BetaPolicy, FitConfig, FitResult};
pub use penalty::{cocluster_joint, mutual_information, penalty, penalty_gradient, CoclusterJoint};
pub use scalar::Scalar;
pub use session::{
    DatasetRef, DiversityReport, FeedbackHistory, HistoryEntry, SessionFile, SessionState,
    SessionStatus,
};

pub type Data = DataMatrix<f64>;
pub type Params = MixtureParams<f64>;
pub type Assignment = SoftAssignment<f64>;
pub type Fit = FitResult<f64>;
pub type Session = SessionState<f64>;
pub type Entry = HistoryEntry<f64>;

pub type Data32 = DataMatrix<f32>;
pub type Params32 = MixtureParams<f32>;
pub type Session32 = SessionState<f32>;
