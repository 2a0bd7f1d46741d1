//! CSV ingestion, synthetic blob scenarios, clustering export and session
//! persistence.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DataMatrix;
use crate::error::{Result, TinderError};
use crate::metrics::{harden, purity, HardClustering};
use crate::mixture::{MixtureParams, SoftAssignment};
use crate::scalar::Scalar;
use crate::session::{DatasetRef, HistoryEntry, LabelColumn, SessionFile, SessionState};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label_column: Option<LabelColumn>,
}

impl CsvOptions {
    /// Treats the first record as a header when any of its cells is not a
    /// number, and uses a column named `label` for ground truth if present.
    pub fn detect(bytes: &[u8]) -> Self {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(bytes);
        let first = reader.records().next().and_then(|r| r.ok());
        let Some(first) = first else {
            return Self::default();
        };
        let has_header = first.iter().any(|cell| cell.trim().parse::<f64>().is_err());
        let label_column = (has_header && first.iter().any(|c| c.trim() == "label"))
            .then(|| LabelColumn::Name("label".into()));
        Self { has_header, label_column }
    }
}

/// Hex SHA-256 of raw bytes; used as content-addressed dataset id.
pub fn content_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, options: &CsvOptions) -> Result<DataMatrix<T>> {
    let bytes = fs::read(path)?;
    parse_csv(&bytes, options)
}

/// Parses comma-separated UTF-8 with `.` decimals. Row ids follow line order.
pub fn parse_csv<T: Scalar>(bytes: &[u8], options: &CsvOptions) -> Result<DataMatrix<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut records = reader.records();
    let mut line_offset = 1;

    let label_index = if options.has_header {
        let header = records
            .next()
            .ok_or_else(|| TinderError::Format("empty file".into()))?
            .map_err(|e| TinderError::Format(e.to_string()))?;
        line_offset = 2;
        match &options.label_column {
            Some(LabelColumn::Name(name)) => Some(
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| TinderError::Format(format!("no column named {name:?}")))?,
            ),
            Some(LabelColumn::Index(i)) => Some(*i),
            None => None,
        }
    } else {
        match &options.label_column {
            Some(LabelColumn::Index(i)) => Some(*i),
            Some(LabelColumn::Name(name)) => {
                return Err(TinderError::Format(format!(
                    "label column {name:?} given by name but the file has no header"
                )))
            }
            None => None,
        }
    };

    let mut width = None;
    let mut values: Vec<T> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut n = 0;
    for (r, record) in records.enumerate() {
        let row = r + line_offset;
        let record = record.map_err(|e| TinderError::Format(e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(TinderError::Format(format!(
                    "row {row} has {} fields, expected {w}",
                    record.len()
                )))
            }
            Some(_) => {}
        }
        if let Some(li) = label_index {
            if li >= record.len() {
                return Err(TinderError::Format(format!("label column {li} out of range")));
            }
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_index {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| TinderError::Parse {
                row,
                column: c + 1,
                message: format!("{cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(TinderError::Parse { row, column: c + 1, message: format!("{cell:?} is not finite") });
            }
            values.push(T::lit(v));
        }
        n += 1;
    }
    let width = width.ok_or_else(|| TinderError::Format("no data rows".into()))?;
    let d = width - usize::from(label_index.is_some());
    if d == 0 {
        return Err(TinderError::Format("no feature columns".into()));
    }
    let labels = label_index.map(|_| dense_labels(&raw_labels));
    let matrix = Array2::from_shape_vec((n, d), values).map_err(|e| TinderError::Format(e.to_string()))?;
    DataMatrix::new(matrix, labels)
}

/// Non-negative integer labels are kept as-is; anything else is mapped to
/// dense indices in order of first appearance.
fn dense_labels(raw: &[String]) -> Vec<usize> {
    if let Ok(ints) = raw.iter().map(|s| s.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>() {
        return ints;
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    raw.iter()
        .map(|s| {
            let next = seen.len();
            *seen.entry(s.as_str()).or_insert(next)
        })
        .collect()
}

/// Isotropic Gaussian blobs; rows are grouped by center and labelled with
/// the center index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub centers: Vec<Vec<f64>>,
    pub sigma: f64,
    pub points_per_center: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Four 2-D blobs at (±3, ±3), σ = 0.7, 200 points each.
    pub fn four_blobs(seed: u64) -> Self {
        Self {
            centers: vec![vec![-3.0, -3.0], vec![3.0, -3.0], vec![-3.0, 3.0], vec![3.0, 3.0]],
            sigma: 0.7,
            points_per_center: 200,
            seed,
        }
    }

    /// Ten 10-D blobs at 8·e_k, σ = 1, 200 points each.
    pub fn ten_blobs(seed: u64) -> Self {
        let centers = (0..10)
            .map(|k| (0..10).map(|j| if j == k { 8.0 } else { 0.0 }).collect())
            .collect();
        Self { centers, sigma: 1.0, points_per_center: 200, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.centers.first().map_or(0, Vec::len);
        if d == 0 || self.centers.iter().any(|c| c.len() != d) {
            return Err(TinderError::InvalidConfig("centers must be non-empty and share one dimension".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(TinderError::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.points_per_center == 0 {
            return Err(TinderError::InvalidConfig("points_per_center must be positive".into()));
        }
        Ok(())
    }
}

pub fn generate_blobs<T: Scalar>(spec: &SyntheticSpec) -> Result<DataMatrix<T>> {
    spec.validate()?;
    let d = spec.centers[0].len();
    let n = spec.centers.len() * spec.points_per_center;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (label, center) in spec.centers.iter().enumerate() {
        for _ in 0..spec.points_per_center {
            for &c in center {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(T::lit(c + spec.sigma * z));
            }
            labels.push(label);
        }
    }
    let matrix = Array2::from_shape_vec((n, d), values).expect("shape");
    DataMatrix::new(matrix, Some(labels))
}

/// Writes data as CSV with header `x0..x{D-1}[,label]`.
pub fn write_data_csv<T: Scalar>(data: &DataMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, data_csv_string(data))?;
    Ok(())
}

pub fn data_csv_string<T: Scalar>(data: &DataMatrix<T>) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..data.d()).map(|j| format!("x{j}")).collect();
    out.push_str(&header.join(","));
    if data.labels().is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for i in 0..data.n() {
        let row: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        if let Some(labels) = data.labels() {
            let _ = write!(out, ",{}", labels[i]);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = TinderError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(TinderError::InvalidConfig(format!("unknown export format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportMetrics {
    pub log_likelihood: f64,
    pub objective: f64,
    pub penalty_value: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity: Option<f64>,
}

/// JSON export of one clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClusteringExport<T> {
    pub iteration: usize,
    pub ids: Vec<usize>,
    pub labels: Vec<usize>,
    pub params: MixtureParams<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responsibilities: Option<Array2<T>>,
    pub metrics: ExportMetrics,
}

impl<T: Scalar> ClusteringExport<T> {
    pub fn new(entry: &HistoryEntry<T>, data: &DataMatrix<T>, soft: bool) -> Result<Self> {
        let hard = entry.hard();
        let purity = data
            .labels()
            .map(|truth| purity(&hard, &HardClustering::new(truth.to_vec())))
            .transpose()?;
        Ok(Self {
            iteration: entry.iteration,
            ids: data.ids().to_vec(),
            labels: hard.labels().to_vec(),
            params: entry.params.clone(),
            responsibilities: soft.then(|| entry.assignment.resp().clone()),
            metrics: ExportMetrics {
                log_likelihood: entry.log_likelihood.as_f64(),
                objective: entry.objective.as_f64(),
                penalty_value: entry.penalty_value.as_f64(),
                beta: entry.beta,
                purity,
            },
        })
    }
}

/// CSV rows `id,label[,p_0..p_{K-1}]` under a header line.
pub fn clustering_csv_string<T: Scalar>(ids: &[usize], assignment: &SoftAssignment<T>, soft: bool) -> String {
    let hard = harden(assignment);
    let mut out = String::from("id,label");
    if soft {
        for c in 0..assignment.k() {
            let _ = write!(out, ",p_{c}");
        }
    }
    out.push('\n');
    for (i, (&id, &label)) in ids.iter().zip(hard.labels()).enumerate() {
        let _ = write!(out, "{id},{label}");
        if soft {
            for &p in assignment.resp().row(i) {
                let _ = write!(out, ",{p}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn export_clustering<T: Scalar>(
    entry: &HistoryEntry<T>,
    data: &DataMatrix<T>,
    path: impl AsRef<Path>,
    format: ExportFormat,
    soft: bool,
) -> Result<()> {
    let body = match format {
        ExportFormat::Csv => clustering_csv_string(data.ids(), &entry.assignment, soft),
        ExportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&ClusteringExport::new(entry, data, soft)?)?;
            s.push('\n');
            s
        }
    };
    fs::write(path, body)?;
    Ok(())
}

pub fn read_clustering_json<T: Scalar>(path: impl AsRef<Path>) -> Result<ClusteringExport<T>> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn session_json_string<T: Scalar>(state: &SessionState<T>, store_soft: bool) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&state.to_file(store_soft))?;
    s.push('\n');
    Ok(s)
}

pub fn save_session<T: Scalar>(state: &SessionState<T>, path: impl AsRef<Path>, store_soft: bool) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, session_json_string(state, store_soft)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_session_file<T: Scalar>(path: impl AsRef<Path>) -> Result<SessionFile<T>> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Loads the dataset a session references, verifying its content hash.
pub fn load_dataset<T: Scalar>(dataset: &DatasetRef) -> Result<DataMatrix<T>> {
    let path = dataset
        .path
        .as_ref()
        .ok_or_else(|| TinderError::Format("session has no dataset path".into()))?;
    let bytes = fs::read(path)?;
    let hash = content_hash(&bytes);
    if hash != dataset.sha256 {
        return Err(TinderError::InvalidData(format!(
            "dataset {path} changed: hash {hash} != recorded {}",
            dataset.sha256
        )));
    }
    let options = CsvOptions { has_header: dataset.has_header, label_column: dataset.label_column.clone() };
    parse_csv(&bytes, &options)
}

/// Reads a session file together with its dataset.
pub fn load_session<T: Scalar>(path: impl AsRef<Path>) -> Result<SessionState<T>> {
    let file: SessionFile<T> = read_session_file(path)?;
    let data = load_dataset(&file.dataset)?;
    SessionState::from_file(file, Arc::new(data))
}
