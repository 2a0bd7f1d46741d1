//! Dataset and session stores, with on-disk persistence under a data
//! directory:
//!
//! ```text
//! <data-dir>/datasets/<sha256>.csv
//! <data-dir>/sessions/<session-id>.json
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock as StdRwLock};

use tinder_core::io::{content_hash, parse_csv, read_session_file, save_session, CsvOptions};
use tinder_core::{Data, DatasetRef, Result, Session, SessionState, TinderError};
use tokio::sync::RwLock;

/// An uploaded dataset. Immutable once stored.
#[derive(Debug)]
pub struct StoredDataset {
    pub reference: DatasetRef,
    pub data: Arc<Data>,
}

pub type SessionHandle = Arc<RwLock<Session>>;

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    datasets: StdRwLock<HashMap<String, Arc<StoredDataset>>>,
    sessions: StdRwLock<HashMap<String, SessionHandle>>,
}

impl Store {
    /// Opens (creating if needed) a data directory and reloads every
    /// dataset and session found in it.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("datasets"))?;
        fs::create_dir_all(root.join("sessions"))?;
        let store = Self { root, datasets: StdRwLock::default(), sessions: StdRwLock::default() };
        store.reload()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn reload(&self) -> Result<()> {
        for path in sorted_entries(&self.root.join("datasets"), "csv")? {
            let bytes = fs::read(&path)?;
            self.insert_dataset(&bytes)?;
        }
        for path in sorted_entries(&self.root.join("sessions"), "json")? {
            let file = read_session_file(&path)?;
            let dataset = self.dataset(&file.dataset.sha256).ok_or_else(|| {
                TinderError::InvalidData(format!(
                    "{} references unknown dataset {}",
                    path.display(),
                    file.dataset.sha256
                ))
            })?;
            let session = SessionState::from_file(file, dataset.data.clone())?;
            tracing::info!(session = session.session_id(), iterations = session.history().len(), "restored session");
            self.sessions_mut().insert(session.session_id().to_string(), Arc::new(RwLock::new(session)));
        }
        Ok(())
    }

    /// Stores raw CSV bytes under their content hash. Returns the dataset
    /// and whether it was new.
    pub fn add_dataset(&self, bytes: &[u8]) -> Result<(Arc<StoredDataset>, bool)> {
        let id = content_hash(bytes);
        if let Some(existing) = self.dataset(&id) {
            return Ok((existing, false));
        }
        let stored = self.insert_dataset(bytes)?;
        let path = self.dataset_path(&id);
        let tmp = path.with_extension("csv.tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        Ok((stored, true))
    }

    fn insert_dataset(&self, bytes: &[u8]) -> Result<Arc<StoredDataset>> {
        let id = content_hash(bytes);
        let options = CsvOptions::detect(bytes);
        let data: Data = parse_csv(bytes, &options)?;
        let reference = DatasetRef {
            path: Some(self.dataset_path(&id).to_string_lossy().into_owned()),
            sha256: id.clone(),
            has_header: options.has_header,
            label_column: options.label_column,
        };
        let stored = Arc::new(StoredDataset { reference, data: Arc::new(data) });
        let mut datasets = self.datasets.write().expect("dataset store poisoned");
        Ok(datasets.entry(id).or_insert(stored).clone())
    }

    fn dataset_path(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{id}.csv"))
    }

    pub fn dataset(&self, id: &str) -> Option<Arc<StoredDataset>> {
        self.datasets.read().expect("dataset store poisoned").get(id).cloned()
    }

    pub fn session(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.read().expect("session store poisoned").get(id).cloned()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session store poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn insert_session(&self, session: Session) -> Result<SessionHandle> {
        self.persist(&session)?;
        let handle = Arc::new(RwLock::new(session));
        let id = handle.try_read().expect("fresh lock").session_id().to_string();
        self.sessions_mut().insert(id, handle.clone());
        Ok(handle)
    }

    fn sessions_mut(&self) -> std::sync::RwLockWriteGuard<'_, HashMap<String, SessionHandle>> {
        self.sessions.write().expect("session store poisoned")
    }

    pub fn persist(&self, session: &Session) -> Result<()> {
        let path = self.root.join("sessions").join(format!("{}.json", session.session_id()));
        save_session(session, path, false)
    }

    /// Writes every session to disk, waiting for in-flight mutations.
    pub async fn persist_all(&self) -> Result<usize> {
        let handles: Vec<SessionHandle> = self.sessions.read().expect("session store poisoned").values().cloned().collect();
        for handle in &handles {
            let session = handle.read().await;
            self.persist(&session)?;
        }
        Ok(handles.len())
    }
}

fn sorted_entries(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == extension))
        .collect();
    paths.sort();
    Ok(paths)
}
