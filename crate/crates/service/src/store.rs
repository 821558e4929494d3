//! Append-only JSON-lines annotation log.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use arc_swap::ArcSwap;
use chrono::{DateTime, Utc};
use convsafe::annotation::WorkerAnnotation;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}:{line}: corrupt record: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One committed line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub assignment_id: String,
    pub committed_at: DateTime<Utc>,
    pub annotation: WorkerAnnotation,
}

/// Read-only view of everything committed so far.
#[derive(Debug, Default, Clone)]
pub struct StoreIndex {
    pub records: Vec<Arc<StoredRecord>>,
    pub per_thread: HashMap<String, usize>,
    pub worker_threads: HashSet<(String, String)>,
    pub assignments: HashSet<String>,
}

impl StoreIndex {
    fn insert(&mut self, r: StoredRecord) {
        *self.per_thread.entry(r.annotation.thread.clone()).or_default() += 1;
        self.worker_threads.insert((r.annotation.worker.clone(), r.annotation.thread.clone()));
        self.assignments.insert(r.assignment_id.clone());
        self.records.push(Arc::new(r));
    }

    pub fn committed(&self, thread: &str) -> usize {
        self.per_thread.get(thread).copied().unwrap_or(0)
    }

    pub fn has_annotated(&self, worker: &str, thread: &str) -> bool {
        self.worker_threads.contains(&(worker.to_string(), thread.to_string()))
    }
}

/// Single-writer log. Appends are serialized by a mutex and synced to disk
/// before the in-memory snapshot is swapped; readers load the snapshot
/// without locking.
pub struct AnnotationStore {
    path: PathBuf,
    file: Mutex<File>,
    index: ArcSwap<StoreIndex>,
}

impl AnnotationStore {
    /// Opens or creates the log and rebuilds the index by replay. A torn
    /// final line (no trailing newline) is dropped and truncated away.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut index = StoreIndex::default();
        let mut reader = BufReader::new(&file);
        let mut good_len = 0u64;
        let mut line = String::new();
        let mut n = 0;
        loop {
            line.clear();
            let read = reader.read_line(&mut line)?;
            if read == 0 {
                break;
            }
            n += 1;
            if !line.ends_with('\n') {
                log::warn!("{}: dropping incomplete final record at line {n}", path.display());
                break;
            }
            if !line.trim().is_empty() {
                let rec: StoredRecord = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: n,
                    message: e.to_string(),
                })?;
                index.insert(rec);
            }
            good_len += read as u64;
        }
        drop(reader);
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(Self { path: path.to_path_buf(), file: Mutex::new(file), index: ArcSwap::from_pointee(index) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn snapshot(&self) -> Arc<StoreIndex> {
        self.index.load_full()
    }

    /// Runs `check` against the current index inside the commit section and
    /// appends the record only if it passes. Returns once the line is on disk.
    pub fn commit_if<E, F>(&self, record: StoredRecord, check: F) -> Result<Arc<StoreIndex>, E>
    where
        F: FnOnce(&StoreIndex) -> Result<(), E>,
        E: From<StoreError>,
    {
        let mut file = self.file.lock();
        let current = self.index.load_full();
        check(&current)?;
        let mut line = serde_json::to_vec(&record).map_err(|e| StoreError::Io(e.into()))?;
        line.push(b'\n');
        file.write_all(&line).map_err(StoreError::from)?;
        file.sync_data().map_err(StoreError::from)?;
        let mut next = (*current).clone();
        next.insert(record);
        let next = Arc::new(next);
        self.index.store(next.clone());
        Ok(next)
    }

    /// All committed annotations, one JSON object per line in commit order.
    pub fn export<W: Write>(&self, mut w: W) -> std::io::Result<usize> {
        let snap = self.snapshot();
        for r in &snap.records {
            serde_json::to_writer(&mut w, &r.annotation)?;
            w.write_all(b"\n")?;
        }
        Ok(snap.records.len())
    }
}
