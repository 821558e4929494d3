use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use convsafe::annotation::{TargetVocabulary, WorkerAnnotation};
use convsafe::Thread;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{AnnotationStore, StoreError, StoredRecord};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Clock that only moves when told to.
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self(Mutex::new(start))
    }

    pub fn advance(&self, by: Duration) {
        *self.0.lock() += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock()
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub workers_per_thread: usize,
    pub lease_ttl: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { workers_per_thread: 5, lease_ttl: Duration::minutes(30) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAssignment {
    pub thread: Thread,
    /// Annotations still needed for this thread, counting this one.
    pub remaining_slots: usize,
    pub assignment_id: String,
    pub lease_expiry: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextTask {
    Assigned(TaskAssignment),
    NoneAvailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub assignment_id: String,
    pub thread: String,
    pub remaining_slots: usize,
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("unknown assignment {0}")]
    UnknownAssignment(String),
    #[error("lease for assignment {0} has expired")]
    LeaseExpired(String),
    #[error("{0}")]
    SchemaInvalid(String),
    #[error("{0}")]
    Duplicate(String),
    #[error("thread {0} already has all its annotations")]
    ThreadFull(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadProgress {
    pub thread: String,
    pub committed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub threads: usize,
    pub workers_per_thread: usize,
    pub committed_annotations: usize,
    pub complete_threads: usize,
    pub active_leases: usize,
    pub per_thread: Vec<ThreadProgress>,
}

#[derive(Debug, Clone)]
struct Lease {
    worker: String,
    thread: String,
    expiry: DateTime<Utc>,
}

pub struct AnnotationService {
    threads: Vec<Thread>,
    by_id: HashMap<String, usize>,
    store: AnnotationStore,
    leases: Mutex<HashMap<String, Lease>>,
    cfg: ServiceConfig,
    clock: Arc<dyn Clock>,
    vocab: TargetVocabulary,
}

impl AnnotationService {
    pub fn new(threads: Vec<Thread>, store: AnnotationStore, cfg: ServiceConfig, clock: Arc<dyn Clock>) -> Self {
        let by_id = threads.iter().enumerate().map(|(i, t)| (t.id.clone(), i)).collect();
        Self {
            threads,
            by_id,
            store,
            leases: Mutex::new(HashMap::new()),
            cfg,
            clock,
            vocab: TargetVocabulary::builtin(),
        }
    }

    pub fn with_vocabulary(mut self, vocab: TargetVocabulary) -> Self {
        self.vocab = vocab;
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn store(&self) -> &AnnotationStore {
        &self.store
    }

    pub fn vocabulary(&self) -> &TargetVocabulary {
        &self.vocab
    }

    pub fn thread(&self, id: &str) -> Option<&Thread> {
        self.by_id.get(id).map(|&i| &self.threads[i])
    }

    /// Least-covered thread the worker has not annotated yet. Active leases
    /// count toward coverage so a thread is never over-assigned. A worker
    /// polling again while holding a live lease gets the same assignment.
    pub fn next_task(&self, worker: &str) -> NextTask {
        let now = self.clock.now();
        let mut leases = self.leases.lock();
        let snap = self.store.snapshot();
        // Expired leases stay in the table so a late submit reports LeaseExpired.
        if let Some((id, l)) = leases.iter().find(|(_, l)| l.worker == worker && l.expiry > now) {
            let t = self.thread(&l.thread).expect("leases reference known threads");
            return NextTask::Assigned(TaskAssignment {
                thread: t.clone(),
                remaining_slots: self.cfg.workers_per_thread.saturating_sub(snap.committed(&t.id)),
                assignment_id: id.clone(),
                lease_expiry: l.expiry,
            });
        }
        let mut leased: HashMap<&str, usize> = HashMap::new();
        for l in leases.values().filter(|l| l.expiry > now) {
            *leased.entry(l.thread.as_str()).or_default() += 1;
        }
        let best = self
            .threads
            .iter()
            .enumerate()
            .filter(|(_, t)| !snap.has_annotated(worker, &t.id))
            .map(|(i, t)| (snap.committed(&t.id) + leased.get(t.id.as_str()).copied().unwrap_or(0), i))
            .filter(|(load, _)| *load < self.cfg.workers_per_thread)
            .min();
        let Some((_, i)) = best else { return NextTask::NoneAvailable };
        let t = &self.threads[i];
        let id = uuid::Uuid::new_v4().to_string();
        let expiry = now + self.cfg.lease_ttl;
        leases.insert(id.clone(), Lease { worker: worker.to_string(), thread: t.id.clone(), expiry });
        NextTask::Assigned(TaskAssignment {
            thread: t.clone(),
            remaining_slots: self.cfg.workers_per_thread - snap.committed(&t.id),
            assignment_id: id,
            lease_expiry: expiry,
        })
    }

    /// Validates and durably records an annotation for a live lease.
    pub fn submit(&self, assignment_id: &str, annotation: WorkerAnnotation) -> Result<SubmitAck, SubmitError> {
        let now = self.clock.now();
        let mut leases = self.leases.lock();
        if self.store.snapshot().assignments.contains(assignment_id) {
            return Err(SubmitError::Duplicate(format!("assignment {assignment_id} was already submitted")));
        }
        let lease = leases.get(assignment_id).cloned().ok_or_else(|| SubmitError::UnknownAssignment(assignment_id.into()))?;
        if lease.expiry <= now {
            return Err(SubmitError::LeaseExpired(assignment_id.into()));
        }
        if annotation.worker != lease.worker {
            return Err(SubmitError::SchemaInvalid(format!(
                "assignment belongs to worker {}, got {}",
                lease.worker, annotation.worker
            )));
        }
        let thread = self.thread(&lease.thread).expect("leases reference known threads");
        annotation
            .check_complete(thread, Some(&self.vocab))
            .map_err(|e| SubmitError::SchemaInvalid(e.to_string()))?;
        let wpt = self.cfg.workers_per_thread;
        let record = StoredRecord { assignment_id: assignment_id.into(), committed_at: now, annotation };
        let snap = self.store.commit_if(record, |idx| {
            if idx.has_annotated(&lease.worker, &lease.thread) {
                return Err(SubmitError::Duplicate(format!("worker {} already annotated {}", lease.worker, lease.thread)));
            }
            if idx.committed(&lease.thread) >= wpt {
                return Err(SubmitError::ThreadFull(lease.thread.clone()));
            }
            Ok(())
        })?;
        leases.remove(assignment_id);
        Ok(SubmitAck {
            assignment_id: assignment_id.into(),
            thread: lease.thread.clone(),
            remaining_slots: wpt.saturating_sub(snap.committed(&lease.thread)),
        })
    }

    pub fn progress(&self) -> Progress {
        let snap = self.store.snapshot();
        let now = self.clock.now();
        let active_leases = self.leases.lock().values().filter(|l| l.expiry > now).count();
        let per_thread: Vec<ThreadProgress> = self
            .threads
            .iter()
            .map(|t| ThreadProgress { thread: t.id.clone(), committed: snap.committed(&t.id) })
            .collect();
        Progress {
            threads: self.threads.len(),
            workers_per_thread: self.cfg.workers_per_thread,
            committed_annotations: snap.records.len(),
            complete_threads: per_thread.iter().filter(|p| p.committed >= self.cfg.workers_per_thread).count(),
            active_leases,
            per_thread,
        }
    }
}
