//! Client for the HTTP scoring protocol.
//!
//! `POST <endpoint>/score` with `{"task": "offensive"|"stance", "items": [...]}`
//! where each item is `{"text": ...}` or `{"a": ..., "b": ...}`. The reply is
//! `{"probs": [[...], ...]}`, one row per item, classes ordered
//! `(safe, offensive)` or `(neutral, agree, disagree)`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use super::{ScoreVector, Scorer, ScorerError, ScoringInput, Task};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireItem {
    Single { text: String },
    Pair { a: String, b: String },
}

impl From<&ScoringInput> for WireItem {
    fn from(i: &ScoringInput) -> Self {
        match i {
            ScoringInput::Single { text } => WireItem::Single { text: text.clone() },
            ScoringInput::Pair { a, b } => WireItem::Pair { a: a.clone(), b: b.clone() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub task: Task,
    pub items: Vec<WireItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base url; `/score` is appended unless already present.
    pub endpoint: String,
    pub batch_size: usize,
    /// Retries after the first attempt for connection errors, timeouts, 429 and 5xx.
    pub max_retries: usize,
    pub backoff_base: Duration,
    /// Upper bound on concurrent requests across all callers sharing this scorer.
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            batch_size: 64,
            max_retries: 3,
            backoff_base: Duration::from_millis(200),
            max_in_flight: 4,
            timeout: Duration::from_secs(60),
        }
    }
}

struct Budget {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Budget {
    fn acquire(&self) -> BudgetGuard<'_> {
        let mut free = self.free.lock();
        while *free == 0 {
            self.cv.wait(&mut free);
        }
        *free -= 1;
        BudgetGuard(self)
    }
}

struct BudgetGuard<'a>(&'a Budget);

impl Drop for BudgetGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock() += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteScorer {
    cfg: RemoteConfig,
    url: String,
    client: reqwest::blocking::Client,
    budget: Budget,
    requests: AtomicUsize,
}

impl RemoteScorer {
    pub fn new(cfg: RemoteConfig) -> Result<Self, ScorerError> {
        if cfg.batch_size == 0 || cfg.max_in_flight == 0 {
            return Err(ScorerError::Model("batch size and in-flight budget must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| ScorerError::Model(e.to_string()))?;
        let base = cfg.endpoint.trim_end_matches('/');
        let url = if base.ends_with("/score") { base.to_string() } else { format!("{base}/score") };
        Ok(Self {
            budget: Budget { free: Mutex::new(cfg.max_in_flight), cv: Condvar::new() },
            cfg,
            url,
            client,
            requests: AtomicUsize::new(0),
        })
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests_sent(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    fn send_chunk(&self, task: Task, chunk: &[ScoringInput]) -> Result<Vec<ScoreVector>, ScorerError> {
        let body = ScoreRequest { task, items: chunk.iter().map(WireItem::from).collect() };
        let attempts = self.cfg.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.cfg.backoff_base * (1u32 << (attempt - 1).min(16)));
            }
            let result = {
                let _slot = self.budget.acquire();
                self.requests.fetch_add(1, Ordering::Relaxed);
                self.client.post(&self.url).json(&body).send()
            };
            let resp = match result {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status.is_server_error() || status.as_u16() == 429 {
                last_error = format!("status {status}");
                continue;
            }
            if !status.is_success() {
                let body = resp.text().unwrap_or_default();
                return Err(ScorerError::RemoteRejected { status: status.as_u16(), body });
            }
            let text = resp.text().map_err(|e| ScorerError::SchemaError(e.to_string()))?;
            let parsed: ScoreResponse =
                serde_json::from_str(&text).map_err(|e| ScorerError::SchemaError(e.to_string()))?;
            if parsed.probs.len() != chunk.len() {
                return Err(ScorerError::SchemaError(format!(
                    "sent {} items, got {} score rows",
                    chunk.len(),
                    parsed.probs.len()
                )));
            }
            return parsed.probs.into_iter().map(|p| ScoreVector::new(task, p)).collect();
        }
        Err(ScorerError::RemoteUnavailable { attempts, last_error })
    }
}

impl Scorer for RemoteScorer {
    fn score_batch(&self, task: Task, items: &[ScoringInput]) -> Result<Vec<ScoreVector>, ScorerError> {
        let chunks: Vec<&[ScoringInput]> = items.chunks(self.cfg.batch_size).collect();
        if chunks.len() <= 1 {
            return chunks.first().map_or(Ok(Vec::new()), |c| self.send_chunk(task, c));
        }
        let next = AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<Vec<ScoreVector>, ScorerError>>>> =
            chunks.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.cfg.max_in_flight.min(chunks.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= chunks.len() {
                        break;
                    }
                    let r = self.send_chunk(task, chunks[i]);
                    let failed = r.is_err();
                    *results[i].lock() = Some(r);
                    if failed {
                        // stop handing out work; remaining slots stay None
                        next.store(chunks.len(), Ordering::Relaxed);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(items.len());
        let mut first_err = None;
        for slot in results {
            match slot.into_inner() {
                Some(Ok(v)) => out.extend(v),
                Some(Err(e)) => {
                    first_err.get_or_insert(e);
                }
                None => {}
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}
