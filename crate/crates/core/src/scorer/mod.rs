//! Uniform scoring over the builtin NBOW model and remote classifiers,
//! precision-targeted thresholds and high-precision pseudo-labeling.

mod builtin;
mod calibrate;
mod pseudo;
mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{BuiltinScorer, OFFENSIVE_MODEL_FILE, STANCE_MODEL_FILE};
pub use calibrate::{
    calibrate_thresholds, precision_at, CalibrationError, ClassThreshold, Grid, ThresholdTable,
};
pub use pseudo::{pseudo_label_corpus, PseudoLabelError, PseudoLabeledThread, PseudoLabeler};
pub use remote::{RemoteConfig, RemoteScorer, ScoreRequest, ScoreResponse, WireItem};

/// Tolerance on the probability mass of a score vector.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Offensive,
    Stance,
}

impl Task {
    pub fn n_classes(self) -> usize {
        match self {
            Task::Offensive => 2,
            Task::Stance => 3,
        }
    }

    /// Class names in probability-vector order.
    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Task::Offensive => &["safe", "offensive"],
            Task::Stance => &["neutral", "agree", "disagree"],
        }
    }

    pub fn class_index(self, name: &str) -> Option<usize> {
        self.class_names().iter().position(|n| *n == name)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Offensive => "offensive",
            Task::Stance => "stance",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "offensive" => Ok(Task::Offensive),
            "stance" => Ok(Task::Stance),
            other => Err(format!("unknown task {other:?} (expected offensive|stance)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("remote scorer unavailable after {attempts} attempts: {last_error}")]
    RemoteUnavailable { attempts: usize, last_error: String },
    #[error("remote scorer rejected the request with status {status}: {body}")]
    RemoteRejected { status: u16, body: String },
    #[error("malformed scorer reply: {0}")]
    SchemaError(String),
    #[error("no builtin model loaded for the {0} task")]
    MissingModel(Task),
    #[error("{0}")]
    Model(String),
}

/// Per-class probabilities for one scored item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub task: Task,
    pub probs: Vec<f64>,
}

impl ScoreVector {
    pub fn new(task: Task, probs: Vec<f64>) -> Result<Self, ScorerError> {
        if probs.len() != task.n_classes() {
            return Err(ScorerError::SchemaError(format!(
                "{task} scores need {} classes, got {}",
                task.n_classes(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(ScorerError::SchemaError(format!("probabilities out of range: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(ScorerError::SchemaError(format!("probabilities sum to {sum}")));
        }
        Ok(Self { task, probs })
    }

    /// Most likely class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// One thing to score: a single text (offensive task) or an ordered pair
/// `(a, b)` where `b` responds to `a` (stance task).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoringInput {
    Single { text: String },
    Pair { a: String, b: String },
}

impl ScoringInput {
    pub fn text(text: impl Into<String>) -> Self {
        ScoringInput::Single { text: text.into() }
    }

    pub fn pair(a: impl Into<String>, b: impl Into<String>) -> Self {
        ScoringInput::Pair { a: a.into(), b: b.into() }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ScoringInput::Single { text } => Some(text),
            ScoringInput::Pair { .. } => None,
        }
    }

    pub fn as_pair(&self) -> Option<(&str, &str)> {
        match self {
            ScoringInput::Pair { a, b } => Some((a, b)),
            ScoringInput::Single { .. } => None,
        }
    }
}

/// Anything that turns inputs into per-class probabilities.
///
/// Implementations must return exactly one vector per input, in order.
pub trait Scorer: Send + Sync {
    fn score_batch(&self, task: Task, items: &[ScoringInput]) -> Result<Vec<ScoreVector>, ScorerError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score_batch(&self, task: Task, items: &[ScoringInput]) -> Result<Vec<ScoreVector>, ScorerError> {
        (**self).score_batch(task, items)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score_batch(&self, task: Task, items: &[ScoringInput]) -> Result<Vec<ScoreVector>, ScorerError> {
        (**self).score_batch(task, items)
    }
}

/// Either a confidently predicted class or `Ambiguous`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HighPrecisionLabel {
    Class(usize),
    Ambiguous,
}

impl HighPrecisionLabel {
    pub fn class(self) -> Option<usize> {
        match self {
            HighPrecisionLabel::Class(c) => Some(c),
            HighPrecisionLabel::Ambiguous => None,
        }
    }

    pub fn name(self, task: Task) -> &'static str {
        match self {
            HighPrecisionLabel::Class(c) => task.class_names().get(c).copied().unwrap_or("?"),
            HighPrecisionLabel::Ambiguous => "ambiguous",
        }
    }

    pub fn from_name(task: Task, name: &str) -> Option<Self> {
        if name == "ambiguous" {
            return Some(HighPrecisionLabel::Ambiguous);
        }
        task.class_index(name).map(HighPrecisionLabel::Class)
    }
}

/// Among classes at or above their threshold, picks the largest margin
/// `prob - threshold`; ties go to the lower class index. Classes whose
/// threshold could not reach the target precision are never returned.
pub fn high_precision_label(score: &ScoreVector, table: &ThresholdTable) -> HighPrecisionLabel {
    let mut best: Option<(usize, f64)> = None;
    for ct in table.classes.iter().filter(|c| c.attainable) {
        let Some(&p) = score.probs.get(ct.class) else { continue };
        if p < ct.threshold {
            continue;
        }
        let margin = p - ct.threshold;
        if best.is_none_or(|(_, m)| margin > m) {
            best = Some((ct.class, margin));
        }
    }
    best.map_or(HighPrecisionLabel::Ambiguous, |(c, _)| HighPrecisionLabel::Class(c))
}
