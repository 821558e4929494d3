//! Crowd judgments: per-worker annotations, gold aggregation and agreement.

mod aggregate;
mod agreement;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Thread;

pub use aggregate::{
    aggregate_all, aggregate_gold, aggregate_offensive_votes, aggregate_plausible_votes, aggregate_stance_votes,
    AggregateError, AggregatedItem, AggregatedLabels,
};
pub use agreement::{
    agreement_report, cohens_kappa, krippendorff_alpha, offensive_reliability, pairwise_agreement,
    stance_reliability, AgreementError, AgreementReport, Reliability,
};

pub const TARGET_GROUPS_CONFIG: &str = include_str!("../../data/target_groups.txt");

/// The four answers offered for "is this utterance offensive?".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Offensive4 {
    Yes,
    Maybe,
    No,
    NotSure,
}

impl Offensive4 {
    pub const ALL: [Offensive4; 4] = [Offensive4::Yes, Offensive4::Maybe, Offensive4::No, Offensive4::NotSure];
}

/// {Yes, Maybe} are offensive, {No, NotSure} are safe.
pub fn map_offense_4to2(v: Offensive4) -> bool {
    matches!(v, Offensive4::Yes | Offensive4::Maybe)
}

/// Stance of a later utterance toward an earlier one. Discriminants are the
/// class indices used by the stance classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Neutral = 0,
    Agree = 1,
    Disagree = 2,
}

impl Stance {
    pub const ALL: [Stance; 3] = [Stance::Neutral, Stance::Agree, Stance::Disagree];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Stance::Neutral => "neutral",
            Stance::Agree => "agree",
            Stance::Disagree => "disagree",
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Predefined target groups, segmented into categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetVocabulary {
    pub categories: Vec<TargetCategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetCategory {
    pub name: String,
    pub groups: Vec<String>,
}

impl TargetVocabulary {
    /// `#! ` lines are comments, `# Name` opens a category, any other
    /// non-empty line is a group. Groups before the first category land in
    /// an unnamed one.
    pub fn parse(text: &str) -> Self {
        let mut categories: Vec<TargetCategory> = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with("#!") {
                continue;
            }
            if let Some(name) = line.strip_prefix('#') {
                categories.push(TargetCategory { name: name.trim().to_string(), groups: Vec::new() });
                continue;
            }
            if categories.is_empty() {
                categories.push(TargetCategory { name: String::new(), groups: Vec::new() });
            }
            categories.last_mut().expect("pushed above").groups.push(line.to_string());
        }
        categories.retain(|c| !c.groups.is_empty());
        Self { categories }
    }

    pub fn builtin() -> Self {
        Self::parse(TARGET_GROUPS_CONFIG)
    }

    pub fn read<R: BufRead>(mut r: R) -> std::io::Result<Self> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        Ok(Self::parse(&s))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().flat_map(|c| c.groups.iter().map(String::as_str))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names().any(|n| n == name)
    }
}

/// One worker's answers for utterance `idx` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemAnnotation {
    pub idx: usize,
    pub off: Offensive4,
    #[serde(default)]
    pub targets: Vec<String>,
    /// Stance of this utterance toward each earlier utterance `j < idx`.
    #[serde(default)]
    pub stance: BTreeMap<usize, Stance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerAnnotation {
    pub worker: String,
    pub thread: String,
    pub items: Vec<ItemAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaViolation {
    #[error("worker id is empty")]
    EmptyWorker,
    #[error("thread id is empty")]
    EmptyThread,
    #[error("annotation is for thread {found}, expected {expected}")]
    WrongThread { expected: String, found: String },
    #[error("utterance index {0} is out of range")]
    IndexOutOfRange(usize),
    #[error("utterance {0} annotated twice")]
    DuplicateItem(usize),
    #[error("utterance {0} has no offensiveness answer")]
    MissingUtterance(usize),
    #[error("stance key {earlier} is not earlier than utterance {later}")]
    StanceNotEarlier { earlier: usize, later: usize },
    #[error("missing stance for pair ({earlier}<-{later})")]
    MissingStance { earlier: usize, later: usize },
    #[error("utterance {0} lists target groups but is not marked offensive")]
    TargetsOnSafe(usize),
    #[error("unknown target group {0:?}")]
    UnknownTarget(String),
    #[error("bot response {0} needs a plausibility answer")]
    MissingPlausible(usize),
    #[error("plausibility given for human utterance {0}")]
    PlausibleOnHuman(usize),
}

impl WorkerAnnotation {
    /// Type-level invariants that hold regardless of the thread.
    pub fn validate(&self, vocab: Option<&TargetVocabulary>) -> Result<(), SchemaViolation> {
        if self.worker.trim().is_empty() {
            return Err(SchemaViolation::EmptyWorker);
        }
        if self.thread.trim().is_empty() {
            return Err(SchemaViolation::EmptyThread);
        }
        let mut seen = BTreeSet::new();
        for item in &self.items {
            if item.idx == 0 {
                return Err(SchemaViolation::IndexOutOfRange(0));
            }
            if !seen.insert(item.idx) {
                return Err(SchemaViolation::DuplicateItem(item.idx));
            }
            if let Some(&j) = item.stance.keys().find(|&&j| j == 0 || j >= item.idx) {
                return Err(SchemaViolation::StanceNotEarlier { earlier: j, later: item.idx });
            }
            if !item.targets.is_empty() && !map_offense_4to2(item.off) {
                return Err(SchemaViolation::TargetsOnSafe(item.idx));
            }
            if let Some(v) = vocab {
                if let Some(t) = item.targets.iter().find(|t| !v.contains(t)) {
                    return Err(SchemaViolation::UnknownTarget(t.clone()));
                }
            }
        }
        Ok(())
    }

    /// Full coverage check against the thread: one item per utterance, a
    /// stance for every pair `j < i`, and plausibility exactly on bot responses.
    pub fn check_complete(&self, thread: &Thread, vocab: Option<&TargetVocabulary>) -> Result<(), SchemaViolation> {
        self.validate(vocab)?;
        if self.thread != thread.id {
            return Err(SchemaViolation::WrongThread { expected: thread.id.clone(), found: self.thread.clone() });
        }
        let k = thread.len();
        if let Some(item) = self.items.iter().find(|it| it.idx > k) {
            return Err(SchemaViolation::IndexOutOfRange(item.idx));
        }
        let by_idx: BTreeMap<usize, &ItemAnnotation> = self.items.iter().map(|it| (it.idx, it)).collect();
        for i in 1..=k {
            let Some(item) = by_idx.get(&i) else {
                return Err(SchemaViolation::MissingUtterance(i));
            };
            for j in 1..i {
                if !item.stance.contains_key(&j) {
                    return Err(SchemaViolation::MissingStance { earlier: j, later: i });
                }
            }
            let bot = thread.utterances[i - 1].speaker.is_bot();
            match (bot, item.plausible) {
                (true, None) => return Err(SchemaViolation::MissingPlausible(i)),
                (false, Some(_)) => return Err(SchemaViolation::PlausibleOnHuman(i)),
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationLineError {
    pub line: usize,
    pub message: String,
}

/// Reads worker annotations, one JSON object per line. Malformed lines are
/// reported and skipped.
pub fn read_annotations<R: BufRead>(r: R) -> std::io::Result<(Vec<WorkerAnnotation>, Vec<AnnotationLineError>)> {
    let mut ok = Vec::new();
    let mut errs = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<WorkerAnnotation>(&line) {
            Ok(a) => match a.validate(None) {
                Ok(()) => ok.push(a),
                Err(e) => errs.push(AnnotationLineError { line: n + 1, message: e.to_string() }),
            },
            Err(e) => errs.push(AnnotationLineError { line: n + 1, message: e.to_string() }),
        }
    }
    Ok((ok, errs))
}
