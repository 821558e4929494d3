use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{map_offense_4to2, Offensive4, Stance, WorkerAnnotation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no annotations supplied")]
    NoAnnotations,
    #[error("thread {thread}: utterance {item} has no judgments")]
    MissingCoverage { thread: String, item: usize },
    #[error("annotations mix threads {0} and {1}")]
    MixedThreads(String, String),
    #[error("min_votes must be at least 1")]
    ZeroMinVotes,
}

/// Gold labels for one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedItem {
    pub idx: usize,
    pub off: bool,
    /// Workers whose answer maps to offensive.
    pub off_votes: usize,
    pub judgments: usize,
    /// Target group name to the number of workers who chose it.
    #[serde(default)]
    pub targets: BTreeMap<String, usize>,
    /// Gold stance toward each earlier utterance that received votes.
    #[serde(default)]
    pub stance: BTreeMap<usize, Stance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedLabels {
    pub thread: String,
    pub workers: usize,
    pub items: Vec<AggregatedItem>,
}

impl AggregatedLabels {
    pub fn item(&self, idx: usize) -> Option<&AggregatedItem> {
        self.items.iter().find(|it| it.idx == idx)
    }

    pub fn offensive(&self, idx: usize) -> Option<bool> {
        self.item(idx).map(|it| it.off)
    }

    /// Gold stance of utterance `later` toward `earlier`.
    pub fn stance(&self, earlier: usize, later: usize) -> Option<Stance> {
        self.item(later).and_then(|it| it.stance.get(&earlier).copied())
    }

    /// All labeled pairs as `(earlier, later, stance)`.
    pub fn stance_pairs(&self) -> impl Iterator<Item = (usize, usize, Stance)> + '_ {
        self.items.iter().flat_map(|it| it.stance.iter().map(move |(&j, &s)| (j, it.idx, s)))
    }
}

/// Offensive iff at least `min_votes` answers map to offensive.
pub fn aggregate_offensive_votes(votes: &[Offensive4], min_votes: usize) -> (bool, usize) {
    let n = votes.iter().filter(|v| map_offense_4to2(**v)).count();
    (n >= min_votes, n)
}

/// Agree or Disagree when that label reaches `min_votes`; if both do, the
/// larger count wins and an exact tie falls back to Neutral.
pub fn aggregate_stance_votes(votes: &[Stance], min_votes: usize) -> Stance {
    let agree = votes.iter().filter(|v| **v == Stance::Agree).count();
    let disagree = votes.iter().filter(|v| **v == Stance::Disagree).count();
    match (agree >= min_votes, disagree >= min_votes) {
        (true, false) => Stance::Agree,
        (false, true) => Stance::Disagree,
        (true, true) if agree > disagree => Stance::Agree,
        (true, true) if disagree > agree => Stance::Disagree,
        _ => Stance::Neutral,
    }
}

/// Majority of the non-null votes, ties resolving to plausible.
pub fn aggregate_plausible_votes(votes: &[bool]) -> Option<bool> {
    if votes.is_empty() {
        return None;
    }
    let yes = votes.iter().filter(|v| **v).count();
    Some(2 * yes >= votes.len())
}

/// Gold labels for one thread from its worker annotations.
pub fn aggregate_gold(annos: &[WorkerAnnotation], min_votes: usize) -> Result<AggregatedLabels, AggregateError> {
    if min_votes == 0 {
        return Err(AggregateError::ZeroMinVotes);
    }
    let first = annos.first().ok_or(AggregateError::NoAnnotations)?;
    if let Some(other) = annos.iter().find(|a| a.thread != first.thread) {
        return Err(AggregateError::MixedThreads(first.thread.clone(), other.thread.clone()));
    }
    #[derive(Default)]
    struct Votes {
        off: Vec<Offensive4>,
        targets: BTreeMap<String, usize>,
        stance: BTreeMap<usize, Vec<Stance>>,
        plausible: Vec<bool>,
    }
    let mut per_item: BTreeMap<usize, Votes> = BTreeMap::new();
    for a in annos {
        for it in &a.items {
            let v = per_item.entry(it.idx).or_default();
            v.off.push(it.off);
            for t in &it.targets {
                *v.targets.entry(t.clone()).or_default() += 1;
            }
            for (&j, &s) in &it.stance {
                v.stance.entry(j).or_default().push(s);
            }
            if let Some(p) = it.plausible {
                v.plausible.push(p);
            }
        }
    }
    let k = per_item.keys().next_back().copied().unwrap_or(0);
    if let Some(gap) = (1..=k).find(|i| !per_item.contains_key(i)) {
        return Err(AggregateError::MissingCoverage { thread: first.thread.clone(), item: gap });
    }
    let items = per_item
        .into_iter()
        .map(|(idx, v)| {
            let (off, off_votes) = aggregate_offensive_votes(&v.off, min_votes);
            AggregatedItem {
                idx,
                off,
                off_votes,
                judgments: v.off.len(),
                targets: v.targets,
                stance: v.stance.iter().map(|(&j, s)| (j, aggregate_stance_votes(s, min_votes))).collect(),
                plausible: aggregate_plausible_votes(&v.plausible),
            }
        })
        .collect();
    Ok(AggregatedLabels { thread: first.thread.clone(), workers: annos.len(), items })
}

/// Groups annotations by thread and aggregates each group, ordered by thread id.
pub fn aggregate_all(annos: &[WorkerAnnotation], min_votes: usize) -> Result<Vec<AggregatedLabels>, AggregateError> {
    let mut groups: BTreeMap<&str, Vec<WorkerAnnotation>> = BTreeMap::new();
    for a in annos {
        groups.entry(a.thread.as_str()).or_default().push(a.clone());
    }
    groups.values().map(|g| aggregate_gold(g, min_votes)).collect()
}
