use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scorer::{HighPrecisionLabel, PseudoLabeledThread};
use crate::{OFFENSIVE, SAFE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextBucket {
    Offensive,
    Safe,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub agree: usize,
    pub disagree: usize,
    pub neutral: usize,
    pub ambiguous: usize,
}

impl BucketCounts {
    pub fn total(&self) -> usize {
        self.agree + self.disagree + self.neutral + self.ambiguous
    }

    /// `[agree, disagree, neutral, ambiguous]` fractions; zeros when empty.
    pub fn fractions(&self) -> [f64; 4] {
        let n = self.total();
        if n == 0 {
            return [0.0; 4];
        }
        [self.agree, self.disagree, self.neutral, self.ambiguous].map(|c| c as f64 / n as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TemporalDistribution {
    /// `YYYY-MM` to per-context stance counts.
    pub months: BTreeMap<String, BTreeMap<ContextBucket, BucketCounts>>,
    pub missing_timestamp: usize,
    /// Threads whose preceding utterance had no confident offensive label.
    pub ambiguous_context: usize,
}

/// Monthly stance mix of final replies, split by whether the utterance they
/// reply to is confidently offensive or confidently safe.
pub fn temporal_stance_distribution(threads: &[PseudoLabeledThread]) -> TemporalDistribution {
    use crate::annotation::Stance;
    let mut out = TemporalDistribution::default();
    for p in threads {
        let Some(month) = p.thread.last_month() else {
            out.missing_timestamp += 1;
            continue;
        };
        let bucket = match p.context_offensive.last() {
            Some(HighPrecisionLabel::Class(c)) if *c == OFFENSIVE => ContextBucket::Offensive,
            Some(HighPrecisionLabel::Class(c)) if *c == SAFE => ContextBucket::Safe,
            _ => {
                out.ambiguous_context += 1;
                continue;
            }
        };
        let counts = out.months.entry(month).or_default().entry(bucket).or_default();
        match p.stance.class().and_then(Stance::from_index) {
            Some(Stance::Agree) => counts.agree += 1,
            Some(Stance::Disagree) => counts.disagree += 1,
            Some(Stance::Neutral) => counts.neutral += 1,
            None => counts.ambiguous += 1,
        }
    }
    out
}
