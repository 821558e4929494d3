use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::lexicon::Lexicon;
use crate::annotation::{AggregatedLabels, Stance};
use crate::corpus::Thread;

/// Pairs each thread with its gold labels, dropping threads without labels.
pub fn join_gold<'a>(threads: &'a [Thread], gold: &'a [AggregatedLabels]) -> Vec<(&'a Thread, &'a AggregatedLabels)> {
    let by_id: HashMap<&str, &AggregatedLabels> = gold.iter().map(|g| (g.thread.as_str(), g)).collect();
    threads.iter().filter_map(|t| by_id.get(t.id.as_str()).map(|g| (t, *g))).collect()
}

fn category(t: &Thread, idx: usize) -> Option<&str> {
    t.utterances.get(idx.checked_sub(1)?).map(|u| u.speaker.category())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreeRates {
    pub offensive_pairs: usize,
    pub agree_after_offensive: usize,
    pub safe_pairs: usize,
    pub agree_after_safe: usize,
}

impl AgreeRates {
    pub fn given_offensive(&self) -> Option<f64> {
        (self.offensive_pairs > 0).then(|| self.agree_after_offensive as f64 / self.offensive_pairs as f64)
    }

    pub fn given_safe(&self) -> Option<f64> {
        (self.safe_pairs > 0).then(|| self.agree_after_safe as f64 / self.safe_pairs as f64)
    }
}

/// P(Agree | earlier utterance offensive) and P(Agree | earlier safe) over
/// every labeled stance pair, keyed by the responder's category.
pub fn agree_rate_by_context(data: &[(&Thread, &AggregatedLabels)]) -> BTreeMap<String, AgreeRates> {
    let mut out: BTreeMap<String, AgreeRates> = BTreeMap::new();
    for (t, g) in data {
        for (earlier, later, stance) in g.stance_pairs() {
            let (Some(cat), Some(off)) = (category(t, later), g.offensive(earlier)) else { continue };
            let r = out.entry(cat.to_string()).or_default();
            let agree = (stance == Stance::Agree) as usize;
            if off {
                r.offensive_pairs += 1;
                r.agree_after_offensive += agree;
            } else {
                r.safe_pairs += 1;
                r.agree_after_safe += agree;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectContextual {
    pub direct: usize,
    pub contextual: usize,
    /// Replies that agree with at least one earlier offensive utterance.
    pub agree_with_offensive: usize,
    /// ... of which are themselves offensive.
    pub agree_with_offensive_and_offensive: usize,
}

impl DirectContextual {
    pub fn offensive_share_of_agreeing(&self) -> Option<f64> {
        (self.agree_with_offensive > 0)
            .then(|| self.agree_with_offensive_and_offensive as f64 / self.agree_with_offensive as f64)
    }
}

/// Splits offensive replies (`u_i`, i >= 2) into contextual ones, which agree
/// with an earlier offensive utterance, and direct ones.
pub fn direct_vs_contextual(data: &[(&Thread, &AggregatedLabels)]) -> BTreeMap<String, DirectContextual> {
    let mut out: BTreeMap<String, DirectContextual> = BTreeMap::new();
    for (t, g) in data {
        for item in g.items.iter().filter(|it| it.idx >= 2) {
            let Some(cat) = category(t, item.idx) else { continue };
            let agrees_with_off = item
                .stance
                .iter()
                .any(|(&j, &s)| s == Stance::Agree && g.offensive(j) == Some(true));
            let r = out.entry(cat.to_string()).or_default();
            if agrees_with_off {
                r.agree_with_offensive += 1;
                r.agree_with_offensive_and_offensive += item.off as usize;
            }
            if item.off {
                if agrees_with_off {
                    r.contextual += 1;
                } else {
                    r.direct += 1;
                }
            }
        }
    }
    out
}

/// Highest counts first, ties by name.
pub fn rank_top_k<I: IntoIterator<Item = (String, usize)>>(counts: I, k: usize) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

/// Target groups of gold-offensive utterances per speaker category. A group
/// counts for an utterance when at least `min_votes` workers chose it.
pub fn target_group_top_k(
    data: &[(&Thread, &AggregatedLabels)],
    k: usize,
    min_votes: usize,
) -> BTreeMap<String, Vec<(String, usize)>> {
    let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for (t, g) in data {
        for item in g.items.iter().filter(|it| it.off) {
            let Some(cat) = category(t, item.idx) else { continue };
            let c = counts.entry(cat.to_string()).or_default();
            for (group, &votes) in &item.targets {
                if votes >= min_votes {
                    *c.entry(group.clone()).or_default() += 1;
                }
            }
        }
    }
    counts.into_iter().map(|(cat, c)| (cat, rank_top_k(c, k))).collect()
}

/// Fraction of gold-offensive utterances matching the lexicon, per speaker
/// category. Categories with no offensive utterance are absent.
pub fn profanity_share(data: &[(&Thread, &AggregatedLabels)], lexicon: &Lexicon) -> BTreeMap<String, f64> {
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (t, g) in data {
        for item in g.items.iter().filter(|it| it.off) {
            let Some(u) = item.idx.checked_sub(1).and_then(|i| t.utterances.get(i)) else { continue };
            let e = tally.entry(u.speaker.category().to_string()).or_default();
            e.0 += 1;
            e.1 += lexicon.is_match(&u.text) as usize;
        }
    }
    tally.into_iter().map(|(c, (n, hits))| (c, hits as f64 / n as f64)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub threads: usize,
    pub utterances: usize,
    pub mean_thread_len: f64,
    pub mean_words: f64,
    pub by_source: BTreeMap<String, usize>,
    /// Final-utterance speaker category counts.
    pub by_responder: BTreeMap<String, usize>,
    pub labeled_threads: usize,
    pub offensive_utterances: usize,
    pub stance_pairs: BTreeMap<String, usize>,
}

pub fn corpus_stats(threads: &[Thread], gold: &[AggregatedLabels]) -> CorpusStats {
    let mut s = CorpusStats { threads: threads.len(), ..Default::default() };
    let mut words = 0usize;
    for t in threads {
        s.utterances += t.len();
        words += t.utterances.iter().map(|u| u.word_count()).sum::<usize>();
        *s.by_source.entry(t.source.to_string()).or_default() += 1;
        if let Some(u) = t.last() {
            *s.by_responder.entry(u.speaker.category().to_string()).or_default() += 1;
        }
    }
    if s.threads > 0 {
        s.mean_thread_len = s.utterances as f64 / s.threads as f64;
    }
    if s.utterances > 0 {
        s.mean_words = words as f64 / s.utterances as f64;
    }
    for (_, g) in join_gold(threads, gold) {
        s.labeled_threads += 1;
        s.offensive_utterances += g.items.iter().filter(|i| i.off).count();
        for (_, _, st) in g.stance_pairs() {
            *s.stance_pairs.entry(st.name().to_string()).or_default() += 1;
        }
    }
    s
}
