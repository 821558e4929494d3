//! Seeded synthetic corpora for tests, demos and the end-to-end pipeline.
//!
//! Offensive utterances always contain a trigger word and stance replies
//! open with a marker phrase, so both tasks are learnable from bags of words.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotation::{ItemAnnotation, Offensive4, Stance, WorkerAnnotation};
use crate::corpus::{offensive_subreddits, Source, Speaker, Thread, Utterance, UtteranceKind};
use crate::nbow::{tokenize, ExampleInput, LabeledExample, Origin};

pub const TRIGGERS: [&str; 8] = ["idiots", "trash", "disgusting", "scum", "pathetic", "losers", "vermin", "damn"];

const FILLER: [&str; 40] = [
    "the", "game", "last", "night", "was", "really", "about", "weather", "city", "people", "think", "movie",
    "music", "book", "coffee", "morning", "work", "team", "season", "price", "phone", "update", "news", "story",
    "friend", "weekend", "trip", "food", "place", "time", "school", "dog", "cat", "garden", "car", "road",
    "history", "science", "question", "answer",
];

const AGREE_MARKERS: [&str; 3] = ["totally agree", "yes exactly", "so true"];
const DISAGREE_MARKERS: [&str; 3] = ["no way", "that is wrong", "completely disagree"];
const NEUTRAL_OPENERS: [&str; 4] = ["also", "anyway", "meanwhile", "separately"];

const TARGETS: [&str; 8] = ["women", "men", "muslims", "black folks", "immigrants", "liberals", "conservatives", "reddit user"];
const ANY_SUBS: [&str; 5] = ["r/AskReddit", "r/movies", "r/news", "r/gaming", "r/science"];

/// 2019-01-01T00:00:00Z
const EPOCH_2019: i64 = 1_546_300_800;
const MONTH_SECS: i64 = 30 * 24 * 3600;

#[derive(Debug, Clone, PartialEq)]
pub struct TrueLabels {
    pub thread: String,
    /// Per utterance, in order.
    pub offensive: Vec<bool>,
    /// Stance of each utterance toward each earlier one, keyed `(earlier, later)`, 1-based.
    pub stance: BTreeMap<(usize, usize), Stance>,
    pub targets: Vec<Option<&'static str>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub threads: Vec<Thread>,
    pub annotations: Vec<WorkerAnnotation>,
    pub truth: Vec<TrueLabels>,
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub threads: usize,
    pub workers_per_thread: usize,
    pub worker_pool: usize,
    /// Chance a worker reports the true label.
    pub worker_accuracy: f64,
    pub bot_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { threads: 200, workers_per_thread: 5, worker_pool: 12, worker_accuracy: 0.9, bot_rate: 0.35, seed: 7 }
    }
}

fn filler(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| *FILLER.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

fn utterance_text(rng: &mut ChaCha8Rng, offensive: bool, target: Option<&str>, stance: Option<Stance>) -> String {
    let mut parts = Vec::new();
    match stance {
        Some(Stance::Agree) => parts.push(AGREE_MARKERS.choose(rng).expect("non-empty").to_string()),
        Some(Stance::Disagree) => parts.push(DISAGREE_MARKERS.choose(rng).expect("non-empty").to_string()),
        Some(Stance::Neutral) => parts.push(NEUTRAL_OPENERS.choose(rng).expect("non-empty").to_string()),
        None => {}
    }
    let n = rng.random_range(4..9);
    parts.push(filler(rng, n));
    if offensive {
        let trig = TRIGGERS.choose(rng).expect("non-empty");
        match target {
            Some(t) => parts.push(format!("{t} are {trig}")),
            None => parts.push(format!("you are {trig}")),
        }
    }
    parts.join(" ")
}

fn generate_thread(id: String, rng: &mut ChaCha8Rng, bot_rate: f64) -> (Thread, TrueLabels) {
    let offensive_source = rng.random_bool(0.5);
    let (source, subreddit) = if offensive_source {
        (Source::OffensiveSub, offensive_subreddits().choose(rng).cloned().unwrap_or_default())
    } else {
        (Source::AnySub, ANY_SUBS.choose(rng).expect("non-empty").to_string())
    };
    let p_off = if offensive_source { 0.35 } else { 0.2 };
    let n_comments = rng.random_range(1..5);
    let with_bot = rng.random_bool(bot_rate);
    let k = 1 + n_comments + with_bot as usize;
    let month = rng.random_range(0..6);
    let base = EPOCH_2019 + month * MONTH_SECS;

    let mut truth = TrueLabels { thread: id.clone(), offensive: Vec::new(), stance: BTreeMap::new(), targets: Vec::new() };
    let mut utterances = Vec::with_capacity(k);
    for i in 1..=k {
        let bot_model = (with_bot && i == k).then(|| if rng.random_bool(0.5) { "dgpt" } else { "gpt3" });
        let prev_off = i >= 2 && truth.offensive[i - 2];
        let stance = (i >= 2).then(|| {
            let r: f64 = rng.random();
            let agree = if prev_off { 0.35 } else { 0.15 };
            if r < agree {
                Stance::Agree
            } else if r < agree + 0.15 {
                Stance::Disagree
            } else {
                Stance::Neutral
            }
        });
        // Agreeing with an offensive parent is usually offensive too.
        let offensive = if stance == Some(Stance::Agree) && prev_off { rng.random_bool(0.8) } else { rng.random_bool(p_off) };
        let target = (offensive && rng.random_bool(0.7)).then(|| *TARGETS.choose(rng).expect("non-empty"));
        let text = utterance_text(rng, offensive, target, stance);
        truth.offensive.push(offensive);
        truth.targets.push(target);
        if let Some(s) = stance {
            truth.stance.insert((i - 1, i), s);
            for j in 1..i - 1 {
                truth.stance.insert((j, i), Stance::Neutral);
            }
        }
        let (speaker, kind) = match (i, bot_model) {
            (_, Some(m)) => (Speaker::Bot(m.to_string()), UtteranceKind::BotResponse),
            (1, None) => (Speaker::Human(String::new()), UtteranceKind::Post),
            (_, None) => (Speaker::Human(format!("user{}", rng.random_range(0..500))), UtteranceKind::Comment),
        };
        let created_at = (i >= 2).then(|| base + rng.random_range(0..MONTH_SECS));
        utterances.push(Utterance { text, speaker, kind, created_at });
    }
    (Thread { id, subreddit, source, utterances }, truth)
}

fn noisy_off(rng: &mut ChaCha8Rng, truth: bool, acc: f64) -> Offensive4 {
    let says_off = if rng.random_bool(acc) { truth } else { !truth };
    match (says_off, rng.random_bool(0.8)) {
        (true, true) => Offensive4::Yes,
        (true, false) => Offensive4::Maybe,
        (false, true) => Offensive4::No,
        (false, false) => Offensive4::NotSure,
    }
}

fn noisy_stance(rng: &mut ChaCha8Rng, truth: Stance, acc: f64) -> Stance {
    if rng.random_bool(acc) {
        truth
    } else {
        *Stance::ALL.iter().filter(|s| **s != truth).collect::<Vec<_>>().choose(rng).copied().expect("two others")
    }
}

fn annotate(thread: &Thread, truth: &TrueLabels, worker: String, rng: &mut ChaCha8Rng, acc: f64) -> WorkerAnnotation {
    let items = (1..=thread.len())
        .map(|i| {
            let off = noisy_off(rng, truth.offensive[i - 1], acc);
            let targets = match (crate::annotation::map_offense_4to2(off), truth.targets[i - 1]) {
                (true, Some(t)) => vec![t.to_string()],
                (true, None) => vec!["comment author".to_string()],
                (false, _) => Vec::new(),
            };
            let stance = (1..i).map(|j| (j, noisy_stance(rng, truth.stance[&(j, i)], acc))).collect();
            let plausible = thread.utterances[i - 1].speaker.is_bot().then(|| rng.random_bool(0.85));
            ItemAnnotation { idx: i, off, targets, stance, plausible }
        })
        .collect();
    WorkerAnnotation { worker, thread: thread.id.clone(), items }
}

pub fn synthetic_corpus(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool: Vec<String> = (1..=cfg.worker_pool.max(cfg.workers_per_thread)).map(|w| format!("w{w:02}")).collect();
    let mut out = SyntheticCorpus { threads: Vec::new(), annotations: Vec::new(), truth: Vec::new() };
    for n in 0..cfg.threads {
        let (thread, truth) = generate_thread(format!("syn-{n:04}"), &mut rng, cfg.bot_rate);
        let mut workers = pool.clone();
        workers.shuffle(&mut rng);
        for w in workers.into_iter().take(cfg.workers_per_thread) {
            out.annotations.push(annotate(&thread, &truth, w, &mut rng, cfg.worker_accuracy));
        }
        out.threads.push(thread);
        out.truth.push(truth);
    }
    out
}

/// Single-utterance offensive examples; label 1 iff the text holds a trigger word.
pub fn separable_offensive_examples(n: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let off = rng.random_bool(0.5);
            let text = utterance_text(&mut rng, off, None, None);
            LabeledExample {
                input: ExampleInput::Utterance(tokenize(&text, true)),
                label: off as usize,
                origin: Origin { thread: format!("sep-{i}"), index: 1, earlier: None },
            }
        })
        .collect()
}

/// Stance pairs where Agree and Disagree each appear once per `ratio`
/// Neutral pairs in expectation. The classes overlap: a minority reply shows
/// its marker only half the time, and 2% of neutral replies carry a stray
/// agree or disagree marker.
pub fn imbalanced_stance_examples(n: usize, ratio: u32, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_minority = 1.0 / (ratio as f64 + 2.0);
    (0..n)
        .map(|i| {
            let r: f64 = rng.random();
            let stance = if r < p_minority {
                Stance::Agree
            } else if r < 2.0 * p_minority {
                Stance::Disagree
            } else {
                Stance::Neutral
            };
            let earlier = utterance_text(&mut rng, false, None, None);
            let cue = match stance {
                Stance::Neutral if r > 1.0 - 0.02 => Stance::Agree,
                Stance::Neutral if r > 1.0 - 0.04 => Stance::Disagree,
                Stance::Neutral => Stance::Neutral,
                minority if rng.random_bool(0.5) => minority,
                _ => Stance::Neutral,
            };
            let later = utterance_text(&mut rng, false, None, Some(cue));
            LabeledExample {
                input: ExampleInput::Pair { earlier: tokenize(&earlier, true), later: tokenize(&later, true) },
                label: stance.index(),
                origin: Origin { thread: format!("imb-{i}"), index: 2, earlier: Some(1) },
            }
        })
        .collect()
}
