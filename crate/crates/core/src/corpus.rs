//! Threaded conversations: ingestion, cleaning, flattening and annotation sampling.
//!
//! A [`Thread`] is the ordered sequence `u_1..u_k` of utterances. The head
//! utterance is the title and post (joined with a blank line when both are
//! present), followed by the comment chain and any dialogue-model responses.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scorer::{Scorer, ScorerError, ScoringInput, Task, ThresholdTable, HighPrecisionLabel};
use crate::OFFENSIVE;

/// End-of-utterance separator used when flattening threads.
pub const DEFAULT_EOU: &str = "[EOU]";

/// Tokens that must never appear inside user text.
pub const RESERVED_TOKENS: [&str; 5] = ["[EOU]", "[SAFE]", "[OFF]", "[NEU]", "[AGR]"];

/// The ten offensive subreddits used as the offensive thread source.
pub const OFFENSIVE_SUBREDDITS_CONFIG: &str = include_str!("../data/offensive_subreddits.txt");

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(https?://[^\s]+)|(www\.[^\s]+)").expect("url regex"));

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("thread {thread}: utterance {index} is empty after cleaning")]
    EmptyAfterCleaning { thread: String, index: usize },
    #[error("{pool} source: found {found} threads scoring above the threshold, wanted {wanted}")]
    InsufficientOffensive {
        pool: Source,
        found: usize,
        wanted: usize,
    },
    #[error("{pool} source: only {found} threads available, wanted {wanted}")]
    InsufficientThreads {
        pool: Source,
        found: usize,
        wanted: usize,
    },
    #[error("found {found} offensive-ending threads, wanted {wanted}")]
    InsufficientOffensiveContexts { found: usize, wanted: usize },
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
    #[error("scoring failed: {0}")]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Human(String),
    Bot(String),
}

impl Speaker {
    /// Responder category used by the analyses: `"human"` or the bot's model name.
    pub fn category(&self) -> &str {
        match self {
            Speaker::Human(_) => "human",
            Speaker::Bot(model) => model,
        }
    }

    pub fn is_bot(&self) -> bool {
        matches!(self, Speaker::Bot(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtteranceKind {
    Title,
    Post,
    Comment,
    BotResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub speaker: Speaker,
    pub kind: UtteranceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<i64>,
}

impl Utterance {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[serde(rename = "any")]
    AnySub,
    #[serde(rename = "offensive")]
    OffensiveSub,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::AnySub => "any",
            Source::OffensiveSub => "offensive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thread {
    pub id: String,
    pub subreddit: String,
    pub source: Source,
    pub utterances: Vec<Utterance>,
}

impl Thread {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.utterances.iter().map(|u| u.text.as_str()).collect()
    }

    pub fn last(&self) -> Option<&Utterance> {
        self.utterances.last()
    }

    /// The last human-written utterance, which is what sampling scores.
    pub fn last_comment(&self) -> Option<&Utterance> {
        self.utterances
            .iter()
            .rev()
            .find(|u| !u.speaker.is_bot())
            .or_else(|| self.utterances.last())
    }

    /// Month bucket (`YYYY-MM`) of the final utterance, if it carries a timestamp.
    pub fn last_month(&self) -> Option<String> {
        let ts = self.last()?.created_at?;
        let dt = chrono::DateTime::from_timestamp(ts, 0)?;
        Some(dt.format("%Y-%m").to_string())
    }

    /// Converts back into the line-delimited ingestion record.
    pub fn to_record(&self) -> ThreadRecord {
        let mut record = ThreadRecord {
            id: self.id.clone(),
            subreddit: self.subreddit.clone(),
            source: self.source,
            title: None,
            post: None,
            comments: Vec::new(),
            bot_responses: None,
        };
        for u in &self.utterances {
            match (&u.kind, &u.speaker) {
                (UtteranceKind::Title, _) => record.title = Some(u.text.clone()),
                (UtteranceKind::Post, _) => record.post = Some(u.text.clone()),
                (UtteranceKind::Comment, speaker) => record.comments.push(CommentRecord {
                    author: match speaker {
                        Speaker::Human(a) | Speaker::Bot(a) => a.clone(),
                    },
                    text: u.text.clone(),
                    ts: u.created_at,
                }),
                (UtteranceKind::BotResponse, speaker) => {
                    record.bot_responses.get_or_insert_with(Vec::new).push(BotRecord {
                        model: match speaker {
                            Speaker::Human(a) | Speaker::Bot(a) => a.clone(),
                        },
                        text: u.text.clone(),
                        ts: u.created_at,
                    })
                }
            }
        }
        record
    }
}

/// One line of the thread ingestion format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreadRecord {
    pub id: String,
    pub subreddit: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post: Option<String>,
    #[serde(default)]
    pub comments: Vec<CommentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bot_responses: Option<Vec<BotRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommentRecord {
    pub author: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BotRecord {
    pub model: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<i64>,
}

impl TryFrom<ThreadRecord> for Thread {
    type Error = String;

    fn try_from(r: ThreadRecord) -> Result<Self, Self::Error> {
        if r.id.is_empty() {
            return Err("empty thread id".into());
        }
        let mut utterances = Vec::new();
        let title = r.title.filter(|t| !t.trim().is_empty());
        let post = r.post.filter(|p| !p.trim().is_empty());
        match (title, post) {
            (Some(t), Some(p)) => utterances.push(Utterance {
                text: format!("{t}\n\n{p}"),
                speaker: Speaker::Human(String::new()),
                kind: UtteranceKind::Post,
                created_at: None,
            }),
            (Some(t), None) => utterances.push(Utterance {
                text: t,
                speaker: Speaker::Human(String::new()),
                kind: UtteranceKind::Title,
                created_at: None,
            }),
            (None, Some(p)) => utterances.push(Utterance {
                text: p,
                speaker: Speaker::Human(String::new()),
                kind: UtteranceKind::Post,
                created_at: None,
            }),
            (None, None) => {}
        }
        for (n, c) in r.comments.into_iter().enumerate() {
            if c.text.trim().is_empty() {
                return Err(format!("comment {n} has empty text"));
            }
            utterances.push(Utterance {
                text: c.text,
                speaker: Speaker::Human(c.author),
                kind: UtteranceKind::Comment,
                created_at: c.ts,
            });
        }
        for (n, b) in r.bot_responses.unwrap_or_default().into_iter().enumerate() {
            if b.text.trim().is_empty() {
                return Err(format!("bot response {n} has empty text"));
            }
            if b.model.is_empty() {
                return Err(format!("bot response {n} has empty model name"));
            }
            utterances.push(Utterance {
                text: b.text,
                speaker: Speaker::Bot(b.model),
                kind: UtteranceKind::BotResponse,
                created_at: b.ts,
            });
        }
        if utterances.is_empty() {
            return Err("thread has no utterances".into());
        }
        Ok(Thread {
            id: r.id,
            subreddit: r.subreddit,
            source: r.source,
            utterances,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number in the input.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub threads: Vec<Thread>,
    pub errors: Vec<LineError>,
}

/// Parses line-delimited thread records. Blank lines are ignored; malformed
/// lines are reported and skipped. Only I/O failures abort.
pub fn parse_threads<R: BufRead>(reader: R) -> Result<ParseOutcome, CorpusError> {
    let mut out = ParseOutcome::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<ThreadRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(Thread::try_from);
        match parsed {
            Ok(t) => out.threads.push(t),
            Err(message) => out.errors.push(LineError { line: n + 1, message }),
        }
    }
    Ok(out)
}

/// Writes threads back in the ingestion format, one record per line.
pub fn write_threads<W: std::io::Write>(mut w: W, threads: &[Thread]) -> std::io::Result<()> {
    for t in threads {
        serde_json::to_writer(&mut w, &t.to_record())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub url_token: String,
    pub max_post_words: usize,
    pub max_comment_words: usize,
    pub lowercase_for_tokens: bool,
    /// Stripped from user text so flattening stays reversible.
    pub reserved_tokens: Vec<String>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            url_token: "<URL>".into(),
            max_post_words: 70,
            max_comment_words: 50,
            lowercase_for_tokens: true,
            reserved_tokens: RESERVED_TOKENS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.max_post_words == 0 || self.max_comment_words == 0 {
            return Err(CorpusError::InvalidConfig("word limits must be positive".into()));
        }
        if self.url_token.trim().is_empty() {
            return Err(CorpusError::InvalidConfig("url token must be non-empty".into()));
        }
        if URL_RE.is_match(&self.url_token)
            || self.reserved_tokens.iter().any(|r| self.url_token.contains(r.as_str()))
        {
            return Err(CorpusError::InvalidConfig(
                "url token must not look like a url or contain a reserved token".into(),
            ));
        }
        Ok(())
    }
}

/// Keeps the first `max_words` whitespace-delimited words, preserving the
/// original spacing between them.
pub fn truncate_words(text: &str, max_words: usize) -> &str {
    let mut words = 0;
    let mut in_word = false;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_word {
                in_word = false;
                if words == max_words {
                    return &text[..i];
                }
            }
        } else if !in_word {
            in_word = true;
            words += 1;
        }
    }
    text
}

fn clean_text(text: &str, cfg: &PreprocessConfig, max_words: usize) -> String {
    let mut s = text.to_string();
    for tok in &cfg.reserved_tokens {
        if !tok.is_empty() {
            s = s.replace(tok.as_str(), " ");
        }
    }
    let s = URL_RE.replace_all(&s, cfg.url_token.as_str());
    truncate_words(s.trim(), max_words).trim().to_string()
}

/// Replaces urls, strips reserved tokens and truncates each utterance to
/// its word budget. Idempotent.
pub fn preprocess(thread: &Thread, cfg: &PreprocessConfig) -> Result<Thread, CorpusError> {
    let mut out = thread.clone();
    for (i, u) in out.utterances.iter_mut().enumerate() {
        let limit = match u.kind {
            UtteranceKind::Title | UtteranceKind::Post => cfg.max_post_words,
            UtteranceKind::Comment | UtteranceKind::BotResponse => cfg.max_comment_words,
        };
        u.text = clean_text(&u.text, cfg, limit);
        if u.text.is_empty() {
            return Err(CorpusError::EmptyAfterCleaning {
                thread: thread.id.clone(),
                index: i + 1,
            });
        }
    }
    Ok(out)
}

/// `u_1 + eou + u_2 + eou + ... + u_k + eou`.
pub fn flatten_with_eou(thread: &Thread, eou: &str) -> String {
    flatten_texts(thread.utterances.iter().map(|u| u.text.as_str()), eou)
}

pub fn flatten_texts<'a, I: IntoIterator<Item = &'a str>>(texts: I, eou: &str) -> String {
    let mut s = String::new();
    for t in texts {
        s.push_str(t);
        s.push_str(eou);
    }
    s
}

/// Inverse of [`flatten_with_eou`].
pub fn split_eou(flat: &str, eou: &str) -> Vec<String> {
    let body = flat.strip_suffix(eou).unwrap_or(flat);
    if body.is_empty() {
        return Vec::new();
    }
    body.split(eou).map(str::to_string).collect()
}

pub const GPT3_PREAMBLE: &str = "The following is a conversation thread between multiple people on Reddit.";

/// Few-shot conversation prompt ending in an open slot for turn `k+1`.
pub fn gpt3_prompt(thread: &Thread) -> String {
    let mut s = String::from(GPT3_PREAMBLE);
    for (i, u) in thread.utterances.iter().enumerate() {
        s.push_str(&format!(" U{}:{}", i + 1, u.text));
    }
    s.push_str(&format!(" U{}:", thread.utterances.len() + 1));
    s
}

/// Sizes for the two-stage annotation sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub n_random_per_source: usize,
    pub n_offensive_per_source: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_random_per_source: 500,
            n_offensive_per_source: 500,
            threshold: 0.7,
            seed: 0,
        }
    }
}

fn dedup_sorted(threads: &[Thread]) -> Vec<&Thread> {
    let mut seen = HashSet::new();
    let mut sorted: Vec<&Thread> = threads.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    sorted.retain(|t| seen.insert(t.id.clone()));
    sorted
}

/// Two-stage sampling: per source, a uniform random sample, then from the
/// remaining threads a sample whose last comment scores at or above the
/// threshold for the offensive class.
///
/// Output is grouped by source (`any` first), random picks before offensive
/// picks. Threads are canonically ordered by id before seeding, so the result
/// does not depend on input order.
pub fn stratified_sample(
    threads: &[Thread],
    scorer: &dyn Scorer,
    cfg: &SampleConfig,
) -> Result<Vec<Thread>, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool = dedup_sorted(threads);
    let mut out = Vec::new();
    for source in [Source::AnySub, Source::OffensiveSub] {
        let mut candidates: Vec<&Thread> = pool.iter().copied().filter(|t| t.source == source).collect();
        if candidates.len() < cfg.n_random_per_source {
            return Err(CorpusError::InsufficientThreads {
                pool: source,
                found: candidates.len(),
                wanted: cfg.n_random_per_source,
            });
        }
        candidates.shuffle(&mut rng);
        let remainder = candidates.split_off(cfg.n_random_per_source);
        out.extend(candidates.into_iter().cloned());

        if cfg.n_offensive_per_source == 0 {
            continue;
        }
        // Restore canonical order so the second stage only depends on which
        // threads remain, not on the first-stage shuffle.
        let mut remainder = remainder;
        remainder.sort_by(|a, b| a.id.cmp(&b.id));
        let inputs: Vec<ScoringInput> = remainder
            .iter()
            .map(|t| ScoringInput::text(t.last_comment().map(|u| u.text.as_str()).unwrap_or("")))
            .collect();
        let scores = scorer.score_batch(Task::Offensive, &inputs)?;
        let mut qualifying: Vec<&Thread> = remainder
            .iter()
            .zip(&scores)
            .filter(|(_, s)| s.probs[OFFENSIVE] >= cfg.threshold)
            .map(|(t, _)| *t)
            .collect();
        if qualifying.len() < cfg.n_offensive_per_source {
            return Err(CorpusError::InsufficientOffensive {
                pool: source,
                found: qualifying.len(),
                wanted: cfg.n_offensive_per_source,
            });
        }
        qualifying.shuffle(&mut rng);
        qualifying.truncate(cfg.n_offensive_per_source);
        out.extend(qualifying.into_iter().cloned());
    }
    Ok(out)
}

/// Where the offensiveness of each thread's last utterance comes from.
pub enum LastUtteranceLabels<'a> {
    /// Gold labels keyed by thread id.
    Gold(&'a std::collections::HashMap<String, bool>),
    /// High-precision predictions from a scorer and calibrated thresholds.
    HighPrecision {
        scorer: &'a dyn Scorer,
        table: &'a ThresholdTable,
        eou: &'a str,
    },
}

/// Picks `n` threads whose final utterance is offensive. When more qualify,
/// a seeded sample is drawn; the result keeps input order.
pub fn select_offensive_contexts(
    threads: &[Thread],
    labels: &LastUtteranceLabels<'_>,
    n: usize,
    seed: u64,
) -> Result<Vec<Thread>, CorpusError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let flags: Vec<bool> = match labels {
        LastUtteranceLabels::Gold(map) => threads
            .iter()
            .map(|t| map.get(&t.id).copied().unwrap_or(false))
            .collect(),
        LastUtteranceLabels::HighPrecision { scorer, table, eou } => {
            let inputs: Vec<ScoringInput> = threads
                .iter()
                .map(|t| ScoringInput::text(flatten_with_eou(t, eou)))
                .collect();
            scorer
                .score_batch(Task::Offensive, &inputs)?
                .iter()
                .map(|s| table.label(s) == HighPrecisionLabel::Class(OFFENSIVE))
                .collect()
        }
    };
    let mut qualifying: Vec<usize> = (0..threads.len()).filter(|&i| flags[i]).collect();
    if qualifying.len() < n {
        return Err(CorpusError::InsufficientOffensiveContexts {
            found: qualifying.len(),
            wanted: n,
        });
    }
    if qualifying.len() > n {
        qualifying.sort_by(|&a, &b| threads[a].id.cmp(&threads[b].id).then(a.cmp(&b)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        qualifying.shuffle(&mut rng);
        qualifying.truncate(n);
        qualifying.sort_unstable();
    }
    Ok(qualifying.into_iter().map(|i| threads[i].clone()).collect())
}

/// Subreddit names from a one-per-line config (blank lines and `#` comments ignored).
pub fn parse_name_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn offensive_subreddits() -> Vec<String> {
    parse_name_list(OFFENSIVE_SUBREDDITS_CONFIG)
}
