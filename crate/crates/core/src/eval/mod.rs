//! Metrics, lexicon matching and corpus analyses.

pub mod analysis;
pub mod autoeval;
pub mod lexicon;
pub mod metrics;
pub mod report;
pub mod slices;
pub mod temporal;

use thiserror::Error;

use crate::scorer::ScorerError;

pub use analysis::{
    agree_rate_by_context, corpus_stats, direct_vs_contextual, join_gold, profanity_share, rank_top_k,
    target_group_top_k, AgreeRates, CorpusStats, DirectContextual,
};
pub use autoeval::{ctg_auto_eval, responses_from_threads, AutoEvalRow, GeneratedResponse};
pub use lexicon::{percent_bad, Lexicon, LexiconEntry, LexiconKind};
pub use metrics::{distinct_n, f1, macro_f1, macro_f1_of, PrF1};
pub use report::{emit_report, EvalReport, ReportFormat, ReportRow};
pub use slices::{offensive_slices, stance_slices, PairPrediction, UtterancePrediction};
pub use temporal::{temporal_stance_distribution, BucketCounts, ContextBucket, TemporalDistribution};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{preds} predictions for {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("bad lexicon pattern {pattern:?}: {message}")]
    BadRegex { pattern: String, message: String },
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("response {0} has no context")]
    MissingContext(usize),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
