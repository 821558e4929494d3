//! Toolkit for studying offensive language and stance in threaded conversations.
//!
//! The crate covers the full data path: thread ingestion ([`corpus`]), crowd
//! label aggregation and agreement ([`annotation`]), a from-scratch
//! neural-bag-of-words classifier ([`nbow`]), scoring and precision-targeted
//! thresholds ([`scorer`]), metrics and analyses ([`eval`]) and controllable
//! generation corpora ([`ctg`]).

pub mod annotation;
pub mod corpus;
pub mod ctg;
pub mod eval;
pub mod nbow;
pub mod scorer;
pub mod synthetic;

/// Class index of "safe" in offensive-task probability vectors.
pub const SAFE: usize = 0;
/// Class index of "offensive" in offensive-task probability vectors.
pub const OFFENSIVE: usize = 1;

pub use annotation::Stance;
pub use corpus::{Thread, Utterance};
