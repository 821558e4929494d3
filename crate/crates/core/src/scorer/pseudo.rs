//! High-precision pseudo-labels for large thread corpora.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{HighPrecisionLabel, Scorer, ScorerError, ScoringInput, Task, ThresholdTable};
use crate::corpus::{flatten_texts, Thread};

#[derive(Debug, Error)]
pub enum PseudoLabelError {
    #[error("thread {thread} has {len} utterance(s); at least 2 are needed")]
    ThreadTooShort { thread: String, len: usize },
    #[error("scoring threads starting at {thread}: {source}")]
    Scorer {
        thread: String,
        #[source]
        source: ScorerError,
    },
    #[error("threshold table is for the {found} task, expected {expected}")]
    TableMismatch { expected: Task, found: Task },
}

/// A thread with the offensive label of its last utterance, the stance of
/// the last utterance toward the one before it, and the offensive label of
/// every context utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeledThread {
    pub thread: Thread,
    pub offensive: HighPrecisionLabel,
    pub stance: HighPrecisionLabel,
    /// Labels for `u_1..u_{k-1}`.
    pub context_offensive: Vec<HighPrecisionLabel>,
    pub off_probs: Vec<f64>,
    pub stance_probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    thread: Thread,
    offensive: String,
    stance: String,
    context_offensive: Vec<String>,
    off_probs: Vec<f64>,
    stance_probs: Vec<f64>,
}

impl Serialize for PseudoLabeledThread {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Record {
            thread: self.thread.clone(),
            offensive: self.offensive.name(Task::Offensive).into(),
            stance: self.stance.name(Task::Stance).into(),
            context_offensive: self.context_offensive.iter().map(|l| l.name(Task::Offensive).into()).collect(),
            off_probs: self.off_probs.clone(),
            stance_probs: self.stance_probs.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PseudoLabeledThread {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = Record::deserialize(d)?;
        let parse = |task, s: &str| HighPrecisionLabel::from_name(task, s).ok_or_else(|| D::Error::custom(format!("bad {task} label {s:?}")));
        Ok(Self {
            offensive: parse(Task::Offensive, &r.offensive)?,
            stance: parse(Task::Stance, &r.stance)?,
            context_offensive: r
                .context_offensive
                .iter()
                .map(|s| parse(Task::Offensive, s))
                .collect::<Result<_, _>>()?,
            thread: r.thread,
            off_probs: r.off_probs,
            stance_probs: r.stance_probs,
        })
    }
}

/// Scores threads in fixed-size chunks so memory stays bounded by the chunk.
pub struct PseudoLabeler<'a> {
    pub scorer: &'a dyn Scorer,
    pub offensive_table: &'a ThresholdTable,
    pub stance_table: &'a ThresholdTable,
    pub eou: String,
    pub chunk_size: usize,
}

impl<'a> PseudoLabeler<'a> {
    pub fn new(
        scorer: &'a dyn Scorer,
        offensive_table: &'a ThresholdTable,
        stance_table: &'a ThresholdTable,
        eou: impl Into<String>,
    ) -> Result<Self, PseudoLabelError> {
        if offensive_table.task != Task::Offensive {
            return Err(PseudoLabelError::TableMismatch { expected: Task::Offensive, found: offensive_table.task });
        }
        if stance_table.task != Task::Stance {
            return Err(PseudoLabelError::TableMismatch { expected: Task::Stance, found: stance_table.task });
        }
        Ok(Self { scorer, offensive_table, stance_table, eou: eou.into(), chunk_size: 256 })
    }

    /// Offensive input for `u_i`: the flattened prefix `u_1..u_i`.
    fn prefix_inputs(&self, t: &Thread) -> Vec<ScoringInput> {
        let texts = t.texts();
        (1..=texts.len())
            .map(|i| ScoringInput::text(flatten_texts(texts[..i].iter().copied(), &self.eou)))
            .collect()
    }

    pub fn label_chunk(&self, threads: &[Thread]) -> Result<Vec<PseudoLabeledThread>, PseudoLabelError> {
        if let Some(t) = threads.iter().find(|t| t.len() < 2) {
            return Err(PseudoLabelError::ThreadTooShort { thread: t.id.clone(), len: t.len() });
        }
        let Some(first) = threads.first() else { return Ok(Vec::new()) };
        let wrap = |source| PseudoLabelError::Scorer { thread: first.id.clone(), source };
        let mut off_inputs = Vec::new();
        let mut stance_inputs = Vec::with_capacity(threads.len());
        for t in threads {
            off_inputs.extend(self.prefix_inputs(t));
            let k = t.len();
            stance_inputs.push(ScoringInput::pair(&t.utterances[k - 2].text, &t.utterances[k - 1].text));
        }
        let off = self.scorer.score_batch(Task::Offensive, &off_inputs).map_err(wrap)?;
        let stance = self.scorer.score_batch(Task::Stance, &stance_inputs).map_err(wrap)?;
        if off.len() != off_inputs.len() || stance.len() != stance_inputs.len() {
            return Err(wrap(ScorerError::SchemaError("scorer returned the wrong number of rows".into())));
        }
        let mut out = Vec::with_capacity(threads.len());
        let mut offset = 0;
        for (t, st) in threads.iter().zip(stance) {
            let k = t.len();
            let scores = &off[offset..offset + k];
            offset += k;
            let labels: Vec<HighPrecisionLabel> = scores.iter().map(|s| self.offensive_table.label(s)).collect();
            out.push(PseudoLabeledThread {
                thread: t.clone(),
                offensive: labels[k - 1],
                stance: self.stance_table.label(&st),
                context_offensive: labels[..k - 1].to_vec(),
                off_probs: scores[k - 1].probs.clone(),
                stance_probs: st.probs,
            });
        }
        Ok(out)
    }

    /// Streams threads through the scorer chunk by chunk, handing each
    /// labeled thread to `sink` in input order.
    pub fn label_stream<I, F>(&self, threads: I, mut sink: F) -> Result<usize, PseudoLabelError>
    where
        I: IntoIterator<Item = Thread>,
        F: FnMut(PseudoLabeledThread) -> std::io::Result<()>,
    {
        let mut buf = Vec::with_capacity(self.chunk_size);
        let mut n = 0;
        let mut flush = |buf: &mut Vec<Thread>, n: &mut usize| -> Result<(), PseudoLabelError> {
            for p in self.label_chunk(buf)? {
                sink(p).map_err(|e| PseudoLabelError::Scorer {
                    thread: buf[0].id.clone(),
                    source: ScorerError::Model(e.to_string()),
                })?;
                *n += 1;
            }
            buf.clear();
            Ok(())
        };
        for t in threads {
            buf.push(t);
            if buf.len() >= self.chunk_size.max(1) {
                flush(&mut buf, &mut n)?;
            }
        }
        if !buf.is_empty() {
            flush(&mut buf, &mut n)?;
        }
        Ok(n)
    }
}

pub fn pseudo_label_corpus(
    threads: &[Thread],
    scorer: &dyn Scorer,
    offensive_table: &ThresholdTable,
    stance_table: &ThresholdTable,
    eou: &str,
) -> Result<Vec<PseudoLabeledThread>, PseudoLabelError> {
    let labeler = PseudoLabeler::new(scorer, offensive_table, stance_table, eou)?;
    let mut out = Vec::with_capacity(threads.len());
    labeler.label_stream(threads.iter().cloned(), |p| {
        out.push(p);
        Ok(())
    })?;
    Ok(out)
}
