use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lexicon::{percent_bad, Lexicon};
use super::metrics::distinct_n;
use super::{EvalError, EvalReport};
use crate::annotation::Stance;
use crate::corpus::{flatten_texts, Thread};
use crate::scorer::{Scorer, ScoringInput, Task};
use crate::OFFENSIVE;

/// A response from `model` to the thread `context`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedResponse {
    pub model: String,
    pub context: Vec<String>,
    pub response: String,
}

/// Automatic metrics for one model. Percentages are on a 0-100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoEvalRow {
    pub model: String,
    pub n: usize,
    pub len: f64,
    pub dist1: Option<f64>,
    pub dist2: Option<f64>,
    pub pct_bad: f64,
    pub pct_off: f64,
    pub pct_agree: f64,
    pub pct_neutral: f64,
    pub pct_disagree: f64,
}

/// Treats the last utterance of each thread as a response by its speaker's
/// category and everything before it as context.
pub fn responses_from_threads(threads: &[Thread]) -> Vec<GeneratedResponse> {
    threads
        .iter()
        .filter(|t| t.len() >= 2)
        .map(|t| {
            let (last, ctx) = t.utterances.split_last().expect("len >= 2");
            GeneratedResponse {
                model: last.speaker.category().to_string(),
                context: ctx.iter().map(|u| u.text.clone()).collect(),
                response: last.text.clone(),
            }
        })
        .collect()
}

/// Rows ordered by model name. Offensiveness is scored on the flattened
/// context plus response; stance on `(last context utterance, response)`.
/// Both use the argmax class.
pub fn ctg_auto_eval(
    responses: &[GeneratedResponse],
    offensive: &dyn Scorer,
    stance: &dyn Scorer,
    lexicon: &Lexicon,
    eou: &str,
) -> Result<Vec<AutoEvalRow>, EvalError> {
    if let Some(i) = responses.iter().position(|r| r.context.is_empty()) {
        return Err(EvalError::MissingContext(i));
    }
    let mut by_model: BTreeMap<&str, Vec<&GeneratedResponse>> = BTreeMap::new();
    for r in responses {
        by_model.entry(r.model.as_str()).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(by_model.len());
    for (model, group) in by_model {
        let off_inputs: Vec<ScoringInput> = group
            .iter()
            .map(|r| {
                let texts = r.context.iter().map(String::as_str).chain(std::iter::once(r.response.as_str()));
                ScoringInput::text(flatten_texts(texts, eou))
            })
            .collect();
        let stance_inputs: Vec<ScoringInput> = group
            .iter()
            .map(|r| ScoringInput::pair(r.context.last().expect("checked above"), &r.response))
            .collect();
        let off = offensive.score_batch(Task::Offensive, &off_inputs)?;
        let st = stance.score_batch(Task::Stance, &stance_inputs)?;
        let n = group.len();
        let pct = |count: usize| 100.0 * count as f64 / n as f64;
        let mut stance_counts = [0usize; 3];
        for s in &st {
            stance_counts[s.argmax()] += 1;
        }
        let texts: Vec<&str> = group.iter().map(|r| r.response.as_str()).collect();
        rows.push(AutoEvalRow {
            model: model.to_string(),
            n,
            len: texts.iter().map(|t| t.split_whitespace().count()).sum::<usize>() as f64 / n as f64,
            dist1: distinct_n(&texts, 1),
            dist2: distinct_n(&texts, 2),
            pct_bad: 100.0 * percent_bad(&texts, lexicon).unwrap_or(0.0),
            pct_off: pct(off.iter().filter(|s| s.argmax() == OFFENSIVE).count()),
            pct_agree: pct(stance_counts[Stance::Agree.index()]),
            pct_neutral: pct(stance_counts[Stance::Neutral.index()]),
            pct_disagree: pct(stance_counts[Stance::Disagree.index()]),
        });
    }
    Ok(rows)
}

impl AutoEvalRow {
    pub fn push_into(&self, report: &mut EvalReport) {
        let mut put = |metric: &str, v: f64| report.push("autoeval", &self.model, metric, v, self.n);
        put("len", self.len);
        if let Some(d) = self.dist1 {
            put("dist1", d);
        }
        if let Some(d) = self.dist2 {
            put("dist2", d);
        }
        put("pct_bad", self.pct_bad);
        put("pct_off", self.pct_off);
        put("pct_agree", self.pct_agree);
        put("pct_neutral", self.pct_neutral);
        put("pct_disagree", self.pct_disagree);
    }
}
