use serde::{Deserialize, Serialize};

use super::metrics::{f1, macro_f1_of};
use super::{EvalError, EvalReport};
use crate::annotation::Stance;
use crate::OFFENSIVE;

/// Offensive prediction for utterance `index` (1-based) of a thread.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtterancePrediction {
    pub thread: String,
    pub index: usize,
    pub pred: usize,
    pub gold: usize,
}

/// Stance prediction for `later` toward `earlier`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub thread: String,
    pub earlier: usize,
    pub later: usize,
    pub pred: usize,
    pub gold: usize,
}

/// Offensive-class precision, recall and F1 on all, first and reply
/// utterances. Empty slices produce no rows.
pub fn offensive_slices(items: &[UtterancePrediction]) -> Result<EvalReport, EvalError> {
    let mut report = EvalReport::default();
    let slices: [(&str, fn(&UtterancePrediction) -> bool); 3] =
        [("all", |_| true), ("first", |u| u.index == 1), ("reply", |u| u.index >= 2)];
    for (name, keep) in slices {
        let (preds, golds): (Vec<usize>, Vec<usize>) = items.iter().filter(|u| keep(u)).map(|u| (u.pred, u.gold)).unzip();
        if preds.is_empty() {
            continue;
        }
        let r = f1(&preds, &golds, OFFENSIVE)?;
        let n = preds.len();
        report.push("offensive", name, "precision", r.precision, n);
        report.push("offensive", name, "recall", r.recall, n);
        report.push("offensive", name, "f1", r.f1, n);
    }
    Ok(report)
}

/// Per-class and macro F1 on all pairs and on adjacent pairs `(u_i, u_{i+1})`.
pub fn stance_slices(items: &[PairPrediction]) -> Result<EvalReport, EvalError> {
    let mut report = EvalReport::default();
    let slices: [(&str, fn(&PairPrediction) -> bool); 2] =
        [("all", |_| true), ("adjacent", |p| p.later == p.earlier + 1)];
    for (name, keep) in slices {
        let (preds, golds): (Vec<usize>, Vec<usize>) = items.iter().filter(|p| keep(p)).map(|p| (p.pred, p.gold)).unzip();
        if preds.is_empty() {
            continue;
        }
        let n = preds.len();
        let (per, macro_f1) = macro_f1_of(&preds, &golds, Stance::ALL.len())?;
        for (s, r) in Stance::ALL.iter().zip(&per) {
            report.push("stance", name, &format!("{}_f1", s.name()), r.f1, n);
        }
        report.push("stance", name, "macro_f1", macro_f1, n);
    }
    Ok(report)
}
