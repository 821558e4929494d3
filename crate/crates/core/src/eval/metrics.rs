use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One-vs-rest precision, recall and F1 for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PrF1 {
    /// Zero denominators give 0 rather than NaN.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        Self { precision, recall, f1, tp, fp, fn_ }
    }
}

fn check_lengths(preds: &[usize], golds: &[usize]) -> Result<(), EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    Ok(())
}

pub fn f1(preds: &[usize], golds: &[usize], positive: usize) -> Result<PrF1, EvalError> {
    check_lengths(preds, golds)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &g) in preds.iter().zip(golds) {
        match (p == positive, g == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(PrF1::from_counts(tp, fp, fn_))
}

/// Unweighted mean of per-class F1.
pub fn macro_f1(per_class: &[f64]) -> f64 {
    if per_class.is_empty() {
        return 0.0;
    }
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

pub fn macro_f1_of(preds: &[usize], golds: &[usize], n_classes: usize) -> Result<(Vec<PrF1>, f64), EvalError> {
    check_lengths(preds, golds)?;
    if let Some(&label) = preds.iter().chain(golds).find(|&&l| l >= n_classes) {
        return Err(EvalError::LabelOutOfRange { label, n_classes });
    }
    let per: Vec<PrF1> = (0..n_classes).map(|c| f1(preds, golds, c)).collect::<Result<_, _>>()?;
    let m = macro_f1(&per.iter().map(|p| p.f1).collect::<Vec<_>>());
    Ok((per, m))
}

/// Unique n-grams over total n-grams across all responses, whitespace
/// tokenized. `None` when the responses contain no n-gram at all.
pub fn distinct_n<S: AsRef<str>>(responses: &[S], n: usize) -> Option<f64> {
    if n == 0 {
        return None;
    }
    let mut total = 0usize;
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    for r in responses {
        let toks: Vec<&str> = r.as_ref().split_whitespace().collect();
        for w in toks.windows(n) {
            total += 1;
            seen.insert(w.to_vec());
        }
    }
    (total > 0).then(|| seen.len() as f64 / total as f64)
}
