use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{high_precision_label, HighPrecisionLabel, ScoreVector, Task};

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("{scores} score vectors but {labels} gold labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("dev set has no gold positives for class {0}")]
    NoPositives(usize),
    #[error("score vector for {found} passed to {expected} calibration")]
    TaskMismatch { expected: Task, found: Task },
    #[error("gold label {0} out of range")]
    LabelOutOfRange(usize),
    #[error("invalid grid: {0}")]
    BadGrid(String),
}

/// Threshold grid expressed in units of `1 / denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub start: u32,
    pub stop: u32,
    pub denominator: u32,
}

impl Default for Grid {
    /// 0.50, 0.51, ..., 0.99.
    fn default() -> Self {
        Self { start: 50, stop: 99, denominator: 100 }
    }
}

impl Grid {
    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (self.start..=self.stop).map(|k| k as f64 / self.denominator as f64)
    }

    fn validate(&self) -> Result<(), CalibrationError> {
        if self.denominator == 0 || self.start > self.stop || self.stop >= self.denominator {
            return Err(CalibrationError::BadGrid(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassThreshold {
    pub class: usize,
    pub threshold: f64,
    /// Precision on the calibration set at `threshold`.
    pub achieved_precision: f64,
    pub attainable: bool,
    /// Items predicted as this class at `threshold`.
    pub predicted: usize,
}

/// Per-class decision thresholds with the precision they achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub task: Task,
    pub grid: Grid,
    pub target_precision: f64,
    pub classes: Vec<ClassThreshold>,
}

impl ThresholdTable {
    pub fn label(&self, score: &ScoreVector) -> HighPrecisionLabel {
        high_precision_label(score, self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("threshold table serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Precision of "predict `class` when its probability is at least `t`",
/// with the number of predicted items. `None` when nothing is predicted.
pub fn precision_at(scores: &[ScoreVector], gold: &[usize], class: usize, t: f64) -> Option<(f64, usize)> {
    let mut tp = 0usize;
    let mut predicted = 0usize;
    for (s, &g) in scores.iter().zip(gold) {
        if s.probs[class] >= t {
            predicted += 1;
            if g == class {
                tp += 1;
            }
        }
    }
    (predicted > 0).then(|| (tp as f64 / predicted as f64, predicted))
}

/// For each class, the smallest grid threshold whose precision on the given
/// set reaches `target_precision`. Classes with no such point are marked
/// unattainable and pinned to the top of the grid.
pub fn calibrate_thresholds(
    task: Task,
    scores: &[ScoreVector],
    gold: &[usize],
    target_precision: f64,
    grid: Grid,
) -> Result<ThresholdTable, CalibrationError> {
    grid.validate()?;
    if scores.len() != gold.len() {
        return Err(CalibrationError::LengthMismatch { scores: scores.len(), labels: gold.len() });
    }
    if let Some(s) = scores.iter().find(|s| s.task != task) {
        return Err(CalibrationError::TaskMismatch { expected: task, found: s.task });
    }
    if let Some(&g) = gold.iter().find(|&&g| g >= task.n_classes()) {
        return Err(CalibrationError::LabelOutOfRange(g));
    }
    let mut classes = Vec::with_capacity(task.n_classes());
    for class in 0..task.n_classes() {
        if !gold.contains(&class) {
            return Err(CalibrationError::NoPositives(class));
        }
        let chosen = grid.points().find_map(|t| {
            precision_at(scores, gold, class, t)
                .filter(|(p, _)| *p >= target_precision)
                .map(|(p, n)| (t, p, n))
        });
        classes.push(match chosen {
            Some((threshold, achieved_precision, predicted)) => ClassThreshold {
                class,
                threshold,
                achieved_precision,
                attainable: true,
                predicted,
            },
            None => {
                let top = grid.stop as f64 / grid.denominator as f64;
                let (achieved_precision, predicted) = precision_at(scores, gold, class, top).unwrap_or((0.0, 0));
                ClassThreshold { class, threshold: top, achieved_precision, attainable: false, predicted }
            }
        });
    }
    Ok(ThresholdTable { task, grid, target_precision, classes })
}
