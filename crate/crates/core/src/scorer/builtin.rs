use std::path::Path;

use rayon::prelude::*;

use super::{ScoreVector, Scorer, ScorerError, ScoringInput, Task};
use crate::corpus::split_eou;
use crate::nbow::checkpoint;
use crate::nbow::NbowModel;

/// File names looked up inside a builtin model directory.
pub const OFFENSIVE_MODEL_FILE: &str = "offensive.model.json";
pub const STANCE_MODEL_FILE: &str = "stance.model.json";

/// Scores with local NBOW models. Offensive inputs may be flattened threads;
/// only the final utterance is scored since the bag-of-words model has no
/// notion of context.
pub struct BuiltinScorer {
    offensive: Option<NbowModel>,
    stance: Option<NbowModel>,
    eou: String,
}

impl BuiltinScorer {
    pub fn new(offensive: Option<NbowModel>, stance: Option<NbowModel>, eou: impl Into<String>) -> Self {
        Self { offensive, stance, eou: eou.into() }
    }

    /// Loads whichever of the two model files exist in `dir`.
    pub fn from_dir(dir: &Path, eou: impl Into<String>) -> Result<Self, ScorerError> {
        let load = |name: &str| -> Result<Option<NbowModel>, ScorerError> {
            let p = dir.join(name);
            if !p.exists() {
                return Ok(None);
            }
            checkpoint::load_path(&p).map(Some).map_err(|e| ScorerError::Model(format!("{}: {e}", p.display())))
        };
        let s = Self::new(load(OFFENSIVE_MODEL_FILE)?, load(STANCE_MODEL_FILE)?, eou);
        if s.offensive.is_none() && s.stance.is_none() {
            return Err(ScorerError::Model(format!("no model files found in {}", dir.display())));
        }
        Ok(s)
    }

    pub fn offensive_model(&self) -> Option<&NbowModel> {
        self.offensive.as_ref()
    }

    pub fn stance_model(&self) -> Option<&NbowModel> {
        self.stance.as_ref()
    }

    fn score_one(&self, task: Task, item: &ScoringInput) -> Result<ScoreVector, ScorerError> {
        let model = match task {
            Task::Offensive => self.offensive.as_ref(),
            Task::Stance => self.stance.as_ref(),
        }
        .ok_or(ScorerError::MissingModel(task))?;
        let probs = match (task, item) {
            (Task::Offensive, ScoringInput::Single { text }) => {
                let last = if text.contains(&self.eou) {
                    split_eou(text, &self.eou).pop().unwrap_or_default()
                } else {
                    text.clone()
                };
                model.predict_text(&last)
            }
            (Task::Stance, ScoringInput::Pair { a, b }) => model.predict_pair(a, b),
            _ => return Err(ScorerError::SchemaError(format!("{task} scoring got the wrong input shape"))),
        }
        .map_err(|e| ScorerError::Model(e.to_string()))?;
        ScoreVector::new(task, probs)
    }
}

impl Scorer for BuiltinScorer {
    fn score_batch(&self, task: Task, items: &[ScoringInput]) -> Result<Vec<ScoreVector>, ScorerError> {
        items.par_iter().map(|i| self.score_one(task, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nbow::{ModelConfig, NbowModel};

    fn model(task: Task) -> NbowModel {
        let cfg = ModelConfig { dim: 4, hidden: (4, 3), ..ModelConfig::new(task) };
        let vocab: Vec<String> = ["you", "are", "right"].iter().map(|s| s.to_string()).collect();
        NbowModel::new(&cfg, &vocab, None, 1).unwrap()
    }

    #[test]
    fn delegates_to_model() {
        let s = BuiltinScorer::new(Some(model(Task::Offensive)), Some(model(Task::Stance)), "[EOU]");
        let direct = s.offensive_model().unwrap().predict_text("you are right").unwrap();
        let via = s.score_batch(Task::Offensive, &[ScoringInput::text("hello[EOU]you are right[EOU]")]).unwrap();
        assert_eq!(via[0].probs, direct);
        let pair = s.score_batch(Task::Stance, &[ScoringInput::pair("you", "right")]).unwrap();
        assert_eq!(pair[0].probs, s.stance_model().unwrap().predict_pair("you", "right").unwrap());
    }

    #[test]
    fn missing_model_and_shape() {
        let s = BuiltinScorer::new(Some(model(Task::Offensive)), None, "[EOU]");
        assert!(matches!(
            s.score_batch(Task::Stance, &[ScoringInput::pair("a", "b")]),
            Err(ScorerError::MissingModel(Task::Stance))
        ));
        assert!(s.score_batch(Task::Offensive, &[ScoringInput::pair("a", "b")]).is_err());
    }

    #[test]
    fn order_preserved() {
        let s = BuiltinScorer::new(Some(model(Task::Offensive)), None, "[EOU]");
        let texts = ["you", "are", "right", "you are", "nothing"];
        let items: Vec<ScoringInput> = texts.iter().map(|t| ScoringInput::text(*t)).collect();
        let got = s.score_batch(Task::Offensive, &items).unwrap();
        for (t, g) in texts.iter().zip(got) {
            assert_eq!(g.probs, s.offensive_model().unwrap().predict_text(t).unwrap());
        }
    }
}
