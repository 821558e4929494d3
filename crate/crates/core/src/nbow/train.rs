use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::{build_vocab, PretrainedVectors};
use super::loss::LossConfig;
use super::model::{Encoded, ExampleInput, LabeledExample, ModelConfig, NbowModel, Origin};
use super::optim::Adam;
use super::NbowError;
use crate::annotation::AggregatedLabels;
use crate::corpus::Thread;
use crate::eval::metrics::{f1, macro_f1_of};
use crate::nbow::embedding::tokenize;
use crate::scorer::Task;
use crate::OFFENSIVE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointMetric {
    OffensiveAllUtteranceF1,
    StanceAllPairsMacroF1,
}

impl CheckpointMetric {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Offensive => CheckpointMetric::OffensiveAllUtteranceF1,
            Task::Stance => CheckpointMetric::StanceAllPairsMacroF1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub checkpoint_metric: CheckpointMetric,
    pub train_embeddings: bool,
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        Self {
            learning_rate: 2e-5,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            checkpoint_metric: CheckpointMetric::for_task(task),
            train_embeddings: true,
        }
    }

    pub fn validate(&self) -> Result<(), NbowError> {
        let bad = |m: &str| Err(NbowError::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("invalid optimizer moments");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev metric.
    pub model: NbowModel,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

/// Per-class example counts from a training split, floored at 1.
pub fn class_counts(examples: &[LabeledExample], n_classes: usize) -> Vec<u64> {
    let mut c = vec![0u64; n_classes];
    for e in examples {
        if e.label < n_classes {
            c[e.label] += 1;
        }
    }
    c.into_iter().map(|v| v.max(1)).collect()
}

/// Vocabulary from the training examples, then a freshly initialized model.
pub fn build_model(
    train: &[LabeledExample],
    cfg: &ModelConfig,
    pretrained: Option<&PretrainedVectors>,
    seed: u64,
) -> Result<NbowModel, NbowError> {
    let vocab = build_vocab(train.iter().flat_map(|e| e.token_lists()), cfg.min_count);
    NbowModel::new(cfg, &vocab, pretrained, seed)
}

/// Dev-set value of the checkpoint metric.
pub fn evaluate(model: &NbowModel, dev: &[(Encoded, usize)], metric: CheckpointMetric) -> Result<f64, NbowError> {
    let mut preds = Vec::with_capacity(dev.len());
    let golds: Vec<usize> = dev.iter().map(|(_, y)| *y).collect();
    for (enc, _) in dev {
        let p = model.predict_proba(enc)?;
        preds.push(argmax(&p));
    }
    let value = match metric {
        CheckpointMetric::OffensiveAllUtteranceF1 => f1(&preds, &golds, OFFENSIVE).map(|r| r.f1),
        CheckpointMetric::StanceAllPairsMacroF1 => macro_f1_of(&preds, &golds, 3).map(|(_, m)| m),
    };
    value.map_err(|e| NbowError::InvalidConfig(e.to_string()))
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch Adam training with a per-epoch dev evaluation; keeps the best
/// epoch (first one on ties). Deterministic for a fixed seed.
pub fn train(
    mut model: NbowModel,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    cfg: &TrainConfig,
    loss: &LossConfig,
) -> Result<TrainOutcome, NbowError> {
    cfg.validate()?;
    loss.validate(model.task.n_classes())?;
    if train.is_empty() {
        return Err(NbowError::EmptySplit("train"));
    }
    if dev.is_empty() {
        return Err(NbowError::EmptySplit("dev"));
    }
    let n_classes = model.task.n_classes();
    if let Some(e) = train.iter().chain(dev).find(|e| e.label >= n_classes || e.task() != model.task) {
        return Err(NbowError::InvalidConfig(format!("example from {:?} does not fit the {} task", e.origin, model.task)));
    }
    let train_enc: Vec<(Encoded, usize)> = train.iter().map(|e| (model.encode(&e.input), e.label)).collect();
    let dev_enc: Vec<(Encoded, usize)> = dev.iter().map(|e| (model.encode(&e.input), e.label)).collect();
    let mut opt = Adam::new(&model, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_enc.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, NbowModel)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&Encoded, usize)> = chunk.iter().map(|&i| (&train_enc[i].0, train_enc[i].1)).collect();
            let (l, grads) = model.batch_loss_and_grads(&batch, loss, cfg.train_embeddings)?;
            if !l.is_finite() {
                return Err(NbowError::DivergenceDetected { epoch, step: step + 1 });
            }
            opt.step(&mut model, &grads);
            loss_sum += l;
            batches += 1;
        }
        let dev_metric = evaluate(&model, &dev_enc, cfg.checkpoint_metric)?;
        log::debug!("epoch {epoch}: train loss {:.6}, dev {:.4}", loss_sum / batches as f64, dev_metric);
        history.push(EpochStats { epoch, train_loss: loss_sum / batches as f64, dev_metric });
        if best.as_ref().is_none_or(|(m, _, _)| dev_metric > *m) {
            best = Some((dev_metric, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, best_epoch, history })
}

/// Seeded 70/15/15 partition with sizes `floor(0.7n)`, `floor(0.15n)` and the
/// remainder.
pub fn split_70_15_15<T: Clone>(items: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>), NbowError> {
    if items.len() < 10 {
        return Err(NbowError::InvalidConfig(format!("need at least 10 threads to split, got {}", items.len())));
    }
    let n = items.len();
    let n_train = n * 70 / 100;
    let n_dev = n * 15 / 100;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok((pick(&idx[..n_train]), pick(&idx[n_train..n_train + n_dev]), pick(&idx[n_train + n_dev..])))
}

/// Training examples for `task` from threads with aggregated gold labels.
/// Offensive: one per labeled utterance. Stance: one per labeled pair `(j, i)`,
/// `j < i`.
pub fn examples_from_gold(
    threads: &[Thread],
    gold: &HashMap<String, AggregatedLabels>,
    task: Task,
    lowercase: bool,
) -> Vec<LabeledExample> {
    let mut out = Vec::new();
    for t in threads {
        let Some(labels) = gold.get(&t.id) else { continue };
        let toks: Vec<Vec<String>> = t.utterances.iter().map(|u| tokenize(&u.text, lowercase)).collect();
        for item in &labels.items {
            let i = item.idx;
            if i == 0 || i > toks.len() {
                continue;
            }
            match task {
                Task::Offensive => out.push(LabeledExample {
                    input: ExampleInput::Utterance(toks[i - 1].clone()),
                    label: item.off as usize,
                    origin: Origin { thread: t.id.clone(), index: i, earlier: None },
                }),
                Task::Stance => {
                    for (&j, s) in &item.stance {
                        if j == 0 || j >= i {
                            continue;
                        }
                        out.push(LabeledExample {
                            input: ExampleInput::Pair { earlier: toks[j - 1].clone(), later: toks[i - 1].clone() },
                            label: s.index(),
                            origin: Origin { thread: t.id.clone(), index: i, earlier: Some(j) },
                        });
                    }
                }
            }
        }
    }
    out
}
