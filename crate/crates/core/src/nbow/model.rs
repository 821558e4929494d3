use std::collections::BTreeMap;

use ndarray::{concatenate, Array1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::{tokenize, EmbeddingTable, OovPolicy, PretrainedVectors, UNK};
use super::loss::{softmax, LossConfig};
use super::mlp::{ForwardCache, MlpGrads, MlpParams};
use super::NbowError;
use crate::scorer::Task;

/// How token vectors are combined into an utterance vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    /// Softmax over a learned scalar per vocabulary entry, within the utterance.
    LearnedWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: Task,
    pub dim: usize,
    pub hidden: (usize, usize),
    pub pooling: Pooling,
    pub oov: OovPolicy,
    pub init_sigma: f64,
    pub lowercase: bool,
    /// Tokens seen fewer times in training map to `<unk>`.
    pub min_count: usize,
}

impl ModelConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            dim: 300,
            hidden: (256, 128),
            pooling: Pooling::Mean,
            oov: OovPolicy::ZeroVector,
            init_sigma: 0.1,
            lowercase: true,
            min_count: 1,
        }
    }
}

/// Stance pairs hold the earlier utterance first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleInput {
    Utterance(Vec<String>),
    Pair { earlier: Vec<String>, later: Vec<String> },
}

/// Position of an example inside its thread (1-based indices).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Origin {
    pub thread: String,
    pub index: usize,
    pub earlier: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub input: ExampleInput,
    pub label: usize,
    pub origin: Origin,
}

impl LabeledExample {
    pub fn task(&self) -> Task {
        match self.input {
            ExampleInput::Utterance(_) => Task::Offensive,
            ExampleInput::Pair { .. } => Task::Stance,
        }
    }

    pub fn token_lists(&self) -> Vec<&[String]> {
        match &self.input {
            ExampleInput::Utterance(t) => vec![t.as_slice()],
            ExampleInput::Pair { earlier, later } => vec![earlier.as_slice(), later.as_slice()],
        }
    }
}

/// An input after vocabulary lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Encoded {
    Single(Vec<usize>),
    Pair(Vec<usize>, Vec<usize>),
}

/// `h_i ⊕ h_j ⊕ (h_i − h_j) ⊕ (h_i ⊙ h_j)`, `h_i` the earlier utterance.
pub fn stance_features(h_i: &Array1<f64>, h_j: &Array1<f64>) -> Result<Array1<f64>, NbowError> {
    if h_i.len() != h_j.len() {
        return Err(NbowError::DimensionMismatch { expected: h_i.len(), found: h_j.len() });
    }
    let diff = h_i - h_j;
    let prod = h_i * h_j;
    Ok(concatenate(Axis(0), &[h_i.view(), h_j.view(), diff.view(), prod.view()]).expect("equal lengths"))
}

#[derive(Debug, Clone)]
struct Pooled {
    h: Array1<f64>,
    /// Per-position weights (all `1/n` under mean pooling).
    weights: Vec<f64>,
}

/// Gradients for one update. Embedding and token-score gradients are sparse.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub mlp: MlpGrads,
    pub embeddings: BTreeMap<usize, Array1<f64>>,
    pub token_scores: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbowModel {
    pub task: Task,
    pub pooling: Pooling,
    pub lowercase: bool,
    pub embeddings: EmbeddingTable,
    /// Per-token pooling scores; unused under mean pooling.
    pub token_scores: Array1<f64>,
    pub mlp: MlpParams,
}

impl NbowModel {
    pub fn new(
        cfg: &ModelConfig,
        vocab: &[String],
        pretrained: Option<&PretrainedVectors>,
        seed: u64,
    ) -> Result<Self, NbowError> {
        if cfg.hidden.0 == 0 || cfg.hidden.1 == 0 {
            return Err(NbowError::InvalidConfig("hidden sizes must be positive".into()));
        }
        let embeddings = EmbeddingTable::new(vocab, cfg.dim, cfg.init_sigma, cfg.oov, pretrained, seed)?;
        let input = match cfg.task {
            Task::Offensive => cfg.dim,
            Task::Stance => 4 * cfg.dim,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mlp = MlpParams::random(input, cfg.hidden, cfg.task.n_classes(), &mut rng);
        Ok(Self {
            task: cfg.task,
            pooling: cfg.pooling,
            lowercase: cfg.lowercase,
            token_scores: Array1::zeros(embeddings.len()),
            embeddings,
            mlp,
        })
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text, self.lowercase)
    }

    pub fn encode(&self, input: &ExampleInput) -> Encoded {
        match input {
            ExampleInput::Utterance(t) => Encoded::Single(self.embeddings.ids(t)),
            ExampleInput::Pair { earlier, later } => {
                Encoded::Pair(self.embeddings.ids(earlier), self.embeddings.ids(later))
            }
        }
    }

    fn pool(&self, ids: &[usize]) -> Pooled {
        let mut h = Array1::zeros(self.dim());
        if ids.is_empty() {
            return Pooled { h, weights: Vec::new() };
        }
        let weights = match self.pooling {
            Pooling::Mean => vec![1.0 / ids.len() as f64; ids.len()],
            Pooling::LearnedWeights => {
                let s: Vec<f64> = ids.iter().map(|&i| self.token_scores[i]).collect();
                softmax(&s)
            }
        };
        for (&id, &w) in ids.iter().zip(&weights) {
            h.scaled_add(w, &self.embeddings.vectors.row(id));
        }
        Pooled { h, weights }
    }

    fn features(&self, enc: &Encoded) -> Result<(Array1<f64>, Vec<Pooled>), NbowError> {
        match (self.task, enc) {
            (Task::Offensive, Encoded::Single(ids)) => {
                let p = self.pool(ids);
                Ok((p.h.clone(), vec![p]))
            }
            (Task::Stance, Encoded::Pair(a, b)) => {
                let (pa, pb) = (self.pool(a), self.pool(b));
                let x = stance_features(&pa.h, &pb.h)?;
                Ok((x, vec![pa, pb]))
            }
            (task, _) => Err(NbowError::InvalidConfig(format!("input shape does not match the {task} task"))),
        }
    }

    pub fn forward_encoded(&self, enc: &Encoded) -> Result<ForwardCache, NbowError> {
        let (x, _) = self.features(enc)?;
        self.mlp.forward_cached(&x)
    }

    pub fn logits(&self, enc: &Encoded) -> Result<Array1<f64>, NbowError> {
        Ok(self.forward_encoded(enc)?.logits)
    }

    pub fn predict_proba(&self, enc: &Encoded) -> Result<Vec<f64>, NbowError> {
        Ok(softmax(self.logits(enc)?.as_slice().expect("contiguous")))
    }

    pub fn predict_text(&self, text: &str) -> Result<Vec<f64>, NbowError> {
        let ids = self.embeddings.ids(&self.tokenize(text));
        self.predict_proba(&Encoded::Single(ids))
    }

    pub fn predict_pair(&self, earlier: &str, later: &str) -> Result<Vec<f64>, NbowError> {
        let a = self.embeddings.ids(&self.tokenize(earlier));
        let b = self.embeddings.ids(&self.tokenize(later));
        self.predict_proba(&Encoded::Pair(a, b))
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            mlp: MlpGrads::zeros_like(&self.mlp),
            embeddings: BTreeMap::new(),
            token_scores: BTreeMap::new(),
        }
    }

    /// Mean loss over the batch, forward only.
    pub fn batch_loss(&self, batch: &[(&Encoded, usize)], loss: &LossConfig) -> Result<f64, NbowError> {
        let mut total = 0.0;
        for (enc, y) in batch {
            let z = self.logits(enc)?;
            total += loss.loss(z.as_slice().expect("contiguous"), *y);
        }
        Ok(total / batch.len().max(1) as f64)
    }

    /// Mean loss over the batch and its exact gradient. Embedding rows (and
    /// pooling scores) are only differentiated when `train_embeddings` is set;
    /// the `<unk>` row is never.
    pub fn batch_loss_and_grads(
        &self,
        batch: &[(&Encoded, usize)],
        loss: &LossConfig,
        train_embeddings: bool,
    ) -> Result<(f64, Gradients), NbowError> {
        let mut grads = self.zero_grads();
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut total = 0.0;
        for (enc, y) in batch {
            let (x, pooled) = self.features(enc)?;
            let cache = self.mlp.forward_cached(&x)?;
            let (l, dz) = loss.loss_and_grad(cache.logits.as_slice().expect("contiguous"), *y);
            total += l;
            let dz = Array1::from(dz) * scale;
            let dx = self.mlp.backward(&x, &cache, &dz, &mut grads.mlp);
            if !train_embeddings {
                continue;
            }
            match enc {
                Encoded::Single(ids) => self.pool_backward(ids, &pooled[0], &dx, &mut grads),
                Encoded::Pair(a, b) => {
                    let d = self.dim();
                    let (hi, hj) = (&pooled[0].h, &pooled[1].h);
                    let blk = |k: usize| dx.slice(ndarray::s![k * d..(k + 1) * d]).to_owned();
                    let (g0, g1, g2, g3) = (blk(0), blk(1), blk(2), blk(3));
                    let dhi = &g0 + &g2 + &(&g3 * hj);
                    let dhj = &g1 - &g2 + &(&g3 * hi);
                    self.pool_backward(a, &pooled[0], &dhi, &mut grads);
                    self.pool_backward(b, &pooled[1], &dhj, &mut grads);
                }
            }
        }
        Ok((total * scale, grads))
    }

    fn pool_backward(&self, ids: &[usize], pooled: &Pooled, dh: &Array1<f64>, grads: &mut Gradients) {
        let d = self.dim();
        for (&id, &w) in ids.iter().zip(&pooled.weights) {
            if id == UNK {
                continue;
            }
            grads
                .embeddings
                .entry(id)
                .or_insert_with(|| Array1::zeros(d))
                .scaled_add(w, dh);
        }
        if self.pooling == Pooling::LearnedWeights {
            let h_dot = pooled.h.dot(dh);
            for (&id, &w) in ids.iter().zip(&pooled.weights) {
                if id == UNK {
                    continue;
                }
                let e_dot = self.embeddings.vectors.row(id).dot(dh);
                *grads.token_scores.entry(id).or_insert(0.0) += w * (e_dot - h_dot);
            }
        }
    }
}
