//! Central finite-difference verification of the analytic gradients.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::embedding::{OovPolicy, UNK};
use super::loss::LossConfig;
use super::model::{Encoded, Gradients, ModelConfig, NbowModel, Pooling};
use crate::scorer::Task;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub nets: usize,
    pub seed: u64,
    pub step: f64,
    /// Lower bound on the relative-error denominator so that coordinates with
    /// (near) zero gradient are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { nets: 100, seed: 0, step: 1e-4, floor: 1e-7 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossCheck {
    pub loss: String,
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub per_tensor: BTreeMap<String, f64>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub nets: usize,
    pub step: f64,
    pub losses: Vec<LossCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.losses.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Tensor {
    Weight(usize),
    Bias(usize),
    Embedding,
    TokenScores,
}

impl Tensor {
    fn name(self) -> String {
        match self {
            Tensor::Weight(k) => format!("w{}", k + 1),
            Tensor::Bias(k) => format!("b{}", k + 1),
            Tensor::Embedding => "embeddings".into(),
            Tensor::TokenScores => "token_scores".into(),
        }
    }
}

fn param_mut(m: &mut NbowModel, t: Tensor, i: usize) -> &mut f64 {
    let s = match t {
        Tensor::Weight(k) => m.mlp.layers[k].weight.as_slice_mut(),
        Tensor::Bias(k) => m.mlp.layers[k].bias.as_slice_mut(),
        Tensor::Embedding => m.embeddings.vectors.as_slice_mut(),
        Tensor::TokenScores => m.token_scores.as_slice_mut(),
    };
    &mut s.expect("standard layout")[i]
}

fn analytic(g: &Gradients, t: Tensor, i: usize, dim: usize) -> f64 {
    match t {
        Tensor::Weight(k) => g.mlp.layers[k].weight.as_slice().expect("standard layout")[i],
        Tensor::Bias(k) => g.mlp.layers[k].bias[i],
        Tensor::Embedding => g.embeddings.get(&(i / dim)).map_or(0.0, |r| r[i % dim]),
        Tensor::TokenScores => g.token_scores.get(&i).copied().unwrap_or(0.0),
    }
}

fn batch_logits(m: &NbowModel, batch: &[Encoded]) -> (Vec<Array1<f64>>, Vec<bool>) {
    let mut logits = Vec::with_capacity(batch.len());
    let mut pattern = Vec::new();
    for enc in batch {
        let c = m.forward_encoded(enc).expect("shapes checked by construction");
        pattern.extend(c.relu_pattern());
        logits.push(c.logits);
    }
    (logits, pattern)
}

fn mean_loss(loss: &LossConfig, logits: &[Array1<f64>], labels: &[usize]) -> f64 {
    let s: f64 = logits
        .iter()
        .zip(labels)
        .map(|(z, &y)| loss.loss(z.as_slice().expect("contiguous"), y))
        .sum();
    s / logits.len() as f64
}

/// Compares analytic and finite-difference gradients of each loss on one
/// network and batch. Coordinates whose perturbation changes the ReLU
/// activation pattern are skipped because the loss is not differentiable
/// across that boundary.
pub fn check_network(
    model: &NbowModel,
    batch: &[Encoded],
    labels: &[usize],
    losses: &[(String, LossConfig)],
    step: f64,
    floor: f64,
) -> Vec<LossCheck> {
    let pairs: Vec<(&Encoded, usize)> = batch.iter().zip(labels.iter().copied()).collect();
    let grads: Vec<Gradients> = losses
        .iter()
        .map(|(_, l)| model.batch_loss_and_grads(&pairs, l, true).expect("shapes checked").1)
        .collect();

    let d = model.dim();
    let mut coords: Vec<(Tensor, usize)> = Vec::new();
    for k in 0..3 {
        coords.extend((0..model.mlp.layers[k].weight.len()).map(|i| (Tensor::Weight(k), i)));
        coords.extend((0..model.mlp.layers[k].bias.len()).map(|i| (Tensor::Bias(k), i)));
    }
    let mut used = BTreeSet::new();
    for enc in batch {
        match enc {
            Encoded::Single(a) => used.extend(a.iter().copied()),
            Encoded::Pair(a, b) => used.extend(a.iter().chain(b).copied()),
        }
    }
    used.remove(&UNK);
    for &row in &used {
        coords.extend((0..d).map(|c| (Tensor::Embedding, row * d + c)));
        if model.pooling == Pooling::LearnedWeights {
            coords.push((Tensor::TokenScores, row));
        }
    }

    let (_, base_pattern) = batch_logits(model, batch);
    let mut work = model.clone();
    let mut out: Vec<LossCheck> = losses
        .iter()
        .map(|(name, _)| LossCheck {
            loss: name.clone(),
            max_rel_error: 0.0,
            worst_tensor: String::new(),
            per_tensor: BTreeMap::new(),
            checked: 0,
            skipped_kinks: 0,
        })
        .collect();
    for (t, i) in coords {
        let orig = *param_mut(&mut work, t, i);
        *param_mut(&mut work, t, i) = orig + step;
        let (lp, pp) = batch_logits(&work, batch);
        *param_mut(&mut work, t, i) = orig - step;
        let (lm, pm) = batch_logits(&work, batch);
        *param_mut(&mut work, t, i) = orig;
        let kink = pp != base_pattern || pm != base_pattern;
        for (k, (_, loss)) in losses.iter().enumerate() {
            let check = &mut out[k];
            if kink {
                check.skipped_kinks += 1;
                continue;
            }
            let numeric = (mean_loss(loss, &lp, labels) - mean_loss(loss, &lm, labels)) / (2.0 * step);
            let a = analytic(&grads[k], t, i, d);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            check.checked += 1;
            let slot = check.per_tensor.entry(t.name()).or_insert(0.0);
            *slot = slot.max(rel);
            if rel > check.max_rel_error {
                check.max_rel_error = rel;
                check.worst_tensor = t.name();
            }
        }
    }
    out
}

/// CE, wCE (1, 100, 100) and CB_foc (0.9999, 1.0) with the given counts.
pub fn standard_losses(class_counts: Vec<u64>) -> Vec<(String, LossConfig)> {
    vec![
        ("ce".into(), LossConfig::CrossEntropy),
        ("wce".into(), LossConfig::stance_weighted()),
        ("cb_focal".into(), LossConfig::class_balanced_focal(class_counts)),
    ]
}

/// A random 3-class stance network with embedding dimension `d` and a batch
/// of token-pair inputs over a 12-word vocabulary.
pub fn random_case<R: Rng>(d: usize, hidden: (usize, usize), pooling: Pooling, rng: &mut R) -> (NbowModel, Vec<Encoded>, Vec<usize>) {
    let vocab: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let cfg = ModelConfig {
        task: Task::Stance,
        dim: d,
        hidden,
        pooling,
        oov: OovPolicy::RandomVector { seed: rng.random() },
        init_sigma: 1.0,
        lowercase: true,
        min_count: 1,
    };
    let mut m = NbowModel::new(&cfg, &vocab, None, rng.random()).expect("valid config");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    m.token_scores.mapv_inplace(|_| normal.sample(rng));
    for l in &mut m.mlp.layers {
        l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let mut batch = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..4 {
        let toks = |rng: &mut R| (0..rng.random_range(1..=5)).map(|_| rng.random_range(0..=vocab.len())).collect::<Vec<_>>();
        let a = toks(rng);
        let b = toks(rng);
        batch.push(Encoded::Pair(a, b));
        labels.push(rng.random_range(0..3));
    }
    (m, batch, labels)
}

/// Runs the check over `cfg.nets` random networks (d <= 8, 3 classes) and
/// folds the worst error per loss.
pub fn gradient_check(cfg: &GradCheckConfig) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut acc: Vec<LossCheck> = Vec::new();
    for n in 0..cfg.nets {
        let d = rng.random_range(2..=8);
        let hidden = (rng.random_range(3..=8), rng.random_range(3..=8));
        let pooling = if n % 2 == 0 { Pooling::Mean } else { Pooling::LearnedWeights };
        let (m, batch, labels) = random_case(d, hidden, pooling, &mut rng);
        let counts: Vec<u64> = (0..3).map(|_| rng.random_range(1..=100)).collect();
        let res = check_network(&m, &batch, &labels, &standard_losses(counts), cfg.step, cfg.floor);
        if acc.is_empty() {
            acc = res;
            continue;
        }
        for (a, r) in acc.iter_mut().zip(res) {
            a.checked += r.checked;
            a.skipped_kinks += r.skipped_kinks;
            for (k, v) in r.per_tensor {
                let slot = a.per_tensor.entry(k).or_insert(0.0);
                *slot = slot.max(v);
            }
            if r.max_rel_error > a.max_rel_error {
                a.max_rel_error = r.max_rel_error;
                a.worst_tensor = r.worst_tensor;
            }
        }
    }
    GradCheckReport { nets: cfg.nets, step: cfg.step, losses: acc }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_small_net() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for pooling in [Pooling::Mean, Pooling::LearnedWeights] {
            let (m, batch, labels) = random_case(5, (7, 6), pooling, &mut rng);
            let res = check_network(&m, &batch, &labels, &standard_losses(vec![40, 3, 7]), 1e-4, 1e-7);
            for r in res {
                assert!(r.max_rel_error < 1e-4, "{} {}: {}", r.loss, r.worst_tensor, r.max_rel_error);
                assert!(r.checked > 100);
                assert!(r.per_tensor.contains_key("embeddings"));
            }
        }
    }

    #[test]
    fn offensive_head_too() {
        let vocab: Vec<String> = (0..6).map(|i| format!("t{i}")).collect();
        let cfg = ModelConfig { dim: 4, hidden: (5, 5), init_sigma: 1.0, ..ModelConfig::new(Task::Offensive) };
        let m = NbowModel::new(&cfg, &vocab, None, 2).unwrap();
        let batch = vec![Encoded::Single(vec![1, 2, 3]), Encoded::Single(vec![4, 0, 6])];
        let losses = vec![
            ("ce".to_string(), LossConfig::CrossEntropy),
            ("cb".to_string(), LossConfig::class_balanced_focal(vec![9, 2])),
        ];
        for r in check_network(&m, &batch, &[0, 1], &losses, 1e-4, 1e-7) {
            assert!(r.max_rel_error < 1e-4, "{}: {}", r.loss, r.max_rel_error);
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (m, batch, labels) = random_case(3, (4, 4), Pooling::Mean, &mut rng);
        let pairs: Vec<(&Encoded, usize)> = batch.iter().zip(labels.iter().copied()).collect();
        let (_, mut g) = m.batch_loss_and_grads(&pairs, &LossConfig::CrossEntropy, true).unwrap();
        g.mlp.layers[2].bias[0] += 0.1;
        let mut work = m.clone();
        let h = 1e-4;
        work.mlp.layers[2].bias[0] += h;
        let (lp, _) = batch_logits(&work, &batch);
        work.mlp.layers[2].bias[0] -= 2.0 * h;
        let (lm, _) = batch_logits(&work, &batch);
        let numeric = (mean_loss(&LossConfig::CrossEntropy, &lp, &labels)
            - mean_loss(&LossConfig::CrossEntropy, &lm, &labels))
            / (2.0 * h);
        assert!((numeric - g.mlp.layers[2].bias[0]).abs() > 0.05);
    }
}
