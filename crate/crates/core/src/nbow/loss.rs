//! Cross-entropy, weighted cross-entropy and class-balanced focal loss.
//!
//! All losses take raw logits `z` and a class index `y` and return the
//! per-example value together with `dL/dz`.

use serde::{Deserialize, Serialize};

use super::NbowError;

/// Probability clamp used inside the focal term.
pub const FOCAL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossConfig {
    CrossEntropy,
    WeightedCrossEntropy { weights: Vec<f64> },
    ClassBalancedFocal { beta: f64, gamma: f64, class_counts: Vec<u64> },
}

impl LossConfig {
    /// Stance weights (neutral, agree, disagree).
    pub fn stance_weighted() -> Self {
        LossConfig::WeightedCrossEntropy { weights: vec![1.0, 100.0, 100.0] }
    }

    /// beta = 0.9999, gamma = 1.0 with the given per-class counts.
    pub fn class_balanced_focal(class_counts: Vec<u64>) -> Self {
        LossConfig::ClassBalancedFocal { beta: 0.9999, gamma: 1.0, class_counts }
    }

    pub fn validate(&self, n_classes: usize) -> Result<(), NbowError> {
        let bad = |m: &str| Err(NbowError::InvalidConfig(m.to_string()));
        match self {
            LossConfig::CrossEntropy => Ok(()),
            LossConfig::WeightedCrossEntropy { weights } => {
                if weights.len() != n_classes {
                    return bad("one weight per class required");
                }
                if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return bad("class weights must be positive");
                }
                Ok(())
            }
            LossConfig::ClassBalancedFocal { beta, gamma, class_counts } => {
                if !(0.0..1.0).contains(beta) {
                    return bad("beta must lie in [0, 1)");
                }
                if !(*gamma >= 0.0) || !gamma.is_finite() {
                    return bad("gamma must be non-negative");
                }
                if class_counts.len() != n_classes || class_counts.contains(&0) {
                    return bad("class counts must be >= 1 for every class");
                }
                Ok(())
            }
        }
    }

    pub fn loss(&self, z: &[f64], y: usize) -> f64 {
        self.loss_and_grad(z, y).0
    }

    pub fn loss_and_grad(&self, z: &[f64], y: usize) -> (f64, Vec<f64>) {
        match self {
            LossConfig::CrossEntropy => ce_and_grad(z, y, 1.0),
            LossConfig::WeightedCrossEntropy { weights } => ce_and_grad(z, y, weights[y]),
            LossConfig::ClassBalancedFocal { beta, gamma, class_counts } => {
                let r = class_balanced_weight(*beta, class_counts[y]);
                focal_and_grad(z, y, *gamma, r)
            }
        }
    }
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    log_softmax(z).into_iter().map(f64::exp).collect()
}

pub fn cross_entropy(z: &[f64], y: usize) -> f64 {
    -log_softmax(z)[y]
}

pub fn weighted_cross_entropy(z: &[f64], y: usize, weights: &[f64]) -> f64 {
    weights[y] * cross_entropy(z, y)
}

fn ce_and_grad(z: &[f64], y: usize, w: f64) -> (f64, Vec<f64>) {
    let ls = log_softmax(z);
    let grad = ls
        .iter()
        .enumerate()
        .map(|(m, l)| w * (l.exp() - if m == y { 1.0 } else { 0.0 }))
        .collect();
    (-w * ls[y], grad)
}

/// Effective-number reweighting `(1 - beta) / (1 - beta^n)`.
pub fn class_balanced_weight(beta: f64, n: u64) -> f64 {
    let pow = match i32::try_from(n) {
        Ok(k) => beta.powi(k),
        Err(_) => beta.powf(n as f64),
    };
    (1.0 - beta) / (1.0 - pow)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-class sigmoid probability of the correct side: `sigmoid(z_m)` for the
/// gold class, `sigmoid(-z_m)` for the others, clamped to `[eps, 1 - eps]`.
fn side_probs(z: &[f64], y: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
    z.iter().enumerate().map(move |(m, &zm)| {
        let sign = if m == y { 1.0 } else { -1.0 };
        (sign, sigmoid(sign * zm).clamp(FOCAL_EPS, 1.0 - FOCAL_EPS))
    })
}

/// `-sum_m (1 - p_m)^gamma log p_m`.
pub fn focal_term(z: &[f64], y: usize, gamma: f64) -> f64 {
    -side_probs(z, y).map(|(_, p)| (1.0 - p).powf(gamma) * p.ln()).sum::<f64>()
}

pub fn cb_focal(z: &[f64], y: usize, beta: f64, gamma: f64, n_y: u64) -> f64 {
    class_balanced_weight(beta, n_y) * focal_term(z, y, gamma)
}

/// One-vs-rest sigmoid cross-entropy with a one-hot target.
pub fn sigmoid_cross_entropy(z: &[f64], y: usize) -> f64 {
    focal_term(z, y, 0.0)
}

fn focal_and_grad(z: &[f64], y: usize, gamma: f64, r: f64) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(z.len());
    for (sign, p) in side_probs(z, y) {
        let q = 1.0 - p;
        let qg = q.powf(gamma);
        loss -= qg * p.ln();
        // d/dz of -(1-p)^g log p with dp/dz = sign * p (1 - p)
        grad.push(-r * sign * (q * qg - gamma * p * qg * p.ln()));
    }
    (r * loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn ce_uniform() {
        assert!((cross_entropy(&[0.0, 0.0], 0) - LN2).abs() < 1e-15);
        let w = weighted_cross_entropy(&[0.0, 0.0, 0.0], 1, &[1.0, 100.0, 100.0]);
        assert!((w - 100.0 * 3f64.ln()).abs() < 1e-12);
        assert!((w - 109.861).abs() < 1e-3);
    }

    #[test]
    fn ce_grad_at_uniform() {
        let (_, g) = LossConfig::CrossEntropy.loss_and_grad(&[0.0, 0.0], 0);
        assert_eq!(g, vec![-0.5, 0.5]);
    }

    #[test]
    fn cb_focal_zero_logits() {
        let v = cb_focal(&[0.0, 0.0], 0, 0.0, 0.0, 1);
        assert!((v - 2.0 * LN2).abs() < 1e-12);
    }

    #[test]
    fn reweight_two_thirds() {
        assert_eq!(class_balanced_weight(0.5, 2), 2.0 / 3.0);
        assert_eq!(class_balanced_weight(0.0, 7), 1.0);
    }

    #[test]
    fn stable_at_large_logits() {
        let v = cross_entropy(&[1000.0, -1000.0], 1);
        assert!((v - 2000.0).abs() < 1e-9);
        let f = cb_focal(&[800.0, -800.0, 0.0], 1, 0.9999, 1.0, 10);
        assert!(f.is_finite());
    }

    #[test]
    fn zero_gamma_focal_grad_is_sigmoid_ce_grad() {
        let z = [0.3, -1.2, 2.5];
        for y in 0..3 {
            let (_, g) = focal_and_grad(&z, y, 0.0, 1.0);
            for (m, gm) in g.iter().enumerate() {
                let target = if m == y { 1.0 } else { 0.0 };
                assert!((gm - (sigmoid(z[m]) - target)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn validation() {
        assert!(LossConfig::stance_weighted().validate(3).is_ok());
        assert!(LossConfig::stance_weighted().validate(2).is_err());
        let bad_beta = LossConfig::ClassBalancedFocal { beta: 1.0, gamma: 1.0, class_counts: vec![1, 1] };
        assert!(bad_beta.validate(2).is_err());
        let zero_count = LossConfig::ClassBalancedFocal { beta: 0.5, gamma: 1.0, class_counts: vec![0, 1] };
        assert!(zero_count.validate(2).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn logits() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-8.0f64..8.0, 3)
        }

        proptest! {
            #[test]
            fn unit_weights_equal_ce(z in logits(), y in 0usize..3) {
                let a = weighted_cross_entropy(&z, y, &[1.0, 1.0, 1.0]);
                prop_assert!((a - cross_entropy(&z, y)).abs() <= 1e-12);
            }

            #[test]
            fn beta_zero_is_focal_term(z in logits(), y in 0usize..3, gamma in 0.0f64..3.0, n in 1u64..1000) {
                prop_assert!((cb_focal(&z, y, 0.0, gamma, n) - focal_term(&z, y, gamma)).abs() <= 1e-12);
                prop_assert!((cb_focal(&z, y, 0.0, 0.0, n) - sigmoid_cross_entropy(&z, y)).abs() <= 1e-12);
            }

            #[test]
            fn reweight_non_increasing_in_count(beta in 0.01f64..0.999, n in 1u64..5000) {
                prop_assert!(class_balanced_weight(beta, n + 1) <= class_balanced_weight(beta, n));
            }
        }
    }
}
