use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NbowError;

/// Affine layer `W x + b` with `W` stored as (out, in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Array2::zeros((output, input)), bias: Array1::zeros(output) }
    }

    /// He-normal weights, zero bias.
    pub fn random<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let std = (2.0 / input.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        Self {
            weight: Array2::from_shape_simple_fn((output, input), || normal.sample(rng)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        self.weight.dot(x) + &self.bias
    }
}

/// Three dense layers, ReLU after the first two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: [Dense; 3],
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre1: Array1<f64>,
    pub act1: Array1<f64>,
    pub pre2: Array1<f64>,
    pub act2: Array1<f64>,
    pub logits: Array1<f64>,
}

impl ForwardCache {
    /// Which hidden units are active; finite-difference checks use this to
    /// avoid straddling a ReLU kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.pre1.iter().chain(self.pre2.iter()).map(|v| *v > 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: [Dense; 3],
}

impl MlpGrads {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Self { layers: p.layers.clone().map(|l| Dense::zeros(l.input_dim(), l.output_dim())) }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight *= s;
            l.bias *= s;
        }
    }
}

fn relu(v: &Array1<f64>) -> Array1<f64> {
    v.mapv(|x| x.max(0.0))
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
}

impl MlpParams {
    /// Layer sizes `input -> hidden.0 -> hidden.1 -> classes`.
    pub fn random<R: Rng>(input: usize, hidden: (usize, usize), classes: usize, rng: &mut R) -> Self {
        Self {
            layers: [
                Dense::random(input, hidden.0, rng),
                Dense::random(hidden.0, hidden.1, rng),
                Dense::random(hidden.1, classes, rng),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), NbowError> {
        for w in self.layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(NbowError::DimensionMismatch { expected: w[0].output_dim(), found: w[1].input_dim() });
            }
        }
        for l in &self.layers {
            if l.bias.len() != l.output_dim() {
                return Err(NbowError::DimensionMismatch { expected: l.output_dim(), found: l.bias.len() });
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.layers[2].output_dim()
    }

    pub fn forward_cached(&self, x: &Array1<f64>) -> Result<ForwardCache, NbowError> {
        if x.len() != self.input_dim() {
            return Err(NbowError::DimensionMismatch { expected: self.input_dim(), found: x.len() });
        }
        let pre1 = self.layers[0].apply(x);
        let act1 = relu(&pre1);
        let pre2 = self.layers[1].apply(&act1);
        let act2 = relu(&pre2);
        let logits = self.layers[2].apply(&act2);
        Ok(ForwardCache { pre1, act1, pre2, act2, logits })
    }

    /// Accumulates parameter gradients for one example into `grads` and
    /// returns `dL/dx`.
    pub fn backward(&self, x: &Array1<f64>, cache: &ForwardCache, dz: &Array1<f64>, grads: &mut MlpGrads) -> Array1<f64> {
        grads.layers[2].weight += &outer(dz, &cache.act2);
        grads.layers[2].bias += dz;
        let mut d2 = self.layers[2].weight.t().dot(dz);
        d2.zip_mut_with(&cache.pre2, |g, p| if *p <= 0.0 { *g = 0.0 });
        grads.layers[1].weight += &outer(&d2, &cache.act1);
        grads.layers[1].bias += &d2;
        let mut d1 = self.layers[1].weight.t().dot(&d2);
        d1.zip_mut_with(&cache.pre1, |g, p| if *p <= 0.0 { *g = 0.0 });
        grads.layers[0].weight += &outer(&d1, x);
        grads.layers[0].bias += &d1;
        self.layers[0].weight.t().dot(&d1)
    }
}

/// `W3 relu(W2 relu(W1 x + b1) + b2) + b3`.
pub fn forward(x: &Array1<f64>, params: &MlpParams) -> Result<Array1<f64>, NbowError> {
    Ok(params.forward_cached(x)?.logits)
}
