use ndarray::{Array1, Array2, ArrayViewMut1, Zip};

use super::mlp::Dense;
use super::model::{Gradients, NbowModel};

/// Adam with lazily updated embedding rows: rows absent from a batch keep
/// their moments untouched.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    mlp_m: Vec<Dense>,
    mlp_v: Vec<Dense>,
    emb_m: Array2<f64>,
    emb_v: Array2<f64>,
    score_m: Array1<f64>,
    score_v: Array1<f64>,
}

fn step_slice(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], c: &StepConsts) {
    for i in 0..p.len() {
        m[i] = c.b1 * m[i] + (1.0 - c.b1) * g[i];
        v[i] = c.b2 * v[i] + (1.0 - c.b2) * g[i] * g[i];
        let mh = m[i] / c.bc1;
        let vh = v[i] / c.bc2;
        p[i] -= c.lr * mh / (vh.sqrt() + c.eps);
    }
}

struct StepConsts {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
}

fn row_step(mut p: ArrayViewMut1<f64>, g: &Array1<f64>, mut m: ArrayViewMut1<f64>, mut v: ArrayViewMut1<f64>, c: &StepConsts) {
    Zip::from(&mut p).and(g).and(&mut m).and(&mut v).for_each(|p, &g, m, v| {
        *m = c.b1 * *m + (1.0 - c.b1) * g;
        *v = c.b2 * *v + (1.0 - c.b2) * g * g;
        *p -= c.lr * (*m / c.bc1) / ((*v / c.bc2).sqrt() + c.eps);
    });
}

impl Adam {
    pub fn new(model: &NbowModel, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = |l: &Dense| Dense::zeros(l.input_dim(), l.output_dim());
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            mlp_m: model.mlp.layers.iter().map(zeros).collect(),
            mlp_v: model.mlp.layers.iter().map(zeros).collect(),
            emb_m: Array2::zeros(model.embeddings.vectors.raw_dim()),
            emb_v: Array2::zeros(model.embeddings.vectors.raw_dim()),
            score_m: Array1::zeros(model.token_scores.len()),
            score_v: Array1::zeros(model.token_scores.len()),
        }
    }

    pub fn step(&mut self, model: &mut NbowModel, grads: &Gradients) {
        self.t = self.t.saturating_add(1);
        let c = StepConsts {
            lr: self.lr,
            b1: self.beta1,
            b2: self.beta2,
            eps: self.eps,
            bc1: 1.0 - self.beta1.powi(self.t),
            bc2: 1.0 - self.beta2.powi(self.t),
        };
        for (k, layer) in model.mlp.layers.iter_mut().enumerate() {
            let g = &grads.mlp.layers[k];
            step_slice(
                layer.weight.as_slice_mut().expect("standard layout"),
                g.weight.as_slice().expect("standard layout"),
                self.mlp_m[k].weight.as_slice_mut().expect("standard layout"),
                self.mlp_v[k].weight.as_slice_mut().expect("standard layout"),
                &c,
            );
            step_slice(
                layer.bias.as_slice_mut().expect("standard layout"),
                g.bias.as_slice().expect("standard layout"),
                self.mlp_m[k].bias.as_slice_mut().expect("standard layout"),
                self.mlp_v[k].bias.as_slice_mut().expect("standard layout"),
                &c,
            );
        }
        for (&row, g) in &grads.embeddings {
            row_step(
                model.embeddings.vectors.row_mut(row),
                g,
                self.emb_m.row_mut(row),
                self.emb_v.row_mut(row),
                &c,
            );
        }
        for (&i, &g) in &grads.token_scores {
            step_slice(
                std::slice::from_mut(&mut model.token_scores[i]),
                &[g],
                std::slice::from_mut(&mut self.score_m[i]),
                std::slice::from_mut(&mut self.score_v[i]),
                &c,
            );
        }
    }
}
