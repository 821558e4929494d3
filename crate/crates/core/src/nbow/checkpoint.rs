//! JSON checkpoint container. Floats are written with round-trip precision so
//! a save/load cycle reproduces every parameter bit for bit.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::embedding::{EmbeddingTable, OovPolicy};
use super::mlp::{Dense, MlpParams};
use super::model::{NbowModel, Pooling};
use super::NbowError;
use crate::scorer::Task;

pub const FORMAT: &str = "convsafe-nbow";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    task: Task,
    dim: usize,
    pooling: Pooling,
    lowercase: bool,
    oov: OovPolicy,
    vocab: Vec<String>,
    /// Row-major |V| x dim.
    embeddings: Vec<f64>,
    token_scores: Vec<f64>,
    layers: Vec<LayerRecord>,
}

fn row_major(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

pub fn save<W: Write>(model: &NbowModel, w: W) -> Result<(), NbowError> {
    let ck = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        task: model.task,
        dim: model.dim(),
        pooling: model.pooling,
        lowercase: model.lowercase,
        oov: model.embeddings.oov,
        vocab: model.embeddings.tokens().to_vec(),
        embeddings: row_major(&model.embeddings.vectors),
        token_scores: model.token_scores.to_vec(),
        layers: model
            .mlp
            .layers
            .iter()
            .map(|l| LayerRecord {
                rows: l.output_dim(),
                cols: l.input_dim(),
                weight: row_major(&l.weight),
                bias: l.bias.to_vec(),
            })
            .collect(),
    };
    if ck.embeddings.iter().chain(&ck.token_scores).any(|v| !v.is_finite()) {
        return Err(NbowError::Checkpoint("refusing to save non-finite parameters".into()));
    }
    serde_json::to_writer(w, &ck).map_err(|e| NbowError::Checkpoint(e.to_string()))
}

pub fn load<R: Read>(r: R) -> Result<NbowModel, NbowError> {
    let ck: Checkpoint = serde_json::from_reader(r).map_err(|e| NbowError::Checkpoint(e.to_string()))?;
    if ck.format != FORMAT || ck.version != VERSION {
        return Err(NbowError::Checkpoint(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
    }
    let shape_err = |what: &str| NbowError::Checkpoint(format!("{what} has the wrong size"));
    let vectors = Array2::from_shape_vec((ck.vocab.len(), ck.dim), ck.embeddings).map_err(|_| shape_err("embeddings"))?;
    if ck.token_scores.len() != ck.vocab.len() {
        return Err(shape_err("token_scores"));
    }
    let embeddings = EmbeddingTable::from_parts(ck.vocab, vectors, ck.oov)?;
    let layers: Vec<Dense> = ck
        .layers
        .into_iter()
        .map(|l| {
            Ok(Dense {
                weight: Array2::from_shape_vec((l.rows, l.cols), l.weight).map_err(|_| shape_err("layer weight"))?,
                bias: Array1::from(l.bias),
            })
        })
        .collect::<Result<_, NbowError>>()?;
    let layers: [Dense; 3] = layers.try_into().map_err(|_| NbowError::Checkpoint("expected 3 layers".into()))?;
    let mlp = MlpParams { layers };
    mlp.validate()?;
    let expected_in = match ck.task {
        Task::Offensive => ck.dim,
        Task::Stance => 4 * ck.dim,
    };
    if mlp.input_dim() != expected_in || mlp.n_classes() != ck.task.n_classes() {
        return Err(NbowError::Checkpoint("layer sizes do not match the task".into()));
    }
    Ok(NbowModel {
        task: ck.task,
        pooling: ck.pooling,
        lowercase: ck.lowercase,
        embeddings,
        token_scores: Array1::from(ck.token_scores),
        mlp,
    })
}

pub fn save_path(model: &NbowModel, path: &std::path::Path) -> Result<(), NbowError> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    save(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_path(path: &std::path::Path) -> Result<NbowModel, NbowError> {
    load(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nbow::model::ModelConfig;

    #[test]
    fn bit_exact_round_trip() {
        for task in [Task::Offensive, Task::Stance] {
            let mut cfg = ModelConfig::new(task);
            cfg.dim = 7;
            cfg.hidden = (5, 3);
            cfg.pooling = Pooling::LearnedWeights;
            cfg.oov = OovPolicy::RandomVector { seed: 4 };
            let vocab: Vec<String> = ["x", "y", "zz"].iter().map(|s| s.to_string()).collect();
            let mut m = NbowModel::new(&cfg, &vocab, None, 11).unwrap();
            m.token_scores[2] = 0.1 + 0.2;
            m.mlp.layers[1].bias[0] = std::f64::consts::PI / 3.0;
            let mut buf = Vec::new();
            save(&m, &mut buf).unwrap();
            let back = load(buf.as_slice()).unwrap();
            assert_eq!(back, m);
            let bits = |m: &NbowModel| m.embeddings.vectors.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back), bits(&m));
        }
    }

    #[test]
    fn rejects_truncated_tables() {
        let cfg = ModelConfig { dim: 3, hidden: (2, 2), ..ModelConfig::new(Task::Offensive) };
        let m = NbowModel::new(&cfg, &["a".to_string()], None, 0).unwrap();
        let mut buf = Vec::new();
        save(&m, &mut buf).unwrap();
        let mut v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        v["embeddings"].as_array_mut().unwrap().pop();
        assert!(load(serde_json::to_vec(&v).unwrap().as_slice()).is_err());
    }
}
