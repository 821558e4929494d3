use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NbowError;

/// Index reserved for tokens outside the vocabulary. Its row is never trained.
pub const UNK: usize = 0;
pub const UNK_TOKEN: &str = "<unk>";

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Unknown tokens share one fixed random vector drawn from this seed.
    RandomVector { seed: u64 },
    ZeroVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pub vectors: Array2<f64>,
    pub oov: OovPolicy,
}

impl EmbeddingTable {
    /// Builds a table over `vocab` (deduplicated, `<unk>` prepended) with
    /// N(0, sigma^2) rows. Rows found in `pretrained` are copied instead.
    pub fn new(
        vocab: &[String],
        dim: usize,
        sigma: f64,
        oov: OovPolicy,
        pretrained: Option<&PretrainedVectors>,
        seed: u64,
    ) -> Result<Self, NbowError> {
        if dim == 0 {
            return Err(NbowError::InvalidConfig("embedding dimension must be positive".into()));
        }
        if let Some(p) = pretrained {
            if p.dim != dim {
                return Err(NbowError::DimensionMismatch { expected: dim, found: p.dim });
            }
        }
        let mut tokens = vec![UNK_TOKEN.to_string()];
        let mut index = HashMap::new();
        index.insert(UNK_TOKEN.to_string(), UNK);
        for t in vocab {
            if !index.contains_key(t) {
                index.insert(t.clone(), tokens.len());
                tokens.push(t.clone());
            }
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| NbowError::InvalidConfig(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = Array2::from_shape_simple_fn((tokens.len(), dim), || normal.sample(&mut rng));
        if let Some(p) = pretrained {
            for (i, t) in tokens.iter().enumerate().skip(1) {
                if let Some(v) = p.vectors.get(t) {
                    vectors.row_mut(i).assign(&Array1::from(v.clone()));
                }
            }
        }
        let mut table = Self { tokens, index, vectors, oov };
        table.reset_unk();
        Ok(table)
    }

    pub(crate) fn from_parts(tokens: Vec<String>, vectors: Array2<f64>, oov: OovPolicy) -> Result<Self, NbowError> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) || tokens.len() != vectors.nrows() {
            return Err(NbowError::Checkpoint("vocabulary must start with <unk> and match the table".into()));
        }
        let index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != tokens.len() {
            return Err(NbowError::Checkpoint("duplicate vocabulary entries".into()));
        }
        Ok(Self { tokens, index, vectors, oov })
    }

    fn reset_unk(&mut self) {
        let dim = self.dim();
        let row = match self.oov {
            OovPolicy::ZeroVector => Array1::zeros(dim),
            OovPolicy::RandomVector { seed } => {
                let normal = Normal::new(0.0, 0.1).expect("valid sigma");
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Array1::from_shape_simple_fn(dim, || normal.sample(&mut rng))
            }
        };
        self.vectors.row_mut(UNK).assign(&row);
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }
}

/// Arithmetic mean of the token vectors. An empty utterance yields the zero
/// vector and `true` in the second slot.
pub fn encode_utterance<S: AsRef<str>>(tokens: &[S], emb: &EmbeddingTable) -> (Array1<f64>, bool) {
    let mut h = Array1::zeros(emb.dim());
    if tokens.is_empty() {
        return (h, true);
    }
    for t in tokens {
        h += &emb.vectors.row(emb.lookup(t.as_ref()));
    }
    h /= tokens.len() as f64;
    (h, false)
}

/// Vocabulary sorted by descending frequency, then lexicographically.
pub fn build_vocab<'a, I>(token_lists: I, min_count: usize) -> Vec<String>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for list in token_lists {
        for t in list {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut v: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    v.into_iter().map(|(t, _)| t.to_string()).collect()
}

/// Vectors read from the whitespace-separated `token v1 ... vd` text format.
#[derive(Debug, Clone, Default)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl PretrainedVectors {
    pub fn read<R: BufRead>(reader: R) -> Result<Self, NbowError> {
        let mut out = PretrainedVectors::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let values = values.map_err(|e| NbowError::InvalidConfig(format!("embedding line {}: {e}", n + 1)))?;
            if out.dim == 0 {
                out.dim = values.len();
            }
            if values.len() != out.dim || values.is_empty() {
                return Err(NbowError::DimensionMismatch { expected: out.dim, found: values.len() });
            }
            out.vectors.insert(token.to_string(), values);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        let vocab: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        EmbeddingTable::new(&vocab, 4, 1.0, OovPolicy::ZeroVector, None, 3).unwrap()
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("Hello, World! it's <URL>", true), vec!["hello", "world", "it", "s", "url"]);
        assert_eq!(tokenize("ABC", false), vec!["ABC"]);
    }

    #[test]
    fn mean_of_two() {
        let t = table();
        let (h, empty) = encode_utterance(&["a", "b"], &t);
        assert!(!empty);
        let expect = (&t.vectors.row(1) + &t.vectors.row(2)) / 2.0;
        assert_eq!(h, expect);
    }

    #[test]
    fn single_token_identity() {
        let t = table();
        assert_eq!(encode_utterance(&["c"], &t).0, t.vectors.row(3).to_owned());
    }

    #[test]
    fn empty_flagged() {
        let t = table();
        let (h, empty) = encode_utterance::<&str>(&[], &t);
        assert!(empty);
        assert!(h.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mean_matches_straight_line_oracle() {
        let t = table();
        let toks = ["e", "a", "zzz", "c", "a"];
        let (h, _) = encode_utterance(&toks, &t);
        for k in 0..4 {
            let mut s = 0.0;
            for tok in toks {
                let row = match tok {
                    "a" => 1,
                    "c" => 3,
                    "e" => 5,
                    _ => 0,
                };
                s += t.vectors[[row, k]];
            }
            assert!((h[k] - s / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oov_policies() {
        let vocab = vec!["x".to_string()];
        let z = EmbeddingTable::new(&vocab, 3, 0.1, OovPolicy::ZeroVector, None, 1).unwrap();
        assert!(z.vectors.row(UNK).iter().all(|v| *v == 0.0));
        let r1 = EmbeddingTable::new(&vocab, 3, 0.1, OovPolicy::RandomVector { seed: 5 }, None, 1).unwrap();
        let r2 = EmbeddingTable::new(&vocab, 3, 0.1, OovPolicy::RandomVector { seed: 5 }, None, 2).unwrap();
        assert_eq!(r1.vectors.row(UNK), r2.vectors.row(UNK));
        assert!(r1.vectors.row(UNK).iter().any(|v| *v != 0.0));
    }

    #[test]
    fn pretrained_rows_copied() {
        let text = "hello 1 2 3\nworld 4 5 6\n";
        let p = PretrainedVectors::read(text.as_bytes()).unwrap();
        let vocab = vec!["world".to_string(), "other".to_string()];
        let t = EmbeddingTable::new(&vocab, 3, 0.1, OovPolicy::ZeroVector, Some(&p), 0).unwrap();
        assert_eq!(t.vectors.row(t.lookup("world")).to_vec(), vec![4.0, 5.0, 6.0]);
        assert!(PretrainedVectors::read("a 1 2\nb 1\n".as_bytes()).is_err());
    }

    #[test]
    fn vocab_order() {
        let lists = [
            vec!["b".to_string(), "a".to_string()],
            vec!["b".to_string(), "c".to_string()],
        ];
        let v = build_vocab(lists.iter().map(|l| l.as_slice()), 1);
        assert_eq!(v, vec!["b", "a", "c"]);
    }
}
