//! Logit pooling, training-time top-K masking and a deterministic mock encoder.

use crate::error::{Error, Result};
use crate::par;
use crate::sparse::{SparseVector, TermId};
use crate::vocab::{ExpandedVocabulary, HeadMatrix, Normalization};

/// Per-token scores over the expanded vocabulary, row-major `tokens × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    source_id: String,
    width: usize,
    scores: Vec<f64>,
}

impl LogitMatrix {
    pub fn new(source_id: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() {
            return Err(Error::validation("logit matrix needs at least one token row"));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::validation("logit rows differ in width"));
        }
        Self::from_flat(source_id, width, rows.concat())
    }

    pub fn from_flat(source_id: impl Into<String>, width: usize, scores: Vec<f64>) -> Result<Self> {
        if width == 0 || scores.is_empty() || !scores.len().is_multiple_of(width) {
            return Err(Error::validation("logit matrix shape is empty or ragged"));
        }
        if let Some(pos) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite logit at token {} index {}",
                pos / width,
                pos % width
            )));
        }
        Ok(Self {
            source_id: source_id.into(),
            width,
            scores,
        })
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn tokens(&self) -> usize {
        self.scores.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.scores.chunks_exact(self.width)
    }
}

/// `log(1 + relu(x))`.
#[inline]
pub fn activation(x: f64) -> f64 {
    x.max(0.0).ln_1p()
}

/// Max-pools activated logits over token rows into one sparse vector.
pub fn pool(matrix: &LogitMatrix) -> SparseVector {
    let mut pooled = vec![0.0f64; matrix.width];
    for row in matrix.rows() {
        for (acc, &s) in pooled.iter_mut().zip(row) {
            let a = activation(s);
            if a > *acc {
                *acc = a;
            }
        }
    }
    let entries = pooled
        .into_iter()
        .enumerate()
        .filter_map(|(j, w)| {
            let w = w as f32;
            (w > 0.0).then_some((j as TermId, w))
        })
        .collect();
    SparseVector::from_sorted(matrix.source_id.clone(), entries)
}

/// Keeps the `k` highest weights (ties to the lower term id).
pub fn topk_mask(vector: &SparseVector, k: usize) -> Result<SparseVector> {
    if k == 0 {
        return Err(Error::validation("top-K mask needs K >= 1"));
    }
    Ok(vector.top_k(k))
}

/// How the mock encoder turns tokens into hidden features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockStyle {
    /// Seed-stable pseudo-random features in `[-1, 1)` per token, projected by the head.
    HashProjection,
    /// A single hot hidden unit per token selected by hash; logits are that head column plus bias.
    HeadProduct,
}

/// Stand-in for a neural encoder; output depends only on its inputs.
#[derive(Debug, Clone)]
pub struct MockEncoder<'a> {
    vocab: &'a ExpandedVocabulary,
    head: &'a HeadMatrix,
    style: MockStyle,
    norm: Normalization,
}

impl<'a> MockEncoder<'a> {
    pub fn new(vocab: &'a ExpandedVocabulary, head: &'a HeadMatrix, style: MockStyle) -> Result<Self> {
        if head.rows() != vocab.len() {
            return Err(Error::validation(format!(
                "head has {} rows but the vocabulary has {} terms",
                head.rows(),
                vocab.len()
            )));
        }
        if head.cols() == 0 {
            return Err(Error::validation("head has zero hidden width"));
        }
        Ok(Self {
            vocab,
            head,
            style,
            norm: Normalization::default(),
        })
    }

    pub fn with_normalization(mut self, norm: Normalization) -> Self {
        self.norm = norm;
        self
    }

    pub fn vocab(&self) -> &ExpandedVocabulary {
        self.vocab
    }

    pub fn encode(&self, source_id: &str, text: &str) -> Result<LogitMatrix> {
        let tokens: Vec<_> = self.norm.tokens(text).collect();
        if tokens.is_empty() {
            return Err(Error::validation(format!("text {source_id:?} has no tokens")));
        }
        let hidden = self.head.cols();
        let mut scores = Vec::with_capacity(tokens.len() * self.head.rows());
        for tok in &tokens {
            match self.style {
                MockStyle::HashProjection => {
                    scores.extend(self.head.project(&hash_features(tok, hidden)));
                }
                MockStyle::HeadProduct => {
                    let unit = (fnv1a(tok.as_bytes()) % hidden as u64) as usize;
                    scores.extend((0..self.head.rows()).map(|i| self.head.row(i)[unit] + self.head.bias()[i]));
                }
            }
        }
        LogitMatrix::from_flat(source_id, self.head.rows(), scores)
    }

    /// Encodes, pools and optionally top-K masks a batch; order follows input.
    pub fn encode_batch(&self, texts: &[(String, String)], top_k: Option<usize>) -> Result<Vec<SparseVector>> {
        par::try_map(texts, |(id, text)| {
            let v = pool(&self.encode(id, text)?);
            match top_k {
                Some(k) => topk_mask(&v, k),
                None => Ok(v),
            }
        })
    }
}

/// Token hash features: component `j` is splitmix64 of (FNV-1a(token) + j),
/// mapped to `[-1, 1)`.
pub fn hash_features(token: &str, width: usize) -> Vec<f64> {
    let base = fnv1a(token.as_bytes());
    (0..width as u64)
        .map(|j| {
            let bits = splitmix64(base.wrapping_add(j)) >> 11;
            (bits as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
